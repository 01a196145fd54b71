import pytest

from conmerge import make_toy_fixture


@pytest.fixture(scope="session")
def toy_fixture(tmp_path_factory):
    """One shared toy merge scenario: base, 3 variants, activations, reference."""
    root = tmp_path_factory.mktemp("toy")
    config = make_toy_fixture(root, seed=7)
    return {"dir": root, "config": config}
