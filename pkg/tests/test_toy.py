"""Toy network determinism, forward/pooling math, and fixture plumbing."""

import numpy as np
import pytest

from conmerge import (
    ValidationError,
    compute_layer_weights,
    compute_task_vector,
    forward_with_activations,
    hash_embed,
    init_toy_net,
    partition_layers,
    perturb,
    similarity_matrix,
    to_checkpoint,
)
from conmerge.containers import compatible
from conmerge.weights import ActivationSet


class TestInit:
    def test_same_seed_identical_bytes(self):
        a = init_toy_net(3, [4, 6, 4])
        b = init_toy_net(3, [4, 6, 4])
        assert set(a.params) == set(b.params)
        for name in a.params:
            assert a.params[name].tobytes() == b.params[name].tobytes()

    def test_different_seeds_differ(self):
        a = init_toy_net(1, [4, 6, 4])
        b = init_toy_net(2, [4, 6, 4])
        assert any(not np.array_equal(a.params[n], b.params[n]) for n in a.params)

    def test_export_roundtrip_compatible(self, tmp_path):
        from conmerge import read_container, write_container

        net = init_toy_net(5, [4, 8, 4])
        path = tmp_path / "net.st"
        write_container(to_checkpoint(net), path)
        back = read_container(path)
        assert compatible(back, to_checkpoint(net))
        np.testing.assert_array_equal(back.tensors["blocks.0.w"].data, net.params["blocks.0.w"])

    def test_empty_dims_rejected(self):
        with pytest.raises(ValidationError):
            init_toy_net(0, [])
        with pytest.raises(ValidationError):
            init_toy_net(0, [4])

    def test_naming_matches_default_layer_pattern(self):
        net = init_toy_net(7, [4, 6, 6, 4])
        lm = partition_layers(to_checkpoint(net), r"blocks\.(\d+)\.")
        assert lm.num_layers == net.num_layers
        assert lm.assignments["embed"] is None and lm.assignments["head"] is None
        assert all(
            lm.assignments[f"blocks.{l}.w"] == l and lm.assignments[f"blocks.{l}.b"] == l
            for l in range(net.num_layers)
        )


class TestPerturb:
    def test_deltas_double_with_scale(self):
        # holds for any scale, not just powers of two: doubling commutes
        # exactly with float rounding
        net = init_toy_net(1, [4, 6, 4])
        _, d1 = perturb(net, seed=9, scale=0.05)
        _, d2 = perturb(net, seed=9, scale=0.10)
        for name in d1:
            np.testing.assert_array_equal(d2[name], 2.0 * d1[name])

    def test_task_vector_equals_recorded_delta(self):
        # power-of-two scale keeps the float32 addition exact, so the
        # round-tripped difference is the recorded delta bit-for-bit
        net = init_toy_net(2, [4, 6, 4])
        variant, deltas = perturb(net, seed=4, scale=0.0625)
        tv = compute_task_vector(to_checkpoint(net), to_checkpoint(variant))
        for name, delta in deltas.items():
            np.testing.assert_array_equal(tv.deltas[name], delta.ravel())

    def test_different_seeds_different_deltas(self):
        net = init_toy_net(2, [4, 6, 4])
        _, d1 = perturb(net, seed=1, scale=0.05)
        _, d2 = perturb(net, seed=2, scale=0.05)
        assert any(not np.array_equal(d1[n], d2[n]) for n in d1)


class TestForward:
    def test_single_position_pooling_identity(self):
        net = init_toy_net(3, [4, 6, 4])
        tokens = np.ones((1, 4), dtype=np.float32)
        _, pooled = forward_with_activations(net, tokens)
        h = tokens
        for l in range(net.num_layers):
            h = np.tanh(h @ net.params[f"blocks.{l}.w"] + net.params[f"blocks.{l}.b"])
            np.testing.assert_allclose(pooled[l], h[0], atol=1e-6)

    def test_duplicated_rows_pool_like_one(self):
        net = init_toy_net(3, [4, 6, 4])
        one = np.linspace(-1, 1, 4, dtype=np.float32)[None, :]
        dup = np.repeat(one, 3, axis=0)
        _, pooled_one = forward_with_activations(net, one)
        _, pooled_dup = forward_with_activations(net, dup)
        # within one forward pass, pooling over identical rows is exact:
        # every duplicated row yields the same activations, so max == row 0
        h = dup
        for l in range(net.num_layers):
            h = np.tanh(h @ net.params[f"blocks.{l}.w"] + net.params[f"blocks.{l}.b"])
            np.testing.assert_array_equal(pooled_dup[l], h[0])
        # across separately shaped matmuls, equality holds to float32 precision
        for l in pooled_one:
            np.testing.assert_allclose(pooled_one[l], pooled_dup[l], atol=1e-6)

    def test_hand_computed_two_by_two(self):
        net = init_toy_net(0, [2, 2])
        net.params["blocks.0.w"] = np.array([[0.5, -1.0], [0.25, 0.75]], dtype=np.float32)
        net.params["blocks.0.b"] = np.array([0.1, -0.2], dtype=np.float32)
        tokens = np.array([[1.0, 2.0], [-1.0, 0.5]], dtype=np.float32)
        _, pooled = forward_with_activations(net, tokens)
        row0 = np.tanh(np.array([1.0 * 0.5 + 2.0 * 0.25 + 0.1, 1.0 * -1.0 + 2.0 * 0.75 - 0.2]))
        row1 = np.tanh(np.array([-1.0 * 0.5 + 0.5 * 0.25 + 0.1, -1.0 * -1.0 + 0.5 * 0.75 - 0.2]))
        np.testing.assert_allclose(pooled[0], np.maximum(row0, row1), atol=1e-6)

    def test_empty_sequence_rejected(self):
        net = init_toy_net(3, [4, 6, 4])
        with pytest.raises(ValidationError, match="empty sequence"):
            forward_with_activations(net, np.zeros((0, 4)))

    def test_width_mismatch_rejected(self):
        net = init_toy_net(3, [4, 6, 4])
        with pytest.raises(ValidationError, match="width"):
            forward_with_activations(net, np.zeros((2, 5)))


class TestHashEmbed:
    def test_deterministic(self):
        np.testing.assert_array_equal(hash_embed("same query", 8, 1), hash_embed("same query", 8, 1))

    def test_unit_norm(self):
        for dim in (1, 3, 64):
            assert np.linalg.norm(hash_embed("q", dim, 0)) == pytest.approx(1.0, abs=1e-6)

    def test_distinct_queries_not_parallel(self):
        rng = np.random.default_rng(0)
        for i in range(100):
            a = hash_embed(f"query {i}", 16, 0)
            b = hash_embed(f"query {i} variant", 16, 0)
            assert abs(float(a @ b)) < 0.99

    def test_dim_validated(self):
        with pytest.raises(ValidationError):
            hash_embed("q", 0, 0)


class TestActivationDumpIntegration:
    def test_dumps_satisfy_activation_set_invariants_and_feed_weights(self):
        """Pooled toy activations flow into the weight computation with no adapters."""
        queries = [f"question number {i}" for i in range(6)]
        nets = [perturb(init_toy_net(11, [4, 6, 6, 4]), seed=k, scale=0.05)[0] for k in (1, 2)]
        sets = []
        for k, net in enumerate(nets):
            per_layer = {l: [] for l in range(net.num_layers)}
            for q in queries:
                tokens = np.stack([hash_embed(f"{q}|{j}", 4, 0) for j in range(3)])
                _, pooled = forward_with_activations(net, tokens)
                for l, vec in pooled.items():
                    per_layer[l].append(vec)
            sets.append(
                ActivationSet(
                    model_id=f"m{k}",
                    layers={l: np.stack(rows) for l, rows in per_layer.items()},
                    query_ids=list(queries),
                )
            )
        ref = similarity_matrix(np.stack([hash_embed(q, 12, 5) for q in queries]), queries)
        lw = compute_layer_weights(sets, ref)
        assert lw.weights.shape == (2, 3)
        assert np.all((lw.weights > 0) & (lw.weights < 1))
