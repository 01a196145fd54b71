"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 1,
ContainerFormatError / EndpointError (and plain OSError) -> 2.
"""


class ValidationError(ValueError):
    """Bad arguments, configs, or incompatible inputs."""


class ContainerFormatError(Exception):
    """A container file is malformed, truncated, or otherwise unreadable."""


class EndpointError(Exception):
    """The paraphrase endpoint failed (unreachable, bad payload, retries exhausted)."""
