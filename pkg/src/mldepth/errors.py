"""Exception types shared across the package.

The CLI maps ValidationError (and subclasses) to exit code 2 and OS-level
I/O failures to exit code 3; library code raises, never exits.
"""


class ValidationError(ValueError):
    """Bad inputs: violated preconditions, malformed values, unusable configs."""


class InvalidCameraError(ValidationError):
    """Camera fields out of range or rotation not orthonormal within 1e-9."""


class DimensionMismatchError(ValidationError):
    """Raster/array shapes disagree with each other or with a camera."""


class NoSupportError(ValidationError):
    """An operation needs at least one supported pixel and found none."""


class UnsupportedConfigError(ValidationError):
    """A configuration the implementation deliberately does not handle."""


class DegenerateConfigError(ValidationError):
    """Numerically degenerate setup (e.g. sample on a pixel-grid line).

    Callers doing randomized probing should perturb inputs and retry.
    """


class GenerationError(ValidationError):
    """Scene synthesis could not satisfy its constraints within bounded retries."""


class FormatError(ValidationError):
    """A binary or JSON artifact does not parse as its declared format."""
