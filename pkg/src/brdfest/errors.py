"""Exception types raised by the brdfest toolkit."""


class BrdfestError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(BrdfestError):
    """Unknown metric tag, inconsistent loss/parameterization, bad ranges."""


class InvalidDirectionError(BrdfestError):
    """Direction outside the valid hemisphere or not unit length."""


class GeometryError(BrdfestError):
    """Impossible camera/shape arrangement (e.g. camera inside the shape)."""


class DegenerateFrameError(BrdfestError):
    """Rendered frame with an empty foreground."""


class DegenerateSceneError(BrdfestError):
    """Scene where every surface sample ended up with zero observations."""


class EmptyHemisphereError(BrdfestError):
    """All observations of a voxel are back-facing after normal alignment."""


class CheckpointError(BrdfestError):
    """Unreadable or corrupt checkpoint file."""


class NonFiniteGradientError(BrdfestError):
    """An optimizer step received a NaN/inf gradient."""


class NonFiniteLossError(BrdfestError):
    """Training produced a non-finite loss value."""
