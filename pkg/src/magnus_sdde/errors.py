"""Exception hierarchy shared across the package."""


class SddeError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SddeError, ValueError):
    """An argument is malformed, non-finite or out of range."""


class MeshAlignmentError(SddeError, ValueError):
    """A time, step or delay does not land on the required mesh or lattice."""


class StepSizeError(SddeError, ValueError):
    """The step size is too large for the delayed iterated integrals."""


class ConfigurationError(SddeError):
    """A problem or scheme is missing something it needs (e.g. Jacobians)."""


class TrajectoryLookupError(SddeError, LookupError):
    """A requested time is off the mesh or outside the stored range."""


class DivergenceError(SddeError):
    """Raised by callers that treat a diverged run as fatal."""
