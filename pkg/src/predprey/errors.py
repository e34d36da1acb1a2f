"""Exception hierarchy shared across the package.

Construction / configuration problems derive from ``ValueError`` so callers
can treat them as bad input; numerical failures derive from ``RuntimeError``.
"""


class PredpreyError(Exception):
    """Base class for package-specific errors."""


class ConfigError(PredpreyError, ValueError):
    """Malformed or invalid scenario configuration.

    ``path`` holds the dotted location of the offending field when known,
    e.g. ``model.epsilon1``.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class SingularPointError(PredpreyError, ValueError):
    """Jacobian requested where it is undefined (Gause response, zero prey)."""


class IntegrationError(PredpreyError, RuntimeError):
    """Base class for integrator failures."""


class DivergenceError(IntegrationError):
    """Non-finite values appeared during stepping, or the step size underflowed."""


class MaxStepsError(IntegrationError):
    """Step budget exhausted before reaching the end time.

    The partial trajectory computed so far is attached as ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class PositivityError(IntegrationError):
    """A state component went negative beyond tolerance in clamp mode."""


class NoPeriodError(PredpreyError, RuntimeError):
    """Too few section crossings to estimate an oscillation period."""


class NonConvergenceError(PredpreyError, RuntimeError):
    """An iterative search (Newton, Poincare return map) failed to settle."""
