"""Exception and warning types shared across the package."""


class NarrowEscapeError(Exception):
    """Base class for all errors raised by narrowescape."""


class InvalidInput(NarrowEscapeError, ValueError):
    pass


class NonConvergence(NarrowEscapeError, ArithmeticError):
    """Newton projection onto the boundary did not converge."""


class ProjectionFailure(NonConvergence):
    """A Brownian step could not be folded back into the domain (time step too large)."""


class DegenerateGradient(NarrowEscapeError, ArithmeticError):
    pass


class QuadratureFailure(NarrowEscapeError, ArithmeticError):
    pass


class IllConditioned(NarrowEscapeError, ValueError):
    pass


class SingularMatrix(NarrowEscapeError, ArithmeticError):
    pass


class RegimeError(NarrowEscapeError, ValueError):
    """Inputs are outside the perturbative regime of the small-window expansion."""


class InconsistentConfigs(NarrowEscapeError, ValueError):
    pass


class TooFewSurvivors(NarrowEscapeError, ValueError):
    pass


class UsageError(NarrowEscapeError, ValueError):
    pass


class RegimeWarning(UserWarning):
    """The log correction is too large for the asymptotic expansion to be trusted."""


class TruncationWarning(UserWarning):
    pass


class ModeMixingWarning(UserWarning):
    """Survival fit window starts before the principal mode dominates."""


class GeometryWarning(UserWarning):
    """A window sits too close to a curvature discontinuity or is too large for the local curvature."""


class SeparationWarning(UserWarning):
    pass
