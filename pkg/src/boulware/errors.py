"""Exception types shared across the package.

Everything raised on purpose derives from BoulwareError so callers can
catch the package's failures without swallowing genuine bugs.
"""


class BoulwareError(Exception):
    pass


class DomainError(BoulwareError):
    """Input outside the mathematical domain (r <= 2M, l < 0, omega <= 0, ...)."""


class ConfigError(BoulwareError):
    """Invalid run configuration; message carries the offending field path."""


class ConvergenceError(BoulwareError):
    """An iterative root find or series failed to converge."""


class ThresholdError(DomainError):
    """Frequency too close to the mass threshold omega^2 = m^2."""


class SeedAccuracyError(BoulwareError):
    """Asymptotic seed fails its local residual bound at the seed point."""


class StepSizeUnderflow(BoulwareError):
    """Adaptive step controller stalled below the minimum step."""


class ResidualError(BoulwareError):
    """A-posteriori ODE residual check failed on stored samples."""


class DegenerateModesError(BoulwareError):
    """Wronskian of the two boundary solutions is numerically zero."""


class InterpolationError(BoulwareError):
    """Requested point outside the stored solution grid."""


class WindowTooSmall(BoulwareError):
    """Fit window holds fewer samples than the documented minimum."""


class TruncationError(BoulwareError):
    """Angular sum reached its channel budget before the stop rule fired."""


class QuadratureError(BoulwareError):
    """Frequency quadrature could not meet its tolerance within budget."""


class BranchError(BoulwareError):
    """Analytic-continuation branch rule could not classify the input."""
