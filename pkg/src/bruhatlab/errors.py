"""Exception types shared across the laboratory modules."""


class BruhatLabError(Exception):
    """Base class for all package errors."""


class NotOnSphere(BruhatLabError):
    """Coordinates (0, 0, w) cannot be normalized onto the unit sphere."""


class CompositionMismatch(BruhatLabError):
    """Endpoints of a would-be product differ beyond the snap tolerance."""


class FiberMismatch(BruhatLabError):
    """Two elements do not lie on a common source fiber."""


class SingularLeaf(BruhatLabError):
    """Leaf-metric query at the singular point of the foliation."""


class GridMismatch(BruhatLabError):
    """Kernels sampled on incompatible grids."""


class NonIntegrable(BruhatLabError):
    """Kernel has neither a decay certificate nor compact support."""


class InsufficientExtent(BruhatLabError):
    """Grid does not extend far enough to resolve the requested decay."""


class DecayViolation(BruhatLabError):
    """Imaginary frequency exceeds the kernel's certified decay rate."""


class EllipticityFailure(BruhatLabError):
    """Strip ellipticity does not hold where an inverse was requested."""


class CutoffSupport(BruhatLabError):
    """Cutoff bump leaks outside the trivializing neighborhood."""


class NonConvergence(BruhatLabError):
    """Iteration norms fail to decrease factorially within the cap."""


class IllConditioned(BruhatLabError):
    """Fit problem too poorly conditioned to trust the coefficients."""


class PlateauNotReached(BruhatLabError):
    """Large-time drift of the renormalized supertrace exceeds tolerance."""


class FitResidualExceeded(BruhatLabError):
    """Ladder fit residual above the acceptance threshold."""


class DecompositionFailure(BruhatLabError):
    """Clifford-commutant split left a non-commuting residual."""


class ConfigInvalid(BruhatLabError):
    """Experiment configuration failed validation."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"config field '{field}': {reason}")
