"""Exception hierarchy for the lab."""


class StarkLabError(Exception):
    """Base class for all starklab errors."""


class DimensionTooLow(StarkLabError):
    """Grid dimension below 2 (the field direction needs a transverse plane)."""


class NonPowerOfTwo(StarkLabError):
    """Grid resolution is not a power of two."""


class NyquistViolation(StarkLabError):
    """Requested momentum support does not fit inside the grid's band."""


class FrameMismatch(StarkLabError):
    """Two states (or a state and a phase) live in incompatible frames."""


class WindowOverflow(StarkLabError):
    """Wavepacket mass reached the boundary band of the periodic box."""


class NormDrift(StarkLabError):
    """Propagation lost more norm than the unitarity budget allows."""


class MissingPart(StarkLabError):
    """Potential part referenced but not present in the spec."""


class DerivativeOrderUnsupported(StarkLabError):
    """Derivative order exceeds the declared smoothness of a potential part."""


class DecayViolation(StarkLabError):
    """Measured radial decay slower than the declared exponent."""

    def __init__(self, message, beta=None, fitted_slope=None):
        super().__init__(message)
        self.beta = beta
        self.fitted_slope = fitted_slope


class ClassMismatch(StarkLabError):
    """Potential spec inconsistent with the requested theorem's class."""


class QuadratureFailure(StarkLabError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class DivergentTail(StarkLabError):
    """An infinite-horizon phase integral that diverges was requested."""


class NoConvergence(StarkLabError):
    """Wave-operator tail residual still above tolerance at the horizon cap."""


class ModifierMismatch(StarkLabError):
    """Modifier kind inconsistent with the potential's parts."""


class TailNotConverged(StarkLabError):
    """Time-integral tail estimate too large relative to the computed value."""


class EmptyReport(StarkLabError):
    """Report requested for an empty collection of fits."""


class IllConditionedDeconvolution(StarkLabError):
    """Spectral deconvolution floor hit on too many modes."""


class InsufficientAngles(StarkLabError):
    """Too few admissible angles for a stable inversion."""


class ConfigInvalid(StarkLabError):
    """Experiment configuration failed validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class MissingArtifacts(StarkLabError):
    """Summary requested on a directory without experiment artifacts."""
