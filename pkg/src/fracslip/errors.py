"""Exception types raised across the package."""


class FracslipError(Exception):
    """Base class for all package-specific errors."""


class ShapeTouchesBoundary(FracslipError):
    """Inclusion touches (or leaves too small a margin to) the unit-cell boundary."""


class DisconnectedFluid(FracslipError):
    """Fluid part of a discretized geometry is not flood-fill connected."""


class UnderResolvedFracture(FracslipError):
    """Fewer grid cells across the fracture strip than the configured minimum."""


class GridMismatch(FracslipError):
    """Grids are incompatible: non-integer 1/epsilon, or fields on different grids."""


class SingularSystem(FracslipError):
    """Saddle-point system is singular (missing gauge, or empty fluid region)."""


class NonConvergence(FracslipError):
    """Linear solve failed to reach the required residual."""


class PicardDiverged(FracslipError):
    """Nonlinear residual grew for several consecutive Picard iterations."""


class MaxIterExceeded(FracslipError):
    """Picard iteration hit the iteration cap before the tolerance."""


class MissingSecondLayer(FracslipError):
    """Order-2 approximation requested without a second boundary-layer solution."""


class HypothesisFailure(FracslipError):
    """Scaling parameters violate the exponent hypotheses and no override was given."""


class TruncationSuspect(FracslipError):
    """Extracted constant moves too much when the slab truncation is enlarged."""


class InsufficientDecayWindow(FracslipError):
    """Too few usable heights between the interface transient and the noise floor."""


class InsufficientPoints(FracslipError):
    """Not enough sweep points for a rate fit."""


class CollinearSamples(FracslipError):
    """Forcing values too close together for a stable quadratic slip fit."""


class UnknownRegion(FracslipError):
    """Region tag not one of omega, omega1, omega2, sigma."""


class MissingArtifacts(FracslipError):
    """Report requested before the sweep summary was produced."""


class ConfigError(FracslipError):
    """Run configuration failed to parse or validate."""
