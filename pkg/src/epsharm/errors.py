"""Exception types shared across the package."""


class EpsharmError(Exception):
    """Base class for all domain errors (CLI exit code 2)."""


class ConfigError(EpsharmError):
    """Invalid run configuration (CLI exit code 1)."""


# geometry
class ZeroVector(EpsharmError):
    """Cannot project a (near-)zero vector to the sphere."""


class NotTangent(EpsharmError):
    """Vector fails the tangency precondition at the given point."""


# calculus
class GridTooCoarse(EpsharmError):
    """Grid does not support the requested stencil."""


class RegionOutOfRange(EpsharmError):
    """Requested region is not contained in the grid."""


# solver
class Diverged(EpsharmError):
    """Energy increased across too many consecutive accepted steps."""


class NonFiniteEnergy(EpsharmError):
    """Energy or iterate became NaN/Inf."""


# bubbling / analysis
class ConstantField(EpsharmError):
    """Field has no gradient to concentrate."""


class WindowOutOfChart(EpsharmError):
    """Rescaling window extends beyond the chart."""


class UnsupportedForm(EpsharmError):
    """Schedule outside the supported analytic family."""


class ViolatesCorollaryBound(EpsharmError):
    """Schedule has (eps_k/r_k^2) log(1/r_k) unbounded, so it is not
    realizable by a concentrating sequence with bounded energy."""


class InvalidMu(EpsharmError):
    """Concentration ratio for the alpha-family must be finite and >= 1."""


class DegenerateBubble(EpsharmError):
    """Bubble has nonpositive biharmonic energy."""


class MultipleConcentrations(EpsharmError):
    """More than one concentration point; the pipeline analyzes one per run."""


# synth
class PoleOnGrid(EpsharmError):
    """Rational map degenerates on a grid node."""


class InvalidDegree(EpsharmError):
    """Rational bubble must have degree >= 1."""


class AntipodalEndpoints(EpsharmError):
    """Great-circle arc is not determined by antipodal endpoints."""


class IncompatibleEndpoints(EpsharmError):
    """Glue interfaces do not match within tolerance."""


class ScheduleExhaustsGrid(EpsharmError):
    """Bubble cut radius fell below grid resolution."""
