"""Exception hierarchy shared by every module of the package."""


class QuasitauError(Exception):
    """Base class for all errors raised by the package."""


class SingularPivot(QuasitauError):
    """A Schur pivot block is numerically singular."""


class SingularTruncation(QuasitauError):
    """A leading truncation of the moment matrix cannot be factorized."""

    def __init__(self, level: int, message: str | None = None):
        self.level = level
        super().__init__(message or f"singular pivot block at level {level}")


class RankDeficient(QuasitauError):
    """A matrix expected to have full column rank does not."""


class OutOfRange(QuasitauError):
    """A block outside the stored truncation was requested."""


class WeightEvaluation(QuasitauError):
    """The weight function is not finite at a quadrature node."""


class PoleOnSupport(QuasitauError):
    """A negative-power deformation factor vanishes at a node."""


class TooCloseToSupport(QuasitauError):
    """A Cauchy-transform evaluation point is too close to the support."""


class DegenerateDirection(QuasitauError):
    """The direction n gives n.(x - y) too close to zero."""


class PoisednessFailure(QuasitauError):
    """No well-conditioned node set was found within the retry budget."""


class DegeneratePoint(QuasitauError):
    """An evaluation point lies on the Darboux hyperplane."""


class ValidityRegion(QuasitauError):
    """The support box is not inside the region where a series converges."""


class StencilInstability(QuasitauError):
    """Richardson levels disagree far beyond the expected truncation error."""


class NotOrthogonal(QuasitauError):
    """A matrix expected to be orthogonal is not."""


class ConfigError(QuasitauError):
    """A configuration file or option is invalid."""
