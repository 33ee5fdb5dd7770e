"""Exception hierarchy shared by all modules."""


class ChaoticPlanckError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ChaoticPlanckError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(ChaoticPlanckError, ArithmeticError):
    """A numerical procedure failed or left its error budget."""


class NonHermitian(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class InvalidDensity(ValidationError):
    pass


class NonPositiveLambda(ValidationError):
    pass


class ZeroSigma(ValidationError):
    pass


class MissingSplit(ValidationError):
    pass


class NonCommensurateTime(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class StepTooLarge(ValidationError):
    pass


class TooFewSnapshots(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class QuadratureNonConvergence(NumericalError):
    pass


class DensityFloor(NumericalError):
    pass


class AmbiguousPointer(NumericalError):
    pass


class FitFailure(NumericalError):
    pass
