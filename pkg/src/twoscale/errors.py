"""Exception hierarchy.

Every error raised on purpose by the package derives from ``TwoScaleError``;
the CLI maps the three families below onto its exit codes.
"""


class TwoScaleError(Exception):
    """Base class for all package errors."""


class ConfigError(TwoScaleError, ValueError):
    """Malformed experiment configuration or invalid arguments."""


class AssumptionError(TwoScaleError):
    """A modelling assumption (stability, ergodicity, step-size caps) fails."""


class NumericalError(TwoScaleError, ArithmeticError):
    """A computation produced an unusable result."""


# --- assumption failures ---------------------------------------------------

class NotHurwitz(AssumptionError):
    pass


class HurwitzViolated(AssumptionError):
    pass


class NotErgodic(AssumptionError):
    pass


class Reducible(NotErgodic):
    pass


class ScheduleNotAdmissible(AssumptionError):
    pass


class NonPositiveRate(AssumptionError, ValueError):
    pass


class NonPositiveInput(AssumptionError, ValueError):
    pass


class ExhaustedResampling(AssumptionError):
    pass


class BoundViolated(AssumptionError):
    pass


class ContractionViolated(AssumptionError):
    pass


# --- numerical failures ----------------------------------------------------

class IllConditioned(NumericalError):
    pass


class SingularDelta(NumericalError):
    pass


class SingularA22(NumericalError):
    pass


class SingularFundamentalMatrix(NumericalError):
    pass


class InverseFailed(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


class NonFinite(NumericalError):
    """Iterates overflowed; carries the replica and iteration where it happened."""

    def __init__(self, message, iteration=None, replica=None):
        super().__init__(message)
        self.iteration = iteration
        self.replica = replica


# --- data errors -----------------------------------------------------------

class DimensionMismatch(TwoScaleError, ValueError):
    pass


class InsufficientPoints(TwoScaleError, ValueError):
    pass


class NonPositiveValue(TwoScaleError, ValueError):
    pass
