"""Exception hierarchy for rwkit.

Every error raised by the library derives from :class:`RwkitError`, which is
itself a :class:`ValueError` so callers that only care about bad input can
catch the builtin.
"""


class RwkitError(ValueError):
    """Base class for all rwkit errors."""


# sde_core
class NonPositiveDiffusion(RwkitError):
    pass


class QuadratureFailure(RwkitError):
    pass


class InvalidInterval(RwkitError):
    pass


class GridMismatch(RwkitError):
    pass


class DomainViolation(RwkitError):
    pass


# cirpp
class BadInterval(RwkitError):
    pass


class CurveOutOfRange(RwkitError):
    pass


class SpreadTooLarge(RwkitError):
    def __init__(self, message, tenor=None):
        super().__init__(message)
        self.tenor = tenor


class OutsideDomain(RwkitError):
    pass


class SeriesDivergence(RwkitError):
    pass


# market_curve
class ParseError(RwkitError):
    pass


class MonotonicityViolation(RwkitError):
    pass


# measure_change
class InfeasibleTarget(RwkitError):
    def __init__(self, message, index=None, min_attainable=None):
        super().__init__(message)
        self.index = index
        self.min_attainable = min_attainable


class NonPositiveDiscountFactor(RwkitError):
    pass


class DegenerateState(RwkitError):
    pass


# mc_engine
class TooFewPaths(RwkitError):
    pass


# scenario
class ValidationError(RwkitError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NonPositiveSpread(RwkitError):
    pass


class StageError(RwkitError):
    """A pipeline stage failed; ``stage`` names it, ``__cause__`` holds the original."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
