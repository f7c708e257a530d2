"""Exception types raised by the library.

Every error derives from CzlabError so callers can catch the whole family.
"""


class CzlabError(Exception):
    pass


class InvalidGrid(CzlabError):
    pass


class EmptyRegion(CzlabError):
    pass


class RealRequired(CzlabError):
    pass


class OutOfGrid(CzlabError):
    pass


class DiagonalEvaluation(CzlabError):
    pass


class NonDegeneracyFailed(CzlabError):
    pass


class ATooLargeForGrid(CzlabError):
    pass


class SupportsOverlap(CzlabError):
    pass


class SupportsTouching(CzlabError):
    pass


class EmptySampler(CzlabError):
    pass


class InvalidExponents(CzlabError):
    pass


class NotMeanZero(CzlabError):
    pass


class NegativeG(CzlabError):
    pass


class DegeneratePairing(CzlabError):
    pass


class MajorSubsetTooSmall(CzlabError):
    pass


class NoDecay(CzlabError):
    pass


class EtaViolated(CzlabError):
    pass


class TooFewScales(CzlabError):
    pass


class NonPositiveWeight(CzlabError):
    pass


class DegenerateMedian(CzlabError):
    pass


class SupportTouchesBoundary(CzlabError):
    pass


class SupportExceedsQ(CzlabError):
    pass


class EnumerationTooLarge(CzlabError):
    pass


class OutsideBall(CzlabError):
    pass


class StalledResidual(CzlabError):
    pass


class ConfigError(CzlabError):
    pass
