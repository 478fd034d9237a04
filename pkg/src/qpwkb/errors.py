"""Exception types raised by the toolkit."""


class QpwkbError(Exception):
    """Base class for all errors raised here."""


class UnsupportedMode(QpwkbError):
    """Operation needs pointwise values of V but the potential is finite-gap."""


class UnsupportedPotential(QpwkbError):
    """Potential excluded by the standing hypotheses (e.g. constant V)."""


class QuadratureError(QpwkbError):
    pass


class EdgeSearchError(QpwkbError):
    pass


class OutOfRange(QpwkbError):
    pass


class NormalizationError(QpwkbError):
    pass


class BranchPointProximity(QpwkbError):
    pass


class NearDegenerate(QpwkbError):
    pass


class ContourError(QpwkbError):
    pass


class GeometryError(QpwkbError):
    """(BEI) or another geometric hypothesis fails."""


class ContinuationAmbiguity(QpwkbError):
    pass


class ConsistencyError(QpwkbError):
    pass


class InvariantViolation(QpwkbError):
    pass


class ReclassifyAsResonant(QpwkbError):
    pass


class WrongRegime(QpwkbError):
    pass


class NumericsError(QpwkbError):
    pass


class HypothesisError(QpwkbError):
    """Raised by the report builder when (BEI) or (T) fails on the window."""

    def __init__(self, message, margins=None):
        super().__init__(message)
        self.margins = margins or {}
