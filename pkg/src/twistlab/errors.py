"""Exception types shared across the package."""


class TwistlabError(Exception):
    """Base class for all library errors."""


class InsufficientPrecision(TwistlabError):
    """A real source cannot certify the requested absolute error."""


class PrecisionExhausted(TwistlabError):
    """Working precision is too coarse for the geometry being resolved."""


class NoWitness(TwistlabError):
    """Fewer than two valid witness entries were found below the scan limit."""


class InvalidParameter(TwistlabError, ValueError):
    pass


class BudgetExhausted(TwistlabError):
    """A lazily built function or search ran past its explicit budget."""


class OutOfDomain(TwistlabError, ValueError):
    pass


class PreconditionLost(TwistlabError):
    """The measure assumption of the density argument stopped holding."""

    def __init__(self, level, measure, threshold):
        super().__init__(
            f"mu(R_t)={measure:.6g} >= {threshold:.6g} at level t={level}"
        )
        self.level = level
        self.measure = measure
        self.threshold = threshold


class BadnessViolation(TwistlabError):
    """More children of one node were hit than the survivor floor allows."""

    def __init__(self, level, node, hits, limit):
        super().__init__(
            f"node {node} at level {level}: {hits} children hit (limit {limit})"
        )
        self.level = level
        self.node = node
        self.hits = hits
        self.limit = limit
