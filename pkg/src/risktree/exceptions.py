"""Exception types raised across the package."""


class RiskTreeError(Exception):
    """Base class for all errors raised by risktree."""


class TreeSpecError(RiskTreeError, ValueError):
    pass


class MalformedSpec(TreeSpecError):
    pass


class NonPositiveProbability(TreeSpecError):
    pass


class ProbabilitySumMismatch(TreeSpecError):
    pass


class RaggedDepth(TreeSpecError):
    pass


class DepthOutOfRange(RiskTreeError, ValueError):
    pass


class UnknownNode(RiskTreeError, LookupError):
    pass


class InvalidMeasure(RiskTreeError, ValueError):
    pass


class InvalidFamily(RiskTreeError, ValueError):
    pass


class InvalidPosition(RiskTreeError, ValueError):
    pass


class OverflowGuard(RiskTreeError, ArithmeticError):
    """Raised when a stabilised exponential still produced a non-finite value."""


class BudgetExceeded(RiskTreeError):
    """The brute-force penalty oracle was asked to search too many leaves."""


class InfinitePenalty(RiskTreeError, ValueError):
    pass


class NotTimeConsistent(RiskTreeError, ValueError):
    """An operation that needs a time-consistent family got something else."""
