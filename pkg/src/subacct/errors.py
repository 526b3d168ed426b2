"""Exception types raised by the accounting routines."""


class AccountingError(Exception):
    """Base class for computation failures (CLI exit code 1)."""


class UnsupportedVariantError(AccountingError, ValueError):
    pass


class MismatchedSupportError(AccountingError, ValueError):
    pass


class LabelMismatchError(AccountingError, ValueError):
    pass


class BudgetExceededError(AccountingError):
    pass


class NoConvergenceError(AccountingError):
    pass


class ConsistencyError(AccountingError):
    """A computed quantity left its admissible range by more than the tolerance."""


class DeltaUnreachableError(AccountingError, ValueError):
    pass


class NonConvexCurveError(AccountingError, ValueError):
    pass


class StepMismatchError(AccountingError, ValueError):
    pass


class NotBracketableError(AccountingError):
    pass
