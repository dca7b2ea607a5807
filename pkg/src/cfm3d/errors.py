"""Exception and warning types shared across the package."""


class CFMError(Exception):
    """Base class for every operation error raised by this package."""


class ParseError(CFMError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DatasetError(CFMError):
    """Empty or otherwise unusable measurement set."""


class ContractError(CFMError, ValueError):
    """Inputs violate an operation's preconditions."""


class DomainError(CFMError, ValueError):
    """Value outside the mathematical domain (e.g. log of a non-positive force)."""


class UnderdeterminedError(CFMError):
    pass


class EliminationError(CFMError):
    def __init__(self, term, cause: Exception):
        self.term = term
        self.cause = cause
        super().__init__(f"refit without term {term} failed: {cause}")


class InfeasibleError(CFMError):
    """Force limit is exceeded even as velocity approaches zero."""


class VelocityIndependentError(CFMError):
    pass


class UnreachableError(CFMError):
    def __init__(self, deficit_m: float):
        self.deficit_m = deficit_m
        super().__init__(f"target unreachable: wrist point misses the reachable annulus by {deficit_m:.6g} m")


class InsufficientDataError(CFMError):
    pass


class ExtrapolationWarning(UserWarning):
    """A model was evaluated outside the box spanned by its training data."""


class UnmatchedStateWarning(UserWarning):
    """A training-grid state matched no samples."""
