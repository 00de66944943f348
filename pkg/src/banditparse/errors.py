"""Exception types shared across the package."""


class BanditParseError(Exception):
    """Base class for all package-specific errors."""


class InvalidTreeError(BanditParseError):
    """A query tree violates the operator arity table."""


class MalformedQueryError(BanditParseError):
    """A token sequence is not a valid pre-order serialization."""


class ExecutionError(BanditParseError):
    """A query cannot be interpreted against the geo database."""


class ParseError(BanditParseError):
    """A data file could not be parsed."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        self.path = path
        self.line = line
        if path or line:
            message = f"{path}:{line}: {message}"
        super().__init__(message)


class NoMatchingObjectsError(BanditParseError):
    """A lexicon tag has no instance anywhere in the database."""


class InsufficientDataError(BanditParseError):
    """Requested split sizes exceed the corpus size."""


class UnknownTokenError(BanditParseError):
    """A token is outside the policy's vocabulary."""


class DegenerateLogError(BanditParseError):
    """All logged-output probabilities underflowed to zero."""


class MissingTokenRewardsError(BanditParseError):
    """A token-level objective was given entries without token rewards."""


class UnknownFormError(BanditParseError):
    """Feedback submitted for a form id that does not exist."""


class AlreadySubmittedError(BanditParseError):
    """Feedback submitted twice for the same form."""


class IncompleteJudgmentsError(BanditParseError):
    """A feedback submission does not judge every statement."""


class ExhaustedError(BanditParseError):
    """No unserved feedback forms remain."""
