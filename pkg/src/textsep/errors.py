"""Exception types shared across the package."""


class TextSepError(Exception):
    """Base class for all package errors."""


class InvalidInput(TextSepError, ValueError):
    """An argument violates a documented precondition."""


class UnknownClip(TextSepError, KeyError):
    """A mock captioner was asked about audio it has no labels for."""


class BackendError(TextSepError, RuntimeError):
    """A remote captioner/LLM backend failed after all retries.

    Attributes:
        attempts: how many requests were issued before giving up.
    """

    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class ParseError(TextSepError, ValueError):
    """A backend response could not be interpreted.

    Carries the raw response so callers can log or debug it.
    """

    def __init__(self, message, raw_response=None):
        super().__init__(message)
        self.raw_response = raw_response


class DegenerateReferences(TextSepError, ValueError):
    """Reference signals are (numerically) linearly dependent."""


class TrainingDiverged(TextSepError, RuntimeError):
    """Training produced a non-finite loss.

    Attributes:
        epoch: epoch index where divergence was detected.
        last_good: checkpoint payload (dict) from the last finite epoch,
            or None if divergence happened before the first epoch ended.
    """

    def __init__(self, message, epoch=None, last_good=None):
        super().__init__(message)
        self.epoch = epoch
        self.last_good = last_good
