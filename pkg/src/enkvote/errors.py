"""Exception hierarchy shared by every layer of the package."""


class EnkVoteError(Exception):
    """Base class for all package errors."""


class DomainError(EnkVoteError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EntropyError(EnkVoteError):
    """The entropy source failed or rejection sampling exhausted its budget."""


class NotInvertibleError(EnkVoteError, ArithmeticError):
    pass


class SearchTimeoutError(EnkVoteError, TimeoutError):
    """A bounded search (prime generation) ran out of draws."""


class FormatError(EnkVoteError, ValueError):
    """Malformed wire data: wrong width, truncated, bad framing."""


class AuthFailError(EnkVoteError):
    """An authenticated ciphertext failed its integrity check."""


class NonceReuseError(EnkVoteError):
    pass


class PayloadTooLargeError(EnkVoteError, ValueError):
    pass


class DecodeError(EnkVoteError, ValueError):
    """A group element does not decode to a guard-framed payload."""


class StateError(EnkVoteError):
    """An operation was invoked in the wrong protocol phase or role."""


class ConfigError(EnkVoteError, ValueError):
    pass


class ChoiceOutOfRangeError(EnkVoteError, ValueError):
    pass


class OracleTooLargeError(EnkVoteError):
    """The brute-force discrete log oracle refuses groups of 2**32 or more."""


class UnknownEndpointError(EnkVoteError, KeyError):
    pass


class ProtocolError(EnkVoteError):
    """Framing-level violation on the wire (unknown type, length mismatch)."""


class ManifestError(EnkVoteError, ValueError):
    pass


class RoundCapExceededError(EnkVoteError):
    """Revote rounds hit their cap with ballots still failing.

    The partial result is attached so callers can still export the board.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
