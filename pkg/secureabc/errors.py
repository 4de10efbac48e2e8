from enum import Enum


class Reason(str, Enum):
    """Every reject, abort and error reason surfaced by the toolkit."""

    MALFORMED_PAYLOAD = "MalformedPayload"
    ENCODING_ERROR = "EncodingError"
    CAPACITY_EXCEEDED = "CapacityExceeded"
    BAD_SIGNATURE = "BadSignature"
    UNKNOWN_ISSUER = "UnknownIssuer"
    REVOKED = "Revoked"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"
    DECRYPTION_FAILURE = "DecryptionFailure"
    MALFORMED_KEY = "MalformedKey"
    DUPLICATE_ISSUE = "DuplicateIssue"
    DUPLICATE_TID = "DuplicateTid"
    DUPLICATE_TOKEN = "DuplicateToken"
    UNKNOWN_CID = "UnknownCid"
    UNKNOWN_TID = "UnknownTid"
    STALE_LIST = "StaleList"
    STALE_CACHE = "StaleCache"
    PROTOCOL_VIOLATION = "ProtocolViolation"
    VERIFIER_REVOKED = "VerifierRevoked"
    PERIOD_MISMATCH = "PeriodMismatch"
    INVALID_PARAMETER = "InvalidParameter"


class SecureABCError(Exception):
    """Base class for all toolkit errors.

    Attributes
    ----------
    reason : Reason
        The machine readable reason, used by the CLI to pick an exit code.
    """

    reason: Reason = Reason.INVALID_PARAMETER

    def __str__(self) -> str:
        message = super().__str__()
        return f"{self.reason.value}: {message}" if message else self.reason.value


class ParameterError(SecureABCError, ValueError):
    reason = Reason.INVALID_PARAMETER


class MalformedPayload(SecureABCError):
    """A byte string could not be decoded canonically.

    Parameters
    ----------
    message : str
        What was wrong.
    offset : int
        Byte offset at which decoding failed.
    """

    reason = Reason.MALFORMED_PAYLOAD

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EncodingError(SecureABCError):
    """A record violates its type invariants and cannot be encoded."""

    reason = Reason.ENCODING_ERROR

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CapacityExceeded(SecureABCError):
    reason = Reason.CAPACITY_EXCEEDED

    def __init__(self, actual: int, limit: int, subject: str = "payload"):
        super().__init__(f"{subject} is {actual} bytes, limit is {limit}")
        self.actual = actual
        self.limit = limit


class BadSignature(SecureABCError):
    reason = Reason.BAD_SIGNATURE


class UnknownIssuer(SecureABCError):
    reason = Reason.UNKNOWN_ISSUER


class DecryptionFailure(SecureABCError):
    reason = Reason.DECRYPTION_FAILURE


class MalformedKey(SecureABCError):
    reason = Reason.MALFORMED_KEY


class DuplicateIssue(SecureABCError):
    reason = Reason.DUPLICATE_ISSUE


class DuplicateTid(SecureABCError):
    reason = Reason.DUPLICATE_TID


class DuplicateToken(SecureABCError):
    reason = Reason.DUPLICATE_TOKEN


class UnknownCid(SecureABCError):
    reason = Reason.UNKNOWN_CID


class UnknownTid(SecureABCError):
    reason = Reason.UNKNOWN_TID


class StaleList(SecureABCError):
    reason = Reason.STALE_LIST


class StaleCache(SecureABCError):
    reason = Reason.STALE_CACHE


class ProtocolViolation(SecureABCError):
    reason = Reason.PROTOCOL_VIOLATION


class VerifierRevoked(SecureABCError):
    reason = Reason.VERIFIER_REVOKED


class Expired(SecureABCError):
    reason = Reason.EXPIRED


class NotYetValid(SecureABCError):
    reason = Reason.NOT_YET_VALID


class PeriodMismatch(SecureABCError):
    reason = Reason.PERIOD_MISMATCH
