"""Data model and canonical TLV serialization for certificates, revocation lists, verifier credentials and tokens.

Frozen tag table (extension tags are marked)::

    0x01 version          0x10 list_kind          0x30 i_dp        0x40 share_V
    0x02 name             0x11 issued_at          0x31 k           0x41 encrypted share_W
    0x03 photo            0x12 revocation entry   0x32 epsilon     0x42 inner signature
    0x04 valid_from       0x20 subject key        0x44 period*     0x43 prime id
    0x05 valid_until      0x21 role*
    0x06 cid
    0x07 signature (always last, outside the signed range)
    0x08 signing key id
"""

import base64
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import IntEnum
from typing import Literal

from .crypto_core import KeyEndorsement, KeyRole, fingerprint, sign, verify
from .defaults import (
    CERTIFICATE_VERSION,
    CID_BYTES,
    KEY_ID_BYTES,
    NAME_LIMIT,
    PHOTO_BUDGET,
    QR_CAPACITY,
    SIGNATURE_BYTES,
)
from .errors import CapacityExceeded, EncodingError, MalformedPayload
from .tlv import (
    HEADER_BYTES,
    SIGNATURE_TAG,
    EnumCodec,
    Float64,
    Raw,
    TlvField,
    TlvRecord,
    UInt,
    Utf8,
    encode_field,
    read_fields,
)

JPEG_MAGIC = b"\xff\xd8"


def _check_dates(start_field: str, start: int, end: int) -> None:
    if not start < end:
        raise EncodingError(start_field, f"{start} is not before {end}")


@dataclass(frozen=True)
class Certificate(TlvRecord):
    """The body of an antibody certificate; the signed range is its canonical TLV."""

    name: str
    photo: bytes
    valid_from: int
    valid_until: int
    cid: bytes
    issuer_key_id: bytes
    version: int = CERTIFICATE_VERSION

    TLV_FIELDS = (
        TlvField(0x01, "version", UInt(1)),
        TlvField(0x02, "name", Utf8(NAME_LIMIT)),
        TlvField(0x03, "photo", Raw(max_length=PHOTO_BUDGET)),
        TlvField(0x04, "valid_from", UInt(8)),
        TlvField(0x05, "valid_until", UInt(8)),
        TlvField(0x06, "cid", Raw(width=CID_BYTES)),
        TlvField(0x08, "issuer_key_id", Raw(width=KEY_ID_BYTES)),
    )

    def validate(self) -> None:
        if self.version != CERTIFICATE_VERSION:
            raise EncodingError("version", f"unsupported version {self.version}")
        if not self.name:
            raise EncodingError("name", "name empty")
        if len(self.name.encode("utf-8")) > NAME_LIMIT:
            raise EncodingError("name", f"longer than {NAME_LIMIT} bytes")
        if len(self.photo) > PHOTO_BUDGET:
            raise CapacityExceeded(len(self.photo), PHOTO_BUDGET, "photo")
        if not self.photo.startswith(JPEG_MAGIC):
            raise EncodingError("photo", "not a JPEG")
        if len(self.cid) != CID_BYTES:
            raise EncodingError("cid", f"expected {CID_BYTES} bytes")
        _check_dates("valid_from", self.valid_from, self.valid_until)


@dataclass(frozen=True)
class SignedCertificate:
    """cert_A: a certificate body plus the issuer's signature over ``body.signed_bytes()``."""

    body: Certificate
    signature: bytes

    def to_tlv(self) -> bytes:
        return self.body.signed_bytes() + encode_field(SIGNATURE_TAG, self.signature)

    @classmethod
    def from_tlv(cls, data: bytes) -> "SignedCertificate":
        fields = read_fields(data)
        if not fields or fields[-1].tag != SIGNATURE_TAG:
            raise MalformedPayload("missing trailing signature", fields[-1].offset if fields else 0)
        signature = fields[-1]
        body = Certificate.from_fields(fields[:-1], signature.offset)
        value = Raw(width=SIGNATURE_BYTES).unpack(signature.value, signature.offset + HEADER_BYTES)
        return cls(body=body, signature=value)

    def verify(self, public_key: bytes) -> bool:
        return verify(public_key, self.body.signed_bytes(), self.signature)


def sign_certificate(private_key: bytes, body: Certificate) -> SignedCertificate:
    return SignedCertificate(body=body, signature=sign(private_key, body.signed_bytes()))


class ListKind(IntEnum):
    CERTIFICATE = 1
    VERIFIER = 2


@dataclass(frozen=True)
class RevocationList(TlvRecord):
    """rev (certificate CIDs, signed by an issuer) or rev_V (verifier key fingerprints, signed by the root)."""

    signer_key_id: bytes
    list_kind: ListKind
    issued_at: int
    entries: tuple[bytes, ...] = ()
    signature: bytes = b""

    TLV_FIELDS = (
        TlvField(0x08, "signer_key_id", Raw(width=KEY_ID_BYTES)),
        TlvField(0x10, "list_kind", EnumCodec(ListKind)),
        TlvField(0x11, "issued_at", UInt(8)),
        TlvField(0x12, "entries", Raw(max_length=CID_BYTES), repeated=True),
    )
    SIGNED = True

    @property
    def entry_width(self) -> int:
        return CID_BYTES if self.list_kind == ListKind.CERTIFICATE else KEY_ID_BYTES

    def validate(self) -> None:
        for entry in self.entries:
            if len(entry) != self.entry_width:
                raise EncodingError("entries", f"expected {self.entry_width}-byte entries, got {len(entry)}")
        if len(set(self.entries)) != len(self.entries):
            raise EncodingError("entries", "duplicate entry")

    def verify(self, public_key: bytes) -> bool:
        if self.signer_key_id != fingerprint(public_key):
            return False
        return verify(public_key, self.signed_bytes(), self.signature)


def sign_revocation_list(
    private_key: bytes, public_key: bytes, kind: ListKind, issued_at: int, entries: set[bytes] | list[bytes]
) -> RevocationList:
    unsigned = RevocationList(
        signer_key_id=fingerprint(public_key),
        list_kind=kind,
        issued_at=issued_at,
        entries=tuple(sorted(entries)),
    )
    return replace(unsigned, signature=sign(private_key, unsigned.signed_bytes()))


@dataclass(frozen=True)
class VerifierCredential(KeyEndorsement):
    """cert_V: an endorsement of the verifier's encryption key pk_V."""

    def validate(self) -> None:
        super().validate()
        if self.role != KeyRole.VERIFIER:
            raise EncodingError("role", "verifier credentials must carry the verifier role")

    @property
    def pk_v(self) -> bytes:
        return self.subject_key

    @classmethod
    def from_endorsement(cls, endorsement: KeyEndorsement) -> "VerifierCredential":
        return cls(**endorsement.__dict__)


@dataclass(frozen=True)
class DpToken(TlvRecord):
    """token_DP: a signed randomized risk level with its validity window."""

    date_issue: int
    date_end: int
    issuer_key_id: bytes
    i_dp: int
    k: int
    epsilon: float
    signature: bytes = b""

    TLV_FIELDS = (
        TlvField(0x04, "date_issue", UInt(8)),
        TlvField(0x05, "date_end", UInt(8)),
        TlvField(0x08, "issuer_key_id", Raw(width=KEY_ID_BYTES)),
        TlvField(0x30, "i_dp", UInt(2)),
        TlvField(0x31, "k", UInt(2)),
        TlvField(0x32, "epsilon", Float64()),
    )
    SIGNED = True

    @property
    def token_id(self) -> bytes:
        return self.signature

    def validate(self) -> None:
        if self.k < 2:
            raise EncodingError("k", "at least two risk levels required")
        if not self.i_dp < self.k:
            raise EncodingError("i_dp", f"{self.i_dp} outside 0..{self.k - 1}")
        if not self.epsilon > 0:
            raise EncodingError("epsilon", "must be positive")
        _check_dates("date_issue", self.date_issue, self.date_end)


@dataclass(frozen=True)
class SsToken(TlvRecord):
    """token_SS: a clear share for the verifier and a signed, encrypted share for the helper."""

    date_issue: int
    date_end: int
    issuer_key_id: bytes
    share_v: int
    share_w_ciphertext: bytes
    share_w_signature: bytes
    prime_id: int
    signature: bytes = b""

    TLV_FIELDS = (
        TlvField(0x04, "date_issue", UInt(8)),
        TlvField(0x05, "date_end", UInt(8)),
        TlvField(0x08, "issuer_key_id", Raw(width=KEY_ID_BYTES)),
        TlvField(0x40, "share_v", UInt(8)),
        TlvField(0x41, "share_w_ciphertext", Raw()),
        TlvField(0x42, "share_w_signature", Raw(width=SIGNATURE_BYTES)),
        TlvField(0x43, "prime_id", UInt(1)),
    )
    SIGNED = True

    @property
    def token_id(self) -> bytes:
        return self.signature

    def validate(self) -> None:
        if not self.share_w_ciphertext:
            raise EncodingError("share_w_ciphertext", "empty")
        _check_dates("date_issue", self.date_issue, self.date_end)


@dataclass(frozen=True)
class ForwardMessage(TlvRecord):
    """What the verifier relays to the helper: share_W with the reporting period it counts towards."""

    issuer_key_id: bytes
    share_w_ciphertext: bytes
    share_w_signature: bytes
    prime_id: int
    period: bytes

    TLV_FIELDS = (
        TlvField(0x08, "issuer_key_id", Raw(width=KEY_ID_BYTES)),
        TlvField(0x41, "share_w_ciphertext", Raw()),
        TlvField(0x42, "share_w_signature", Raw(width=SIGNATURE_BYTES)),
        TlvField(0x43, "prime_id", UInt(1)),
        TlvField(0x44, "period", Raw(max_length=32)),
    )

    @property
    def period_name(self) -> str:
        return self.period.decode("ascii")


Record = Certificate | SignedCertificate | RevocationList | KeyEndorsement | DpToken | SsToken | ForwardMessage


def encode_tlv(record: Record) -> bytes:
    """Canonical bytes of any record; signed records include their trailing signature."""
    return record.to_tlv()


def decode_tlv(data: bytes) -> Record:
    """Decode any record, recognising its type from the tags present.

    Raises
    ------
    MalformedPayload
        If the bytes are not the canonical encoding of a known record type.
    """
    fields = read_fields(data)
    tags = {field.tag for field in fields}
    if 0x02 in tags:
        if fields[-1].tag == SIGNATURE_TAG:
            return SignedCertificate.from_tlv(data)
        return Certificate.from_tlv(data)
    if 0x10 in tags:
        return RevocationList.from_tlv(data)
    if 0x21 in tags:
        endorsement = KeyEndorsement.from_tlv(data)
        if endorsement.role == KeyRole.VERIFIER:
            return VerifierCredential.from_endorsement(endorsement)
        return endorsement
    if 0x30 in tags:
        return DpToken.from_tlv(data)
    if 0x40 in tags:
        return SsToken.from_tlv(data)
    if 0x44 in tags:
        return ForwardMessage.from_tlv(data)
    raise MalformedPayload("unrecognised record type", 0)


def qr_payload(signed_record: Record | bytes, text_mode: bool, capacity: int = QR_CAPACITY) -> bytes:
    """Produce the bytes to place in a QR code.

    Parameters
    ----------
    signed_record : Record | bytes
        A record, or already-encoded bytes such as an app-auth ciphertext.
    text_mode : bool
        Base64 the payload, for readers that cannot handle binary QR content.
    capacity : int, optional
        Maximum payload length, by default the version-40 byte-mode capacity of 2953.

    Raises
    ------
    CapacityExceeded
        If the (possibly base64) payload is longer than ``capacity``.
    """
    payload = signed_record if isinstance(signed_record, bytes) else encode_tlv(signed_record)
    if text_mode:
        payload = base64.b64encode(payload)
    if len(payload) > capacity:
        raise CapacityExceeded(len(payload), capacity)
    return payload


def read_qr_payload(payload: bytes, text_mode: bool) -> bytes:
    """Undo :func:`qr_payload`'s text-mode encoding.

    Raises
    ------
    MalformedPayload
        If ``text_mode`` is set and the payload is not valid base64.
    """
    if not text_mode:
        return bytes(payload)
    try:
        return base64.b64decode(payload.strip(), validate=True)
    except ValueError:
        raise MalformedPayload("payload is not valid base64", 0) from None


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def reporting_period(ts: int, period: Literal["day", "week"] = "day") -> str:
    """The UTC calendar day (``2020-06-01``) or ISO week (``2020-W23``) containing ``ts``."""
    moment = datetime.fromtimestamp(ts, tz=timezone.utc)
    if period == "week":
        year, week, _ = moment.isocalendar()
        return f"{year}-W{week:02d}"
    return moment.strftime("%Y-%m-%d")
