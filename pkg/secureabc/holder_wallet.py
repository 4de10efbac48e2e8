"""Holder side: keep the certificate, check verifiers against rev_V, and release the certificate only encrypted."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cert_model import ListKind, RevocationList, SignedCertificate, VerifierCredential, qr_payload
from .crypto_core import KeyEndorsement, KeyRole, check_endorsement, encrypt, verify
from .defaults import DEFAULT_REV_V_MAX_AGE, DEFAULT_SESSION_TTL
from .errors import (
    BadSignature,
    MalformedPayload,
    ParameterError,
    ProtocolViolation,
    Reason,
    StaleCache,
    StaleList,
    VerifierRevoked,
)
from .tlv import HEADER_BYTES, UInt, encode_field, read_fields

logger = logging.getLogger(__name__)

CERTIFICATE_TAG = 0x60
TRUSTED_ROOT_TAG = 0x61
REV_V_TAG = 0x62
FETCHED_AT_TAG = 0x63
ISSUER_ENDORSEMENT_TAG = 0x64


@dataclass(frozen=True)
class VerifierCheck:
    """Outcome of :meth:`Wallet.check_verifier`: accept, or abort with a reason."""

    accepted: bool
    reason: Reason | None = None


@dataclass(frozen=True)
class _Session:
    pk_v: bytes
    expires_at: int


class Wallet:
    """The holder's credential store.

    Parameters
    ----------
    certificate : SignedCertificate
        cert_A.
    trusted_root : bytes
        The root public key.
    rev_v : RevocationList | None, optional
        A previously fetched rev_V.
    fetched_at : int | None, optional
        When ``rev_v`` was fetched.
    issuer_endorsements : list[KeyEndorsement], optional
        Root endorsements of issuer keys, consulted only in issuer-signed compatibility mode.
    accept_issuer_signed : bool, optional
        Also accept verifier credentials signed by a root-endorsed issuer key.
    max_age : int, optional
        Seconds after which the rev_V cache is considered stale.
    session_ttl : int, optional
        Seconds an accepted verifier may wait before asking for the response.
    """

    def __init__(
        self,
        certificate: SignedCertificate,
        trusted_root: bytes,
        rev_v: RevocationList | None = None,
        fetched_at: int | None = None,
        issuer_endorsements: list[KeyEndorsement] | None = None,
        accept_issuer_signed: bool = False,
        max_age: int = DEFAULT_REV_V_MAX_AGE,
        session_ttl: int = DEFAULT_SESSION_TTL,
    ):
        if rev_v is not None and (rev_v.list_kind != ListKind.VERIFIER or not rev_v.verify(trusted_root)):
            raise BadSignature("cached verifier revocation list does not verify under the trusted root")
        self.certificate = certificate
        self.trusted_root = trusted_root
        self.rev_v = rev_v
        self.fetched_at = fetched_at if rev_v is not None else None
        self.issuer_endorsements = list(issuer_endorsements or [])
        self.accept_issuer_signed = accept_issuer_signed
        self.max_age = max_age
        self.session_ttl = session_ttl
        self._revoked: frozenset[bytes] = frozenset(rev_v.entries) if rev_v is not None else frozenset()
        self._sessions: dict[bytes, _Session] = {}

    def _credential_signed(self, credential: VerifierCredential) -> bool:
        if credential.role != KeyRole.VERIFIER:
            return False
        if check_endorsement(self.trusted_root, credential):
            return True
        if not self.accept_issuer_signed:
            return False
        for endorsement in self.issuer_endorsements:
            if (
                endorsement.role == KeyRole.ISSUER
                and endorsement.subject_key_id == credential.signer_key_id
                and check_endorsement(self.trusted_root, endorsement)
            ):
                return verify(endorsement.subject_key, credential.signed_bytes(), credential.signature)
        return False

    def check_verifier(self, credential: VerifierCredential, now: int) -> VerifierCheck:
        """Decide whether ``credential`` belongs to an authorised, unrevoked verifier.

        On accept a session is opened for the credential's key, to be consumed by :meth:`app_auth_response`.

        Raises
        ------
        StaleCache
            If no rev_V is cached, or the cache is older than ``max_age``.
        """
        if self.rev_v is None or self.fetched_at is None:
            raise StaleCache("no verifier revocation list cached")
        if now - self.fetched_at > self.max_age:
            raise StaleCache(f"verifier revocation list fetched {now - self.fetched_at} s ago")
        if not self._credential_signed(credential):
            logger.info("aborted: verifier credential %s not endorsed", credential.subject_key_id.hex())
            return VerifierCheck(False, Reason.BAD_SIGNATURE)
        if credential.subject_key_id in self._revoked:
            logger.info("aborted: verifier %s revoked", credential.subject_key_id.hex())
            return VerifierCheck(False, Reason.VERIFIER_REVOKED)
        self._sessions[credential.subject_key_id] = _Session(credential.pk_v, now + self.session_ttl)
        return VerifierCheck(True)

    def app_auth_response(
        self, credential: VerifierCredential, now: int, rng: np.random.Generator | None = None
    ) -> bytes:
        """cert'_A: the certificate encrypted to the verifier accepted in this session.

        Raises
        ------
        ProtocolViolation
            If no unexpired session exists for this verifier key.
        CapacityExceeded
            If the ciphertext does not fit a text-mode QR code.
        """
        session = self._sessions.pop(credential.subject_key_id, None)
        if session is None or session.pk_v != credential.pk_v:
            raise ProtocolViolation("verifier was not accepted in this session")
        if now > session.expires_at:
            raise ProtocolViolation("verifier session expired")
        ciphertext = encrypt(credential.pk_v, self.certificate.to_tlv(), rng)
        qr_payload(ciphertext, text_mode=True)
        return ciphertext

    def respond(self, credential: VerifierCredential, now: int, rng: np.random.Generator | None = None) -> bytes:
        """Check the verifier and, if accepted, respond in one step.

        Raises
        ------
        BadSignature, VerifierRevoked
            When the check aborts.
        """
        check = self.check_verifier(credential, now)
        if check.reason == Reason.BAD_SIGNATURE:
            raise BadSignature("verifier credential not endorsed")
        if check.reason == Reason.VERIFIER_REVOKED:
            raise VerifierRevoked(f"verifier {credential.subject_key_id.hex()} is revoked")
        return self.app_auth_response(credential, now, rng)

    def refresh_verifier_revocations(self, rev_v: RevocationList, now: int) -> None:
        """Replace the rev_V cache with a newer root-signed list.

        Raises
        ------
        ParameterError
            If the list is not a verifier revocation list.
        BadSignature
            If it is not signed by the trusted root.
        StaleList
            If it is older than the cached list.
        """
        if rev_v.list_kind != ListKind.VERIFIER:
            raise ParameterError("expected a verifier revocation list")
        if not rev_v.verify(self.trusted_root):
            raise BadSignature("verifier revocation list not signed by the trusted root")
        if self.rev_v is not None and rev_v.issued_at < self.rev_v.issued_at:
            raise StaleList(f"list issued at {rev_v.issued_at} is older than cached {self.rev_v.issued_at}")
        self.rev_v = rev_v
        self.fetched_at = now
        self._revoked = frozenset(rev_v.entries)
        logger.info("cached verifier revocation list with %d entries", len(rev_v.entries))

    def export_qr(self, text_mode: bool = False) -> bytes:
        """The static payload for paper-based authentication."""
        return qr_payload(self.certificate, text_mode)

    def to_bundle(self) -> bytes:
        """Serialize the wallet (certificate, root, cache, issuer endorsements) as TLV."""
        out = encode_field(CERTIFICATE_TAG, self.certificate.to_tlv())
        out += encode_field(TRUSTED_ROOT_TAG, self.trusted_root)
        if self.rev_v is not None:
            out += encode_field(REV_V_TAG, self.rev_v.to_tlv())
            out += encode_field(FETCHED_AT_TAG, UInt(8).pack(self.fetched_at))
        for endorsement in sorted(self.issuer_endorsements, key=lambda e: e.to_tlv()):
            out += encode_field(ISSUER_ENDORSEMENT_TAG, endorsement.to_tlv())
        return out

    @classmethod
    def from_bundle(cls, data: bytes, **options) -> "Wallet":
        """Inverse of :meth:`to_bundle`; ``options`` are passed to the constructor.

        Raises
        ------
        MalformedPayload
            If the bundle is not canonical.
        """
        values: dict[int, list] = {}
        previous = 0
        for raw in read_fields(data):
            if raw.tag < previous or (raw.tag == previous and raw.tag != ISSUER_ENDORSEMENT_TAG):
                raise MalformedPayload(f"unexpected tag 0x{raw.tag:02x}", raw.offset)
            previous = raw.tag
            values.setdefault(raw.tag, []).append(raw)
        if CERTIFICATE_TAG not in values or TRUSTED_ROOT_TAG not in values:
            raise MalformedPayload("wallet bundle lacks certificate or trusted root", 0)
        if (REV_V_TAG in values) != (FETCHED_AT_TAG in values):
            raise MalformedPayload("wallet bundle has a revocation list without fetch time", 0)
        unknown = set(values) - {CERTIFICATE_TAG, TRUSTED_ROOT_TAG, REV_V_TAG, FETCHED_AT_TAG, ISSUER_ENDORSEMENT_TAG}
        if unknown:
            raise MalformedPayload(f"unexpected tag 0x{min(unknown):02x}", values[min(unknown)][0].offset)

        certificate = SignedCertificate.from_tlv(values[CERTIFICATE_TAG][0].value)
        trusted_root = values[TRUSTED_ROOT_TAG][0].value
        rev_v = fetched_at = None
        if REV_V_TAG in values:
            rev_v = RevocationList.from_tlv(values[REV_V_TAG][0].value)
            fetched = values[FETCHED_AT_TAG][0]
            fetched_at = UInt(8).unpack(fetched.value, fetched.offset + HEADER_BYTES)
        endorsements = [KeyEndorsement.from_tlv(raw.value) for raw in values.get(ISSUER_ENDORSEMENT_TAG, [])]
        return cls(certificate, bytes(trusted_root), rev_v, fetched_at, endorsements, **options)

    def save(self, path: Path | str) -> None:
        Path(path).write_bytes(self.to_bundle())

    @classmethod
    def load(cls, path: Path | str, **options) -> "Wallet":
        return cls.from_bundle(Path(path).read_bytes(), **options)
