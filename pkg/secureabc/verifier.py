"""Verifier side: trusted issuer keys, the certificate revocation cache, and paper/app verification."""

import base64
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum

from dataclasses_json import DataClassJsonMixin, config

from .cert_model import ListKind, RevocationList, SignedCertificate, VerifierCredential
from .crypto_core import EncKeyPair, KeyEndorsement, KeyRole, check_endorsement, decrypt
from .errors import BadSignature, DecryptionFailure, MalformedPayload, ParameterError, Reason, StaleCache, StaleList

logger = logging.getLogger(__name__)


def _hex(value: bytes | None) -> str | None:
    return value.hex() if value is not None else None


def _b64(value: bytes | None) -> str | None:
    return base64.b64encode(value).decode("ascii") if value is not None else None


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class VerificationResult(DataClassJsonMixin):
    """The decision, and on accept the attributes a human compares against the person presenting."""

    verdict: Verdict
    reason: Reason | None = None
    name: str | None = None
    photo: bytes | None = field(default=None, metadata=config(encoder=_b64))
    cid: bytes | None = field(default=None, metadata=config(encoder=_hex))
    valid_until: int | None = None

    @property
    def accepted(self) -> bool:
        return self.verdict == Verdict.ACCEPT

    @classmethod
    def reject(cls, reason: Reason) -> "VerificationResult":
        return cls(Verdict.REJECT, reason)


@dataclass(frozen=True)
class _RevocationCache:
    rev: RevocationList
    revoked: frozenset[bytes]


class Verifier:
    """A service provider checking antibody certificates.

    Parameters
    ----------
    trusted_root : bytes
        Root public key; issuer keys are only trusted with its endorsement.
    enc_keys : EncKeyPair | None, optional
        pk_V / sk_V, needed for app-based authentication.
    credential : VerifierCredential | None, optional
        cert_V, shown to holders.
    clock_skew : int, optional
        Seconds of tolerance applied to both ends of the validity interval.
    """

    def __init__(
        self,
        trusted_root: bytes,
        enc_keys: EncKeyPair | None = None,
        credential: VerifierCredential | None = None,
        clock_skew: int = 0,
    ):
        if clock_skew < 0:
            raise ParameterError("clock_skew must not be negative")
        self.trusted_root = trusted_root
        self.enc_keys = enc_keys
        self.credential = credential
        self.clock_skew = clock_skew
        self.issuer_keys: dict[bytes, bytes] = {}
        self._caches: dict[bytes, _RevocationCache] = {}
        self._refresh_lock = threading.Lock()

    def add_issuer(self, endorsement: KeyEndorsement) -> bytes:
        """Trust an issuer key endorsed by the root, returning its key id.

        Raises
        ------
        BadSignature
            If the endorsement is not a root-signed issuer endorsement.
        """
        if endorsement.role != KeyRole.ISSUER or not check_endorsement(self.trusted_root, endorsement):
            raise BadSignature("issuer key is not endorsed by the trusted root")
        self.issuer_keys[endorsement.subject_key_id] = endorsement.subject_key
        logger.info("trusting issuer key %s", endorsement.subject_key_id.hex())
        return endorsement.subject_key_id

    @property
    def revocation_lists(self) -> dict[bytes, RevocationList]:
        """The cached list of each issuer key, by key id."""
        return {key_id: cache.rev for key_id, cache in self._caches.items()}

    def refresh_revocations(self, rev: RevocationList) -> None:
        """Swap in a newer issuer-signed rev, replacing only the signing issuer's cached list.

        Raises
        ------
        ParameterError
            If the list is a verifier revocation list.
        BadSignature
            If no trusted issuer key signed it.
        StaleList
            If it is older than the list cached for the same issuer.
        """
        if rev.list_kind != ListKind.CERTIFICATE:
            raise ParameterError("expected a certificate revocation list")
        public_key = self.issuer_keys.get(rev.signer_key_id)
        if public_key is None or not rev.verify(public_key):
            raise BadSignature("revocation list not signed by a trusted issuer")
        with self._refresh_lock:
            current = self._caches.get(rev.signer_key_id)
            if current is not None and rev.issued_at < current.rev.issued_at:
                raise StaleList(f"list issued at {rev.issued_at} is older than cached {current.rev.issued_at}")
            self._caches = {**self._caches, rev.signer_key_id: _RevocationCache(rev, frozenset(rev.entries))}
        logger.info("cached revocation list of issuer %s with %d entries", rev.signer_key_id.hex(), len(rev.entries))

    def verify_paper(self, payload: bytes, now: int) -> VerificationResult:
        """Verify a presented certificate payload.

        Checks run in a fixed order and the first failure names the reject reason: canonical decoding, the
        issuer signature, revocation, then the validity interval.

        Raises
        ------
        StaleCache
            If no revocation list has been loaded for the certificate's issuer.
        """
        caches = self._caches
        if not caches:
            raise StaleCache("no revocation list cached")
        try:
            certificate = SignedCertificate.from_tlv(payload)
        except MalformedPayload as exc:
            logger.info("rejected: %s", exc)
            return VerificationResult.reject(Reason.MALFORMED_PAYLOAD)
        body = certificate.body
        public_key = self.issuer_keys.get(body.issuer_key_id)
        if public_key is None:
            return self._reject(body.cid, Reason.UNKNOWN_ISSUER)
        if not certificate.verify(public_key):
            return self._reject(body.cid, Reason.BAD_SIGNATURE)
        cache = caches.get(body.issuer_key_id)
        if cache is None:
            raise StaleCache(f"no revocation list cached for issuer {body.issuer_key_id.hex()}")
        if body.cid in cache.revoked:
            return self._reject(body.cid, Reason.REVOKED)
        if now + self.clock_skew < body.valid_from:
            return self._reject(body.cid, Reason.NOT_YET_VALID)
        if now - self.clock_skew > body.valid_until:
            return self._reject(body.cid, Reason.EXPIRED)
        logger.info("accepted certificate %s", body.cid.hex()[:8])
        return VerificationResult(
            Verdict.ACCEPT,
            name=body.name,
            photo=body.photo,
            cid=body.cid,
            valid_until=body.valid_until,
        )

    def verify_app(self, ciphertext: bytes, now: int) -> VerificationResult:
        """Decrypt cert'_A with sk_V, then verify it exactly as :meth:`verify_paper`."""
        if self.enc_keys is None:
            raise ParameterError("app-based verification needs an encryption key pair")
        try:
            payload = decrypt(self.enc_keys.private_key, ciphertext)
        except DecryptionFailure as exc:
            logger.info("rejected: %s", exc)
            return VerificationResult.reject(Reason.DECRYPTION_FAILURE)
        return self.verify_paper(payload, now)

    @staticmethod
    def _reject(cid: bytes, reason: Reason) -> VerificationResult:
        logger.info("rejected certificate %s: %s", cid.hex()[:8], reason.value)
        return VerificationResult.reject(reason)
