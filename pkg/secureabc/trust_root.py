"""The government root of trust: endorses provider keys and distributes the revoked-verifier list."""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from dataclasses_json import DataClassJsonMixin

from .cert_model import ListKind, RevocationList, VerifierCredential, sign_revocation_list
from .crypto_core import (
    KeyEndorsement,
    KeyRole,
    SigKeyPair,
    endorse_key,
    find_key,
    fingerprint,
    key_blocks,
    keygen_sign,
    read_key_file,
    sign,
    write_key_file,
)
from .defaults import KEY_ID_BYTES
from .errors import ParameterError

logger = logging.getLogger(__name__)

ROOT_KEY_FILE = "root.key"
ROOT_STATE_FILE = "root-state.json"


@dataclass
class TrustRootState(DataClassJsonMixin):
    """Persisted part of the root's state.

    Attributes
    ----------
    revoked_verifiers : list[str]
        Hex fingerprints of revoked verifier encryption keys.
    """

    revoked_verifiers: list[str] = field(default_factory=list)


class TrustRoot:
    """Holds the root signing key and the set rev_V of revoked verifier keys.

    Parameters
    ----------
    keys : SigKeyPair
        The root signing key pair.
    revoked_verifiers : set[bytes], optional
        Fingerprints of verifier keys already revoked.
    """

    def __init__(self, keys: SigKeyPair, revoked_verifiers: set[bytes] | None = None):
        self.keys = keys
        self.revoked_verifiers: set[bytes] = set(revoked_verifiers or ())

    @classmethod
    def generate(cls, rng: np.random.Generator | None = None) -> "TrustRoot":
        return cls(keygen_sign(rng))

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key

    def endorse(self, subject_key: bytes, role: KeyRole, issued_at: int) -> KeyEndorsement:
        """Endorse a provider key.

        Verifier endorsements are returned as :class:`VerifierCredential` (cert_V).

        Parameters
        ----------
        subject_key : bytes
            pk_H for issuers, pk_V or pk_W for verifiers and helpers.
        role : KeyRole
            The role the key is trusted for.
        issued_at : int
            Unix seconds.

        Returns
        -------
        KeyEndorsement
            The signed endorsement.
        """
        if KeyRole(role) == KeyRole.ROOT:
            raise ParameterError("the root key cannot be endorsed")
        endorsement = endorse_key(self.keys.private_key, subject_key, role, issued_at)
        if endorsement.role == KeyRole.VERIFIER:
            return VerifierCredential.from_endorsement(endorsement)
        return endorsement

    def revoke_verifier(self, verifier_key: bytes) -> bytes:
        """Add a verifier key (or its 8-byte fingerprint) to rev_V and return the fingerprint. Idempotent."""
        key_id = verifier_key if len(verifier_key) == KEY_ID_BYTES else fingerprint(verifier_key)
        if key_id not in self.revoked_verifiers:
            self.revoked_verifiers.add(key_id)
            logger.info("revoked verifier key %s", key_id.hex())
        return key_id

    def publish_verifier_revocation_list(self, now: int) -> RevocationList:
        """Sign the current rev_V."""
        rev_v = sign_revocation_list(
            self.keys.private_key, self.keys.public_key, ListKind.VERIFIER, now, self.revoked_verifiers
        )
        logger.info("published verifier revocation list with %d entries", len(rev_v.entries))
        return rev_v

    def save(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_key_file(directory / ROOT_KEY_FILE, key_blocks(KeyRole.ROOT, self.keys))
        state = TrustRootState(revoked_verifiers=sorted(key_id.hex() for key_id in self.revoked_verifiers))
        (directory / ROOT_STATE_FILE).write_text(state.to_json(indent=2))

    @classmethod
    def load(cls, directory: Path | str) -> "TrustRoot":
        directory = Path(directory)
        blocks = read_key_file(directory / ROOT_KEY_FILE)
        keys = SigKeyPair(public_key=find_key(blocks, private=False), private_key=find_key(blocks, private=True))
        state_path = directory / ROOT_STATE_FILE
        state = TrustRootState.from_json(state_path.read_text()) if state_path.exists() else TrustRootState()
        return cls(keys, {bytes.fromhex(key_id) for key_id in state.revoked_verifiers})


def issue_verifier_credential_by_issuer(issuer_keys: SigKeyPair, pk_v: bytes, issued_at: int) -> VerifierCredential:
    """Issue cert_V signed by an issuer key rather than the root.

    Holders accept these only in the issuer-signed compatibility mode, and only from issuers whose own key carries a
    root endorsement.
    """
    unsigned = VerifierCredential(
        signer_key_id=issuer_keys.key_id,
        issued_at=issued_at,
        subject_key=pk_v,
        role=KeyRole.VERIFIER,
    )
    credential = replace(unsigned, signature=sign(issuer_keys.private_key, unsigned.signed_bytes()))
    logger.info("issuer %s signed verifier credential %s", issuer_keys.key_id.hex(), credential.subject_key_id.hex())
    return credential
