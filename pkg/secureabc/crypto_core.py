"""Signature and public-key encryption primitives, plus root-of-trust key endorsements.

Signatures are ECDSA over NIST P-521 with SHA-512, signed deterministically (RFC 6979) and encoded as fixed-width
``r || s`` (66 + 66 bytes). Encryption is hybrid: an ephemeral X25519 agreement with the recipient key, HKDF-SHA256,
then AES-256-GCM, so decrypting under the wrong key fails detectably.
"""

import base64
import hashlib
import logging
import re
import secrets
from dataclasses import dataclass, replace
from enum import IntEnum
from functools import lru_cache
from pathlib import Path

import numpy as np
from cryptography.exceptions import InvalidSignature, InvalidTag, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .defaults import KEY_ID_BYTES, MAX_PLAINTEXT, SIGNATURE_BYTES
from .errors import DecryptionFailure, EncodingError, MalformedKey, ParameterError
from .tlv import EnumCodec, Raw, TlvField, TlvRecord, UInt

logger = logging.getLogger(__name__)

CURVE = ec.SECP521R1()
COORDINATE_BYTES = 66
SIG_PUBLIC_KEY_BYTES = 1 + 2 * COORDINATE_BYTES
ENC_KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
HKDF_INFO = b"secureabc hybrid encryption v1"

SIGNATURE_ALGORITHM = "ECDSA-P521-SHA512"
ENCRYPTION_ALGORITHM = "X25519-HKDF-SHA256-AES256GCM"


class KeyRole(IntEnum):
    ISSUER = 1
    VERIFIER = 2
    HELPER = 3
    ROOT = 4


@dataclass(frozen=True)
class SigKeyPair:
    """Signature key pair.

    Attributes
    ----------
    public_key : bytes
        Uncompressed SEC1 point (133 bytes).
    private_key : bytes
        Big-endian private scalar (66 bytes).
    """

    public_key: bytes
    private_key: bytes

    @property
    def key_id(self) -> bytes:
        return fingerprint(self.public_key)


@dataclass(frozen=True)
class EncKeyPair:
    """Encryption key pair; both halves are raw 32-byte X25519 keys."""

    public_key: bytes
    private_key: bytes

    @property
    def key_id(self) -> bytes:
        return fingerprint(self.public_key)


def fingerprint(public_key: bytes) -> bytes:
    """Key identifier: the first 8 bytes of SHA-256 over the public key."""
    return hashlib.sha256(public_key).digest()[:KEY_ID_BYTES]


def random_bytes(n: int, rng: np.random.Generator | None = None) -> bytes:
    """Draw ``n`` random bytes, from ``rng`` when given, otherwise from the OS."""
    if rng is None:
        return secrets.token_bytes(n)
    return rng.bytes(n)


@lru_cache(maxsize=256)
def _load_private(private_key: bytes) -> ec.EllipticCurvePrivateKey:
    if len(private_key) != COORDINATE_BYTES:
        raise MalformedKey(f"expected {COORDINATE_BYTES}-byte private scalar, got {len(private_key)}")
    try:
        return ec.derive_private_key(int.from_bytes(private_key, "big"), CURVE)
    except ValueError as exc:
        raise MalformedKey(str(exc)) from None


@lru_cache(maxsize=256)
def _load_public(public_key: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, public_key)


def _pack_private(key: ec.EllipticCurvePrivateKey) -> SigKeyPair:
    return SigKeyPair(
        public_key=key.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint),
        private_key=key.private_numbers().private_value.to_bytes(COORDINATE_BYTES, "big"),
    )


def keygen_sign(rng: np.random.Generator | None = None) -> SigKeyPair:
    """Generate a P-521 signing key pair.

    Parameters
    ----------
    rng : np.random.Generator | None
        Seeded generator for reproducible keys. Fresh OS entropy is used when omitted.

    Returns
    -------
    SigKeyPair
        The new key pair.
    """
    if rng is None:
        return _pack_private(ec.generate_private_key(CURVE))
    # 65 random bytes keep the scalar below the group order
    scalar = int.from_bytes(rng.bytes(65), "big") + 1
    return _pack_private(ec.derive_private_key(scalar, CURVE))


def public_key_from_private(private_key: bytes) -> bytes:
    return _load_private(private_key).public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def sign(private_key: bytes, message: bytes, deterministic: bool = True) -> bytes:
    """Sign ``message``, returning a fixed-width 132-byte ``r || s`` signature.

    Records are signed deterministically. Token issuance passes ``deterministic=False`` so that two tokens with
    equal contents still get distinct signatures, and therefore distinct token ids.

    Raises
    ------
    ParameterError
        If the message is empty.
    MalformedKey
        If the private key is not a valid P-521 scalar.
    """
    if not message:
        raise ParameterError("cannot sign an empty message")
    key = _load_private(private_key)
    if not deterministic:
        der = key.sign(message, ec.ECDSA(hashes.SHA512()))
    else:
        try:
            der = key.sign(message, ec.ECDSA(hashes.SHA512(), deterministic_signing=True))
        except UnsupportedAlgorithm:
            der = key.sign(message, ec.ECDSA(hashes.SHA512()))
    r, s = decode_dss_signature(der)
    return r.to_bytes(COORDINATE_BYTES, "big") + s.to_bytes(COORDINATE_BYTES, "big")


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Check a signature. Malformed keys, messages or signatures yield False rather than raising."""
    try:
        if len(signature) != SIGNATURE_BYTES:
            return False
        r = int.from_bytes(signature[:COORDINATE_BYTES], "big")
        s = int.from_bytes(signature[COORDINATE_BYTES:], "big")
        _load_public(bytes(public_key)).verify(
            encode_dss_signature(r, s), bytes(message), ec.ECDSA(hashes.SHA512())
        )
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def keygen_enc(rng: np.random.Generator | None = None) -> EncKeyPair:
    """Generate an X25519 encryption key pair, reproducibly when ``rng`` is given."""
    if rng is None:
        key = X25519PrivateKey.generate()
    else:
        key = X25519PrivateKey.from_private_bytes(rng.bytes(ENC_KEY_BYTES))
    return EncKeyPair(
        public_key=key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw),
        private_key=key.private_bytes_raw(),
    )


def _derive_key(shared: bytes, ephemeral_public: bytes, recipient_public: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=ephemeral_public + recipient_public,
        info=HKDF_INFO,
    ).derive(shared)


def encrypt(public_key: bytes, plaintext: bytes, rng: np.random.Generator | None = None) -> bytes:
    """Encrypt to an X25519 public key.

    The ciphertext layout is ``ephemeral public key (32) || nonce (12) || AES-GCM output``.

    Raises
    ------
    ParameterError
        If the plaintext exceeds ``MAX_PLAINTEXT`` bytes.
    MalformedKey
        If the recipient key is not a 32-byte X25519 key.
    """
    if len(plaintext) > MAX_PLAINTEXT:
        raise ParameterError(f"plaintext of {len(plaintext)} bytes exceeds limit of {MAX_PLAINTEXT}")
    try:
        recipient = X25519PublicKey.from_public_bytes(public_key)
    except ValueError as exc:
        raise MalformedKey(str(exc)) from None
    ephemeral = keygen_enc(rng)
    shared = X25519PrivateKey.from_private_bytes(ephemeral.private_key).exchange(recipient)
    nonce = random_bytes(NONCE_BYTES, rng)
    key = _derive_key(shared, ephemeral.public_key, public_key)
    return ephemeral.public_key + nonce + AESGCM(key).encrypt(nonce, bytes(plaintext), None)


def decrypt(private_key: bytes, ciphertext: bytes) -> bytes:
    """Decrypt a hybrid ciphertext.

    Raises
    ------
    DecryptionFailure
        If the ciphertext was made for another key, was modified, or is too short.
    MalformedKey
        If the private key is not a 32-byte X25519 key.
    """
    if len(ciphertext) < ENC_KEY_BYTES + NONCE_BYTES + TAG_BYTES:
        raise DecryptionFailure("ciphertext too short")
    try:
        key = X25519PrivateKey.from_private_bytes(private_key)
    except ValueError as exc:
        raise MalformedKey(str(exc)) from None
    ephemeral_public = ciphertext[:ENC_KEY_BYTES]
    nonce = ciphertext[ENC_KEY_BYTES : ENC_KEY_BYTES + NONCE_BYTES]
    try:
        shared = key.exchange(X25519PublicKey.from_public_bytes(ephemeral_public))
    except ValueError:
        raise DecryptionFailure("invalid ephemeral key") from None
    own_public = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    aead = AESGCM(_derive_key(shared, ephemeral_public, own_public))
    try:
        return aead.decrypt(nonce, ciphertext[ENC_KEY_BYTES + NONCE_BYTES :], None)
    except InvalidTag:
        raise DecryptionFailure("authentication tag mismatch") from None


@dataclass(frozen=True)
class KeyEndorsement(TlvRecord):
    """A root (or issuer) signature vouching for a subject key in a given role.

    The signed range is the canonical TLV of ``signer_key_id``, ``issued_at``, ``subject_key`` and ``role``.
    """

    signer_key_id: bytes
    issued_at: int
    subject_key: bytes
    role: KeyRole
    signature: bytes = b""

    TLV_FIELDS = (
        TlvField(0x08, "signer_key_id", Raw(width=KEY_ID_BYTES)),
        TlvField(0x11, "issued_at", UInt(8)),
        TlvField(0x20, "subject_key", Raw(max_length=SIG_PUBLIC_KEY_BYTES)),
        TlvField(0x21, "role", EnumCodec(KeyRole)),
    )
    SIGNED = True

    def validate(self) -> None:
        if not self.subject_key:
            raise EncodingError("subject_key", "empty")

    @property
    def subject_key_id(self) -> bytes:
        return fingerprint(self.subject_key)


def endorse_key(root_private_key: bytes, subject_key: bytes, role: KeyRole, issued_at: int) -> KeyEndorsement:
    """Sign ``subject_key`` for ``role`` with the root key."""
    unsigned = KeyEndorsement(
        signer_key_id=fingerprint(public_key_from_private(root_private_key)),
        issued_at=issued_at,
        subject_key=subject_key,
        role=KeyRole(role),
    )
    endorsement = replace(unsigned, signature=sign(root_private_key, unsigned.signed_bytes()))
    logger.info("endorsed %s key %s", endorsement.role.name.lower(), endorsement.subject_key_id.hex())
    return endorsement


def check_endorsement(root_public_key: bytes, endorsement: KeyEndorsement) -> bool:
    """True iff ``endorsement`` was signed by ``root_public_key`` over its canonical body."""
    if endorsement.signer_key_id != fingerprint(root_public_key):
        return False
    return verify(root_public_key, endorsement.signed_bytes(), endorsement.signature)


@dataclass(frozen=True)
class KeyBlock:
    """One armored block of a key file.

    Attributes
    ----------
    label : str
        The armor label, e.g. ``ISSUER SIGNING PRIVATE KEY``.
    headers : dict[str, str]
        ``Role``, ``Key-Id`` and ``Algorithm`` headers.
    data : bytes
        The raw key bytes.
    """

    label: str
    headers: dict[str, str]
    data: bytes


_BLOCK = re.compile(r"-----BEGIN (?P<label>[A-Z0-9 ]+)-----\n(?P<body>.*?)-----END (?P=label)-----", re.DOTALL)


def key_blocks(role: KeyRole, pair: SigKeyPair | EncKeyPair, private: bool = True) -> list[KeyBlock]:
    """Armor a key pair (or only its public half) for writing to disk."""
    kind = "SIGNING" if isinstance(pair, SigKeyPair) else "ENCRYPTION"
    headers = {
        "Role": role.name.lower(),
        "Key-Id": pair.key_id.hex(),
        "Algorithm": SIGNATURE_ALGORITHM if isinstance(pair, SigKeyPair) else ENCRYPTION_ALGORITHM,
    }
    blocks = [KeyBlock(f"{role.name} {kind} PUBLIC KEY", headers, pair.public_key)]
    if private:
        blocks.append(KeyBlock(f"{role.name} {kind} PRIVATE KEY", headers, pair.private_key))
    return blocks


def write_key_file(path: Path | str, blocks: list[KeyBlock]) -> None:
    """Write armored key blocks to ``path``."""
    text = []
    for block in blocks:
        encoded = base64.b64encode(block.data).decode("ascii")
        lines = [encoded[i : i + 64] for i in range(0, len(encoded), 64)]
        headers = [f"{key}: {value}" for key, value in block.headers.items()]
        text.append("\n".join([f"-----BEGIN {block.label}-----", *headers, "", *lines, f"-----END {block.label}-----"]))
    Path(path).write_text("\n".join(text) + "\n")


def read_key_file(path: Path | str) -> list[KeyBlock]:
    """Parse every armored block in ``path``.

    Raises
    ------
    MalformedKey
        If the file contains no blocks or a block body is not valid base64.
    """
    blocks = []
    for match in _BLOCK.finditer(Path(path).read_text()):
        head, _, body = match.group("body").partition("\n\n")
        headers = dict(line.split(": ", 1) for line in head.splitlines() if ": " in line)
        try:
            data = base64.b64decode("".join(body.split()), validate=True)
        except ValueError:
            raise MalformedKey(f"invalid key encoding in {path}") from None
        blocks.append(KeyBlock(match.group("label"), headers, data))
    if not blocks:
        raise MalformedKey(f"no key blocks found in {path}")
    return blocks


def find_key(blocks: list[KeyBlock], private: bool) -> bytes:
    """Return the first public or private key in ``blocks``."""
    suffix = "PRIVATE KEY" if private else "PUBLIC KEY"
    for block in blocks:
        if block.label.endswith(suffix):
            return block.data
    raise MalformedKey(f"no {suffix.lower()} present")
