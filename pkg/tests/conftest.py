import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

# Point the configuration at a file that does not exist, so tests never read a user's config
os.environ["SECUREABC_CONFIG_PATH"] = str(Path(tempfile.gettempdir()) / "secureabc-tests" / "missing.toml")

from secureabc.cert_model import JPEG_MAGIC, Certificate, sign_certificate  # noqa: E402
from secureabc.crypto_core import (  # noqa: E402
    EncKeyPair,
    KeyEndorsement,
    KeyRole,
    SigKeyPair,
    fingerprint,
    keygen_enc,
    keygen_sign,
)
from secureabc.issuer import CommChannel, Contact, Issuer  # noqa: E402
from secureabc.trust_root import TrustRoot  # noqa: E402

NOW = 1_600_000_000
DAY = 24 * 60 * 60


def jpeg(size: int, seed: int = 0) -> bytes:
    """A byte string of exactly ``size`` bytes that starts and ends like a JPEG."""
    body = np.random.default_rng(seed).bytes(size - 4)
    return JPEG_MAGIC + body + b"\xff\xd9"


@dataclass
class Pki:
    """Every key and endorsement a protocol run needs."""

    root: TrustRoot
    issuer_keys: SigKeyPair
    issuer_endorsement: KeyEndorsement
    verifier_keys: EncKeyPair
    verifier_credential: KeyEndorsement
    helper_keys: EncKeyPair


@pytest.fixture
def rng():
    """A freshly seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def pki():
    """Seeded root, issuer, verifier and helper keys, shared by the whole session."""
    key_rng = np.random.default_rng(2020)
    root = TrustRoot.generate(key_rng)
    issuer_keys = keygen_sign(key_rng)
    verifier_keys = keygen_enc(key_rng)
    helper_keys = keygen_enc(key_rng)
    return Pki(
        root=root,
        issuer_keys=issuer_keys,
        issuer_endorsement=root.endorse(issuer_keys.public_key, KeyRole.ISSUER, NOW - DAY),
        verifier_keys=verifier_keys,
        verifier_credential=root.endorse(verifier_keys.public_key, KeyRole.VERIFIER, NOW - DAY),
        helper_keys=helper_keys,
    )


@pytest.fixture
def contact():
    """A holder's SMS contact."""
    return Contact(CommChannel.SMS, "+447700900123")


@pytest.fixture
def photo():
    """A 600-byte JPEG."""
    return jpeg(600)


@pytest.fixture
def issuer(pki):
    """An in-memory issuer using the session's issuer key."""
    return Issuer(pki.issuer_keys, validity_days=180)


@pytest.fixture
def certificate(pki, photo):
    """A signed certificate valid for 180 days from NOW."""
    body = Certificate(
        name="Alice Example",
        photo=photo,
        valid_from=NOW,
        valid_until=NOW + 180 * DAY,
        cid=bytes(range(16)),
        issuer_key_id=fingerprint(pki.issuer_keys.public_key),
    )
    return sign_certificate(pki.issuer_keys.private_key, body)
