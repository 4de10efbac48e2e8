import pytest
from conftest import NOW

from secureabc.cert_model import ListKind, VerifierCredential
from secureabc.crypto_core import KeyRole, check_endorsement, fingerprint, verify
from secureabc.errors import ParameterError
from secureabc.trust_root import TrustRoot, issue_verifier_credential_by_issuer


class TestTrustRoot:
    def test_endorse_issuer(self, pki):
        """Test that issuer endorsements verify under the root key."""
        endorsement = pki.root.endorse(pki.issuer_keys.public_key, KeyRole.ISSUER, NOW)

        assert endorsement.role == KeyRole.ISSUER
        assert check_endorsement(pki.root.public_key, endorsement)

    def test_endorse_verifier_returns_credential(self, pki):
        """Test that verifier endorsements come back as verifier credentials."""
        credential = pki.root.endorse(pki.verifier_keys.public_key, KeyRole.VERIFIER, NOW)

        assert isinstance(credential, VerifierCredential)
        assert credential.pk_v == pki.verifier_keys.public_key

    def test_cannot_endorse_root(self, pki):
        """Test that the root role is never endorsed."""
        with pytest.raises(ParameterError):
            pki.root.endorse(pki.issuer_keys.public_key, KeyRole.ROOT, NOW)

    def test_revoke_verifier(self, pki):
        """Test that revoking by key or by fingerprint gives the same idempotent entry."""
        root = TrustRoot(pki.root.keys)

        # Test
        by_key = root.revoke_verifier(pki.verifier_keys.public_key)
        by_id = root.revoke_verifier(fingerprint(pki.verifier_keys.public_key))
        rev_v = root.publish_verifier_revocation_list(NOW)

        # Verify
        assert by_key == by_id == fingerprint(pki.verifier_keys.public_key)
        assert rev_v.list_kind == ListKind.VERIFIER
        assert rev_v.entries == (by_key,)
        assert rev_v.verify(root.public_key)

    def test_save_and_load(self, pki, tmp_path):
        """Test that the root key and revoked verifiers survive a restart."""
        root = TrustRoot(pki.root.keys)
        root.revoke_verifier(pki.verifier_keys.public_key)

        # Test
        root.save(tmp_path)
        loaded = TrustRoot.load(tmp_path)

        # Verify
        assert loaded.keys == root.keys
        assert loaded.revoked_verifiers == {fingerprint(pki.verifier_keys.public_key)}
        assert (tmp_path / "root-state.json").exists()


class TestIssuerSignedCredential:
    def test_signed_by_issuer(self, pki):
        """Test that an issuer-signed credential names and verifies under the issuer key."""
        credential = issue_verifier_credential_by_issuer(pki.issuer_keys, pki.verifier_keys.public_key, NOW)

        assert credential.signer_key_id == pki.issuer_keys.key_id
        assert verify(pki.issuer_keys.public_key, credential.signed_bytes(), credential.signature)
        assert not check_endorsement(pki.root.public_key, credential)
