import json
import threading

import numpy as np
import pytest
from conftest import DAY, NOW, jpeg
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from secureabc.cert_model import ListKind
from secureabc.crypto_core import KeyRole, keygen_sign
from secureabc.errors import (
    CapacityExceeded,
    DuplicateIssue,
    DuplicateTid,
    ParameterError,
    Reason,
    UnknownCid,
    UnknownTid,
)
from secureabc.issuer import CommChannel, Contact, Issuer, RevocationReason
from secureabc.trust_root import TrustRoot
from secureabc.verifier import Verifier


def _issue(issuer, person="P1", tid="T1", now=NOW, **kwargs):
    options = {"name": "Alice Example", "photo": jpeg(600), "contact": Contact(CommChannel.SMS, "+447700900123")}
    options.update(kwargs)
    return issuer.issue_certificate(person_id=person, tid=tid, now=now, **options)


class TestContact:
    def test_parse(self):
        """Test parsing channel:address contacts."""
        assert Contact.parse("email:alice@example.org") == Contact(CommChannel.EMAIL, "alice@example.org")
        assert Contact.parse("SMS:+44").channel == CommChannel.SMS

    @pytest.mark.parametrize("text", ["alice", "fax:123", "sms:"])
    def test_parse_invalid(self, text):
        """Test that malformed contacts are refused."""
        with pytest.raises(ParameterError):
            Contact.parse(text)


class TestIssueCertificate:
    def test_issue(self, issuer, pki):
        """Test that an issued certificate is signed, recorded and valid for the configured days."""
        # Test
        certificate = _issue(issuer)

        # Verify
        body = certificate.body
        assert certificate.verify(pki.issuer_keys.public_key)
        assert body.valid_from == NOW
        assert body.valid_until == NOW + 180 * DAY
        assert body.issuer_key_id == pki.issuer_keys.key_id
        assert issuer.record(body.cid).tid == "T1"

    def test_duplicate_issue(self, issuer):
        """Test that a person with a valid certificate cannot get another."""
        _issue(issuer)

        with pytest.raises(DuplicateIssue):
            _issue(issuer, tid="T2")

    def test_reissue_after_revocation(self, issuer):
        """Test that revoking the current certificate allows a new one."""
        first = _issue(issuer)
        issuer.revoke_by_cid(first.body.cid, RevocationReason.LOSS, NOW + 1)

        second = _issue(issuer, tid="T2", now=NOW + 2)

        assert second.body.cid != first.body.cid

    def test_reissue_after_expiry(self, issuer):
        """Test that an expired certificate does not block a new one."""
        _issue(issuer, validity_days=1)

        assert _issue(issuer, tid="T2", now=NOW + 2 * DAY)

    def test_duplicate_tid(self, issuer):
        """Test that a test number is used at most once."""
        _issue(issuer)

        with pytest.raises(DuplicateTid):
            _issue(issuer, person="P2")

    def test_photo_over_budget(self, issuer):
        """Test that photos over 1800 bytes are refused before anything is recorded."""
        with pytest.raises(CapacityExceeded):
            _issue(issuer, photo=jpeg(1801))

        assert issuer.records_for("P1") == []

    def test_photo_capture(self, pki):
        """Test that the capture hook supplies the photo when none is given."""
        captured = []
        issuer = Issuer(pki.issuer_keys, photo_capture=lambda person: captured.append(person) or jpeg(300))

        certificate = _issue(issuer, photo=None)

        assert captured == ["P1"]
        assert len(certificate.body.photo) == 300

    def test_no_photo(self, issuer):
        """Test that a missing photo without a capture hook is a parameter error."""
        with pytest.raises(ParameterError):
            _issue(issuer, photo=None)

    def test_invalid_validity(self, issuer):
        """Test that certificates must live at least one day."""
        with pytest.raises(ParameterError):
            _issue(issuer, validity_days=0)

    def test_seeded_cid(self, pki):
        """Test that a seeded generator makes the CID reproducible."""
        first = _issue(Issuer(pki.issuer_keys), rng=np.random.default_rng(9))
        second = _issue(Issuer(pki.issuer_keys), rng=np.random.default_rng(9))

        assert first.body.cid == second.body.cid


class TestRevocation:
    def test_revoke_by_cid(self, issuer):
        """Test that revocation sets the bit and the reason."""
        cid = _issue(issuer).body.cid

        # Test
        issuer.revoke_by_cid(cid, RevocationReason.MISUSE, NOW + 10)

        # Verify
        record = issuer.record(cid)
        assert record.revocation_bit
        assert record.revocation_reason == RevocationReason.MISUSE
        assert issuer.snapshot().revoked() == {cid}

    def test_revoke_twice(self, issuer):
        """Test that revoking an already revoked certificate keeps the first reason."""
        cid = _issue(issuer).body.cid
        issuer.revoke_by_cid(cid, RevocationReason.LOSS, NOW + 10)

        issuer.revoke_by_cid(cid, RevocationReason.MISUSE, NOW + 20)

        assert issuer.record(cid).revocation_reason == RevocationReason.LOSS

    def test_unknown_cid(self, issuer):
        """Test that revoking an unknown CID fails."""
        with pytest.raises(UnknownCid):
            issuer.revoke_by_cid(b"\x00" * 16, RevocationReason.LOSS, NOW)

    def test_revoke_by_tid(self, issuer):
        """Test revoking through the test number, e.g. for a recalled batch."""
        cid = _issue(issuer).body.cid

        assert issuer.revoke_by_tid("T1", now=NOW + 10) == cid
        assert issuer.record(cid).revocation_reason == RevocationReason.ERROR
        with pytest.raises(UnknownTid):
            issuer.revoke_by_tid("T9")

    def test_publish_revocation_list(self, issuer, pki):
        """Test that the list holds revoked, unexpired CIDs and is signed by the issuer."""
        short = _issue(issuer, validity_days=1).body.cid
        long = _issue(issuer, person="P2", tid="T2").body.cid
        _issue(issuer, person="P3", tid="T3")
        issuer.revoke_by_cid(short, RevocationReason.LOSS, NOW + 10)
        issuer.revoke_by_cid(long, RevocationReason.LOSS, NOW + 10)

        # Test
        today = issuer.publish_revocation_list(NOW + 20)
        later = issuer.publish_revocation_list(NOW + 2 * DAY)

        # Verify
        assert today.list_kind == ListKind.CERTIFICATE
        assert set(today.entries) == {short, long}
        assert later.entries == (long,)
        assert today.verify(pki.issuer_keys.public_key)


class TestJournal:
    def test_replay(self, pki, tmp_path):
        """Test that a reopened issuer sees earlier issues and revocations."""
        journal = tmp_path / "journal.log"
        first = Issuer(pki.issuer_keys, journal_path=journal)
        cid = _issue(first).body.cid
        first.revoke_by_cid(cid, RevocationReason.LOSS, NOW + 1)

        # Test
        reopened = Issuer(pki.issuer_keys, journal_path=journal)

        # Verify
        assert reopened.record(cid).revocation_bit
        with pytest.raises(DuplicateTid):
            _issue(reopened, person="P2")

    def test_restart_publishes_identical_list(self, pki, tmp_path):
        """Test that an issuer restarted from its journal publishes the same signed list, byte for byte."""
        journal = tmp_path / "journal.log"
        first = Issuer(pki.issuer_keys, journal_path=journal)
        for index in range(3):
            _issue(first, person=f"P{index}", tid=f"T{index}")
        first.revoke_by_tid("T0", now=NOW + 1)
        first.revoke_by_tid("T2", now=NOW + 2)
        before = first.publish_revocation_list(NOW + 10).to_tlv()

        # Test
        reopened = Issuer(pki.issuer_keys, journal_path=journal)

        # Verify
        assert journal.read_text().endswith("\n")
        assert reopened.publish_revocation_list(NOW + 10).to_tlv() == before

    def test_two_instances_share_journal(self, pki, tmp_path):
        """Test that a second writer sees the first writer's records before checking duplicates."""
        journal = tmp_path / "journal.log"
        first = Issuer(pki.issuer_keys, journal_path=journal)
        second = Issuer(pki.issuer_keys, journal_path=journal)
        _issue(first)

        with pytest.raises(DuplicateIssue):
            _issue(second, tid="T2")

    def test_concurrent_issues(self, pki, tmp_path):
        """Test that concurrent issues for one person yield exactly one certificate."""
        issuer = Issuer(pki.issuer_keys, journal_path=tmp_path / "journal.log")
        outcomes = []

        def attempt(index):
            try:
                _issue(issuer, tid=f"T{index}")
                outcomes.append("issued")
            except DuplicateIssue:
                outcomes.append("duplicate")

        threads = [threading.Thread(target=attempt, args=(index,)) for index in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        assert sorted(outcomes) == ["duplicate"] * 7 + ["issued"]

    def test_outbox(self, pki, tmp_path):
        """Test that notifications name the contact and CID but carry no certificate contents."""
        outbox = tmp_path / "outbox.jsonl"
        issuer = Issuer(pki.issuer_keys, outbox_path=outbox)
        cid = _issue(issuer).body.cid
        issuer.revoke_by_cid(cid, RevocationReason.LOSS, NOW + 1)

        # Test
        lines = [json.loads(line) for line in outbox.read_text().splitlines()]

        # Verify
        assert [line["kind"] for line in lines] == ["issued", "revoked"]
        assert lines[0] == {"channel": "sms", "address": "+447700900123", "kind": "issued", "cid": cid.hex(), "at": NOW}


class IssuerLifecycle(RuleBasedStateMachine):
    """Random issue, revoke, publish and refresh sequences checked against a plain model of the issuer."""

    key_rng = np.random.default_rng(77)
    root = TrustRoot.generate(key_rng)
    keys = keygen_sign(key_rng)

    def __init__(self):
        super().__init__()
        self.now = NOW
        self.issuer = Issuer(self.keys, validity_days=2)
        self.verifier = Verifier(self.root.public_key)
        self.verifier.add_issuer(self.root.endorse(self.keys.public_key, KeyRole.ISSUER, NOW - DAY))
        self.verifier.refresh_revocations(self.issuer.publish_revocation_list(self.now))
        self.certificates = {}
        self.owners = {}
        self.tids = {}
        self.revoked = set()
        self.published = None
        self.tests = 0

    def _active(self, person):
        return [
            cid
            for cid, owner in self.owners.items()
            if owner == person and cid not in self.revoked and self.now <= self.certificates[cid].body.valid_until
        ]

    @rule(person=st.integers(0, 3))
    def issue(self, person):
        self.tests += 1
        tid = f"T{self.tests}"
        if self._active(person):
            with pytest.raises(DuplicateIssue):
                _issue(self.issuer, person=f"P{person}", tid=tid, now=self.now)
            return
        certificate = _issue(self.issuer, person=f"P{person}", tid=tid, now=self.now)
        cid = certificate.body.cid
        self.certificates[cid] = certificate
        self.owners[cid] = person
        self.tids[tid] = cid

    @precondition(lambda self: self.certificates)
    @rule(data=st.data(), reason=st.sampled_from(RevocationReason))
    def revoke(self, data, reason):
        cid = data.draw(st.sampled_from(sorted(self.certificates)))
        self.issuer.revoke_by_cid(cid, reason, self.now)
        self.revoked.add(cid)

    @precondition(lambda self: self.tids)
    @rule(data=st.data())
    def revoke_tid(self, data):
        tid = data.draw(st.sampled_from(sorted(self.tids)))
        assert self.issuer.revoke_by_tid(tid, now=self.now) == self.tids[tid]
        self.revoked.add(self.tids[tid])

    @rule(seconds=st.integers(1, DAY))
    def advance(self, seconds):
        self.now += seconds

    @rule()
    def publish(self):
        rev = self.issuer.publish_revocation_list(self.now)
        expected = {cid for cid in self.revoked if self.now <= self.certificates[cid].body.valid_until}
        assert set(rev.entries) == expected
        assert rev.verify(self.keys.public_key)
        self.published = rev

    @precondition(lambda self: self.published is not None)
    @rule()
    def refresh(self):
        self.verifier.refresh_revocations(self.published)
        for cid in self.published.entries:
            result = self.verifier.verify_paper(self.certificates[cid].to_tlv(), self.published.issued_at)
            assert result.reason == Reason.REVOKED

    @invariant()
    def one_active_certificate_per_person(self):
        for person in range(4):
            assert sum(record.is_active(self.now) for record in self.issuer.records_for(f"P{person}")) <= 1

    @invariant()
    def records_match_model(self):
        for cid in self.certificates:
            assert self.issuer.record(cid).revocation_bit == (cid in self.revoked)


TestIssuerLifecycle = IssuerLifecycle.TestCase
TestIssuerLifecycle.settings = settings(max_examples=40, stateful_step_count=25, deadline=None)
