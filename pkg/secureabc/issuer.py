"""Harry's side: the test-record store, certificate issuance, revocation and revocation-list publication.

State is an append-only journal of canonical TLV events, one base64 line per event, replayed on open. Mutations
hold an exclusive ``flock`` on a sibling lock file and replay any events appended by other processes before
checking their preconditions.
"""

import base64
import fcntl
import hashlib
import logging
import threading
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np
from dataclasses_json import DataClassJsonMixin

from .cert_model import (
    Certificate,
    ListKind,
    RevocationList,
    SignedCertificate,
    qr_payload,
    sign_certificate,
    sign_revocation_list,
)
from .crypto_core import SigKeyPair, random_bytes
from .defaults import CID_BYTES, DEFAULT_VALIDITY_DAYS, NAME_LIMIT, PHOTO_BUDGET
from .errors import (
    CapacityExceeded,
    DuplicateIssue,
    DuplicateTid,
    MalformedPayload,
    ParameterError,
    UnknownCid,
    UnknownTid,
)
from .tlv import EnumCodec, Raw, TlvField, TlvRecord, UInt, Utf8, read_fields

logger = logging.getLogger(__name__)

DAY = 24 * 60 * 60
PHOTO_HASH_BYTES = 32


class CommChannel(IntEnum):
    SMS = 1
    EMAIL = 2
    POST = 3


class RevocationReason(IntEnum):
    LOSS = 1
    ERROR = 2
    MISUSE = 3


@dataclass(frozen=True)
class Contact:
    """comm_A: how the issuer reaches the holder."""

    channel: CommChannel
    address: str

    @classmethod
    def parse(cls, text: str) -> "Contact":
        """Parse ``channel:address``, e.g. ``sms:+447700900123``."""
        channel, sep, address = text.partition(":")
        if not sep or not address:
            raise ParameterError(f"contact {text!r} is not of the form channel:address")
        try:
            return cls(CommChannel[channel.upper()], address)
        except KeyError:
            raise ParameterError(f"unknown contact channel {channel!r}") from None


@dataclass(frozen=True)
class IssuerRecord:
    person_id: str
    tid: str
    cid: bytes
    valid_from: int
    valid_until: int
    contact: Contact
    photo_hash: bytes
    revocation_bit: bool = False
    revocation_reason: RevocationReason | None = None

    def is_active(self, now: int) -> bool:
        return not self.revocation_bit and now <= self.valid_until


@dataclass(frozen=True)
class IssuedEvent(TlvRecord):
    valid_from: int
    valid_until: int
    cid: bytes
    person_id: str
    tid: str
    channel: CommChannel
    address: str
    photo_hash: bytes

    TLV_FIELDS = (
        TlvField(0x04, "valid_from", UInt(8)),
        TlvField(0x05, "valid_until", UInt(8)),
        TlvField(0x06, "cid", Raw(width=CID_BYTES)),
        TlvField(0x50, "person_id", Utf8(NAME_LIMIT)),
        TlvField(0x51, "tid", Utf8(NAME_LIMIT)),
        TlvField(0x52, "channel", EnumCodec(CommChannel)),
        TlvField(0x53, "address", Utf8(NAME_LIMIT)),
        TlvField(0x54, "photo_hash", Raw(width=PHOTO_HASH_BYTES)),
    )


@dataclass(frozen=True)
class RevokedEvent(TlvRecord):
    cid: bytes
    revoked_at: int
    reason: RevocationReason

    TLV_FIELDS = (
        TlvField(0x06, "cid", Raw(width=CID_BYTES)),
        TlvField(0x11, "revoked_at", UInt(8)),
        TlvField(0x55, "reason", EnumCodec(RevocationReason)),
    )


def decode_event(data: bytes) -> IssuedEvent | RevokedEvent:
    tags = {raw.tag for raw in read_fields(data)}
    if 0x50 in tags:
        return IssuedEvent.from_tlv(data)
    if 0x55 in tags:
        return RevokedEvent.from_tlv(data)
    raise MalformedPayload("unrecognised journal event", 0)


@dataclass
class Notification(DataClassJsonMixin):
    """An outbox entry. Carries no certificate contents."""

    channel: str
    address: str
    kind: str
    cid: str
    at: int


@dataclass(frozen=True)
class IssuerSnapshot:
    """An immutable view of the store taken under the writer lock."""

    records: tuple[IssuerRecord, ...] = field(default_factory=tuple)

    def revoked(self) -> set[bytes]:
        return {record.cid for record in self.records if record.revocation_bit}


class Issuer:
    """The healthcare authority H.

    Parameters
    ----------
    keys : SigKeyPair
        pk_H / sk_H.
    journal_path : Path | str | None, optional
        Event journal. Without one the store lives in memory only.
    outbox_path : Path | str | None, optional
        JSON-lines file receiving notifications to comm_A.
    photo_capture : Callable[[str], bytes] | None, optional
        Free photo capture, called with the person id when no photo is supplied.
    validity_days : int, optional
        Default certificate lifetime.
    """

    def __init__(
        self,
        keys: SigKeyPair,
        journal_path: Path | str | None = None,
        outbox_path: Path | str | None = None,
        photo_capture: Callable[[str], bytes] | None = None,
        validity_days: int = DEFAULT_VALIDITY_DAYS,
    ):
        self.keys = keys
        self.journal_path = Path(journal_path) if journal_path is not None else None
        self.outbox_path = Path(outbox_path) if outbox_path is not None else None
        self.photo_capture = photo_capture
        self.validity_days = validity_days
        self._records: dict[bytes, IssuerRecord] = {}
        self._tids: dict[str, bytes] = {}
        self._mutex = threading.Lock()
        self._replay()

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key

    @property
    def key_id(self) -> bytes:
        return self.keys.key_id

    def _replay(self) -> None:
        self._records.clear()
        self._tids.clear()
        if self.journal_path is None or not self.journal_path.exists():
            return
        with self.journal_path.open("r") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    event = decode_event(base64.b64decode(line.strip(), validate=True))
                except (ValueError, MalformedPayload) as exc:
                    raise MalformedPayload(f"journal line {line_number}: {exc}", 0) from None
                self._apply(event)
        logger.debug("replayed %d records from %s", len(self._records), self.journal_path)

    def _apply(self, event: IssuedEvent | RevokedEvent) -> None:
        if isinstance(event, IssuedEvent):
            self._records[event.cid] = IssuerRecord(
                person_id=event.person_id,
                tid=event.tid,
                cid=event.cid,
                valid_from=event.valid_from,
                valid_until=event.valid_until,
                contact=Contact(event.channel, event.address),
                photo_hash=event.photo_hash,
            )
            self._tids[event.tid] = event.cid
        else:
            record = self._records.get(event.cid)
            if record is None:
                raise MalformedPayload(f"revocation of unknown certificate {event.cid.hex()}", 0)
            self._records[event.cid] = replace(record, revocation_bit=True, revocation_reason=event.reason)

    def _append(self, event: IssuedEvent | RevokedEvent) -> None:
        if self.journal_path is not None:
            with self.journal_path.open("a") as f:
                f.write(base64.b64encode(event.to_tlv()).decode("ascii") + "\n")
        self._apply(event)

    @contextmanager
    def _writer(self) -> Iterator[None]:
        with self._mutex:
            if self.journal_path is None:
                yield
                return
            self.journal_path.parent.mkdir(parents=True, exist_ok=True)
            with self.journal_path.with_suffix(".lock").open("a") as lock:
                fcntl.flock(lock, fcntl.LOCK_EX)
                try:
                    self._replay()
                    yield
                finally:
                    fcntl.flock(lock, fcntl.LOCK_UN)

    def _notify(self, contact: Contact, kind: str, cid: bytes, at: int) -> None:
        if self.outbox_path is None:
            return
        notification = Notification(contact.channel.name.lower(), contact.address, kind, cid.hex(), at)
        with self.outbox_path.open("a") as f:
            f.write(notification.to_json() + "\n")

    def issue_certificate(
        self,
        person_id: str,
        tid: str,
        name: str,
        photo: bytes | None,
        contact: Contact,
        validity_days: int | None = None,
        now: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> SignedCertificate:
        """Issue cert_A to a person who tested positive for antibodies.

        Parameters
        ----------
        person_id : str
            Medical-record key identifying the person.
        tid : str
            Test identity number.
        name : str
            name_A.
        photo : bytes | None
            photo_A as JPEG. When None, the photo capture hook supplies one.
        contact : Contact
            comm_A.
        validity_days : int | None, optional
            Lifetime in days, by default the issuer's configured validity.
        now : int | None, optional
            Issue time in Unix seconds, by default the current time.
        rng : np.random.Generator | None, optional
            Source for the CID.

        Returns
        -------
        SignedCertificate
            The certificate, already journaled.

        Raises
        ------
        DuplicateIssue
            If the person already holds an unexpired, unrevoked certificate.
        DuplicateTid
            If the test identity number was used before.
        CapacityExceeded
            If the photo is over budget or the certificate does not fit a QR code.
        """
        validity_days = self.validity_days if validity_days is None else validity_days
        if validity_days < 1:
            raise ParameterError("validity_days must be at least 1")
        now = int(time.time()) if now is None else now
        if photo is None:
            if self.photo_capture is None:
                raise ParameterError("no photo supplied and no photo capture available")
            photo = self.photo_capture(person_id)
        if len(photo) > PHOTO_BUDGET:
            raise CapacityExceeded(len(photo), PHOTO_BUDGET, "photo")

        with self._writer():
            if any(record.is_active(now) for record in self.records_for(person_id)):
                raise DuplicateIssue(f"person {person_id} already holds a valid certificate")
            if tid in self._tids:
                raise DuplicateTid(f"test {tid} already recorded")
            body = Certificate(
                name=name,
                photo=photo,
                valid_from=now,
                valid_until=now + validity_days * DAY,
                cid=random_bytes(CID_BYTES, rng),
                issuer_key_id=self.key_id,
            )
            certificate = sign_certificate(self.keys.private_key, body)
            qr_payload(certificate, text_mode=False)
            self._append(
                IssuedEvent(
                    valid_from=body.valid_from,
                    valid_until=body.valid_until,
                    cid=body.cid,
                    person_id=person_id,
                    tid=tid,
                    channel=contact.channel,
                    address=contact.address,
                    photo_hash=hashlib.sha256(photo).digest(),
                )
            )
        logger.info("issued certificate %s", body.cid.hex()[:8])
        self._notify(contact, "issued", body.cid, now)
        return certificate

    def revoke_by_cid(self, cid: bytes, reason: RevocationReason, now: int | None = None) -> None:
        """Set the revocation bit b_CID. Revoking an already revoked certificate changes nothing.

        Raises
        ------
        UnknownCid
            If no certificate with this CID was issued.
        """
        now = int(time.time()) if now is None else now
        with self._writer():
            record = self._records.get(bytes(cid))
            if record is None:
                raise UnknownCid(f"no certificate {bytes(cid).hex()}")
            if record.revocation_bit:
                return
            self._append(RevokedEvent(cid=record.cid, revoked_at=now, reason=RevocationReason(reason)))
        logger.info("revoked certificate %s (%s)", record.cid.hex()[:8], RevocationReason(reason).name.lower())
        self._notify(record.contact, "revoked", record.cid, now)

    def revoke_by_tid(
        self, tid: str, reason: RevocationReason = RevocationReason.ERROR, now: int | None = None
    ) -> bytes:
        """Revoke the certificate issued for a test, e.g. when a test batch is recalled.

        Raises
        ------
        UnknownTid
            If the test identity number is not recorded.
        """
        with self._writer():
            cid = self._tids.get(tid)
        if cid is None:
            raise UnknownTid(f"no test {tid}")
        self.revoke_by_cid(cid, reason, now)
        return cid

    def publish_revocation_list(self, now: int) -> RevocationList:
        """Sign rev: every revoked CID whose certificate has not yet expired at ``now``."""
        snapshot = self.snapshot()
        entries = {record.cid for record in snapshot.records if record.revocation_bit and now <= record.valid_until}
        rev = sign_revocation_list(self.keys.private_key, self.keys.public_key, ListKind.CERTIFICATE, now, entries)
        logger.info("published revocation list with %d entries", len(rev.entries))
        return rev

    def records_for(self, person_id: str) -> list[IssuerRecord]:
        return [record for record in self._records.values() if record.person_id == person_id]

    def record(self, cid: bytes) -> IssuerRecord:
        try:
            return self._records[bytes(cid)]
        except KeyError:
            raise UnknownCid(f"no certificate {bytes(cid).hex()}") from None

    def snapshot(self) -> IssuerSnapshot:
        with self._writer():
            return IssuerSnapshot(tuple(self._records.values()))
