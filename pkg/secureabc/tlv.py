"""Canonical tag-length-value encoding.

Every field is emitted as ``[tag: 1 byte][length: 4 bytes big-endian][value]``. A record's body fields appear in
strictly ascending tag order, repeated tags are contiguous with strictly ascending values, and signed records end
with the signature field (tag ``0x07``), which is excluded from the signed byte range. Decoding rejects anything
that would not be reproduced byte-for-byte by encoding.
"""

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING, Any, ClassVar

from .defaults import SIGNATURE_BYTES
from .errors import CapacityExceeded, EncodingError, MalformedPayload

if TYPE_CHECKING:
    from typing_extensions import Self

HEADER_BYTES = 5
SIGNATURE_TAG = 0x07


class Codec:
    """Converts one field value to and from its value bytes."""

    def pack(self, value: Any) -> bytes:
        raise NotImplementedError

    def unpack(self, raw: bytes, offset: int) -> Any:
        raise NotImplementedError


@dataclass(frozen=True)
class UInt(Codec):
    """Unsigned big-endian integer of fixed width."""

    width: int

    def pack(self, value: int) -> bytes:
        if value < 0:
            raise ValueError(f"negative value {value}")
        return int(value).to_bytes(self.width, "big")

    def unpack(self, raw: bytes, offset: int) -> int:
        if len(raw) != self.width:
            raise MalformedPayload(f"expected {self.width}-byte integer, got {len(raw)} bytes", offset)
        return int.from_bytes(raw, "big")


@dataclass(frozen=True)
class Float64(Codec):
    """IEEE-754 binary64, big-endian. Only finite values are representable."""

    def pack(self, value: float) -> bytes:
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value}")
        return struct.pack(">d", value)

    def unpack(self, raw: bytes, offset: int) -> float:
        if len(raw) != 8:
            raise MalformedPayload(f"expected 8-byte float, got {len(raw)} bytes", offset)
        (value,) = struct.unpack(">d", raw)
        if not math.isfinite(value):
            raise MalformedPayload("non-finite float", offset)
        return value


@dataclass(frozen=True)
class Raw(Codec):
    """Opaque bytes, either of an exact width or bounded by a maximum length."""

    width: int | None = None
    max_length: int | None = None

    def pack(self, value: bytes) -> bytes:
        self._check(len(value), ValueError)
        return bytes(value)

    def unpack(self, raw: bytes, offset: int) -> bytes:
        self._check(len(raw), lambda message: MalformedPayload(message, offset))
        return bytes(raw)

    def _check(self, length: int, error) -> None:
        if self.width is not None and length != self.width:
            raise error(f"expected {self.width} bytes, got {length}")
        if self.max_length is not None and length > self.max_length:
            raise error(f"{length} bytes exceeds limit of {self.max_length}")


@dataclass(frozen=True)
class Utf8(Codec):
    """UTF-8 text bounded by an encoded-length maximum."""

    max_length: int

    def pack(self, value: str) -> bytes:
        encoded = value.encode("utf-8")
        if len(encoded) > self.max_length:
            raise ValueError(f"{len(encoded)} bytes exceeds limit of {self.max_length}")
        return encoded

    def unpack(self, raw: bytes, offset: int) -> str:
        if len(raw) > self.max_length:
            raise MalformedPayload(f"{len(raw)} bytes exceeds limit of {self.max_length}", offset)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload(f"invalid UTF-8: {exc.reason}", offset + exc.start) from None


@dataclass(frozen=True)
class EnumCodec(Codec):
    """An IntEnum stored as a one-byte unsigned integer."""

    enum: type[IntEnum]

    def pack(self, value: IntEnum) -> bytes:
        return UInt(1).pack(self.enum(value))

    def unpack(self, raw: bytes, offset: int) -> IntEnum:
        number = UInt(1).unpack(raw, offset)
        try:
            return self.enum(number)
        except ValueError:
            raise MalformedPayload(f"unknown {self.enum.__name__} value {number}", offset) from None


@dataclass(frozen=True)
class TlvField:
    tag: int
    name: str
    codec: Codec
    repeated: bool = False


@dataclass(frozen=True)
class RawField:
    tag: int
    offset: int
    value: bytes


def encode_field(tag: int, value: bytes) -> bytes:
    """Frame a single value."""
    return bytes([tag]) + len(value).to_bytes(4, "big") + value


def read_fields(data: bytes) -> list[RawField]:
    """Split a byte string into framed fields without interpreting them.

    Parameters
    ----------
    data : bytes
        The encoded record.

    Returns
    -------
    list[RawField]
        The fields in order of appearance.

    Raises
    ------
    MalformedPayload
        If a header is truncated or a declared length runs past the end of the data.
    """
    data = bytes(data)
    fields = []
    offset = 0
    while offset < len(data):
        if len(data) - offset < HEADER_BYTES:
            raise MalformedPayload("truncated field header", offset)
        tag = data[offset]
        length = int.from_bytes(data[offset + 1 : offset + HEADER_BYTES], "big")
        start = offset + HEADER_BYTES
        if length > len(data) - start:
            raise MalformedPayload(f"field length {length} overruns payload", offset + 1)
        fields.append(RawField(tag=tag, offset=offset, value=data[start : start + length]))
        offset = start + length
    return fields


def _decode_body(schema: tuple[TlvField, ...], body: list[RawField], end: int) -> dict[str, Any]:
    values: dict[str, Any] = {}
    index = 0
    for spec in schema:
        if spec.repeated:
            items: list[Any] = []
            while index < len(body) and body[index].tag == spec.tag:
                field = body[index]
                item = spec.codec.unpack(field.value, field.offset + HEADER_BYTES)
                if items and not items[-1] < item:
                    raise MalformedPayload(f"{spec.name} entries not strictly ascending", field.offset)
                items.append(item)
                index += 1
            values[spec.name] = tuple(items)
            continue
        if index >= len(body) or body[index].tag != spec.tag:
            offset = body[index].offset if index < len(body) else end
            raise MalformedPayload(f"expected tag 0x{spec.tag:02x} ({spec.name})", offset)
        field = body[index]
        values[spec.name] = spec.codec.unpack(field.value, field.offset + HEADER_BYTES)
        index += 1
    if index != len(body):
        raise MalformedPayload(f"unexpected tag 0x{body[index].tag:02x}", body[index].offset)
    return values


class TlvRecord:
    """Mixin giving a frozen dataclass its canonical TLV form.

    Subclasses list their body fields in ``TLV_FIELDS`` (ascending tags) and set ``SIGNED`` when they carry a
    trailing ``signature`` attribute.
    """

    TLV_FIELDS: ClassVar[tuple[TlvField, ...]] = ()
    SIGNED: ClassVar[bool] = False

    def validate(self) -> None:
        """Check type invariants, raising EncodingError naming the offending field.

        Size budgets may raise CapacityExceeded instead.
        """

    def signed_bytes(self) -> bytes:
        """Encode the body, i.e. exactly the byte range covered by the signature."""
        self.validate()
        out = bytearray()
        for spec in self.TLV_FIELDS:
            value = getattr(self, spec.name)
            for item in sorted(value) if spec.repeated else [value]:
                try:
                    out += encode_field(spec.tag, spec.codec.pack(item))
                except (ValueError, TypeError, OverflowError, struct.error) as exc:
                    raise EncodingError(spec.name, str(exc)) from None
        return bytes(out)

    def to_tlv(self) -> bytes:
        body = self.signed_bytes()
        if not self.SIGNED:
            return body
        signature = getattr(self, "signature")
        if len(signature) != SIGNATURE_BYTES:
            raise EncodingError("signature", f"expected {SIGNATURE_BYTES} bytes, got {len(signature)}")
        return body + encode_field(SIGNATURE_TAG, signature)

    @classmethod
    def from_tlv(cls, data: bytes) -> "Self":
        return cls.from_fields(read_fields(data), len(data))

    @classmethod
    def from_fields(cls, raw_fields: list[RawField], end: int) -> "Self":
        values: dict[str, Any] = {}
        body = raw_fields
        if cls.SIGNED:
            if not raw_fields or raw_fields[-1].tag != SIGNATURE_TAG:
                raise MalformedPayload("missing trailing signature", raw_fields[-1].offset if raw_fields else end)
            body, signature = raw_fields[:-1], raw_fields[-1]
            values["signature"] = Raw(width=SIGNATURE_BYTES).unpack(signature.value, signature.offset + HEADER_BYTES)
            end = signature.offset
        values.update(_decode_body(cls.TLV_FIELDS, body, end))
        record = cls(**values)
        try:
            record.validate()
        except (EncodingError, CapacityExceeded) as exc:
            raise MalformedPayload(str(exc), body[0].offset if body else 0) from None
        return record
