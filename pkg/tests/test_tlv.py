import math
from dataclasses import dataclass

import pytest

from secureabc.errors import EncodingError, MalformedPayload
from secureabc.tlv import (
    HEADER_BYTES,
    Float64,
    Raw,
    TlvField,
    TlvRecord,
    UInt,
    Utf8,
    encode_field,
    read_fields,
)


@dataclass(frozen=True)
class _Sample(TlvRecord):
    count: int
    label: str
    items: tuple[bytes, ...] = ()

    TLV_FIELDS = (
        TlvField(0x01, "count", UInt(2)),
        TlvField(0x02, "label", Utf8(16)),
        TlvField(0x03, "items", Raw(width=2), repeated=True),
    )


class TestEncodeField:
    def test_header_layout(self):
        """Test that a field is framed as tag, 4-byte big-endian length, value."""
        # Test
        framed = encode_field(0x12, b"abc")

        # Verify
        assert framed == b"\x12\x00\x00\x00\x03abc"
        assert len(framed) == HEADER_BYTES + 3

    def test_empty_value(self):
        """Test that an empty value still carries a header."""
        assert encode_field(0x01, b"") == b"\x01\x00\x00\x00\x00"


class TestReadFields:
    def test_reads_offsets(self):
        """Test that fields are returned with the offset of their header."""
        data = encode_field(0x01, b"\x00\x07") + encode_field(0x02, b"hi")

        # Test
        fields = read_fields(data)

        # Verify
        assert [field.tag for field in fields] == [0x01, 0x02]
        assert [field.offset for field in fields] == [0, 7]
        assert fields[1].value == b"hi"

    def test_truncated_header(self):
        """Test that a header cut short is reported at its offset."""
        data = encode_field(0x01, b"\x00\x07") + b"\x02\x00"

        with pytest.raises(MalformedPayload) as exc_info:
            read_fields(data)

        assert exc_info.value.offset == 7

    def test_length_overrun(self):
        """Test that a declared length past the end of the data is rejected."""
        data = b"\x01\x00\x00\x00\x09abc"

        with pytest.raises(MalformedPayload) as exc_info:
            read_fields(data)

        assert exc_info.value.offset == 1


class TestCodecs:
    def test_uint_rejects_wrong_width(self):
        """Test that integers must use their fixed width."""
        with pytest.raises(MalformedPayload):
            UInt(2).unpack(b"\x00\x00\x01", 0)

    def test_uint_rejects_negative(self):
        """Test that negative integers cannot be packed."""
        with pytest.raises(ValueError):
            UInt(1).pack(-1)

    def test_float_rejects_non_finite(self):
        """Test that NaN and infinities are refused in both directions."""
        with pytest.raises(ValueError):
            Float64().pack(math.inf)
        with pytest.raises(MalformedPayload):
            Float64().unpack(b"\x7f\xf8\x00\x00\x00\x00\x00\x00", 0)

    def test_utf8_rejects_invalid_bytes(self):
        """Test that invalid UTF-8 is reported at the offending byte."""
        with pytest.raises(MalformedPayload) as exc_info:
            Utf8(8).unpack(b"ab\xff", 10)

        assert exc_info.value.offset == 12

    def test_raw_bounds(self):
        """Test exact-width and maximum-length raw fields."""
        assert Raw(width=2).unpack(b"ab", 0) == b"ab"
        with pytest.raises(MalformedPayload):
            Raw(max_length=1).unpack(b"ab", 0)


class TestTlvRecord:
    def test_canonical_order(self):
        """Test that repeated fields are emitted sorted, regardless of the order given."""
        record = _Sample(count=7, label="x", items=(b"bb", b"aa"))

        # Test
        data = record.to_tlv()

        # Verify
        fields = read_fields(data)
        assert [field.value for field in fields if field.tag == 0x03] == [b"aa", b"bb"]

    def test_decode_round_trip(self):
        """Test that decoding returns an equal record with repeated fields sorted."""
        record = _Sample(count=7, label="héllo", items=(b"aa", b"bb"))

        assert _Sample.from_tlv(record.to_tlv()) == record

    def test_rejects_out_of_order_tags(self):
        """Test that swapping two fields makes the payload non-canonical."""
        data = encode_field(0x02, b"x") + encode_field(0x01, b"\x00\x07")

        with pytest.raises(MalformedPayload):
            _Sample.from_tlv(data)

    def test_rejects_unsorted_repeats(self):
        """Test that repeated fields out of order are rejected."""
        data = (
            encode_field(0x01, b"\x00\x07")
            + encode_field(0x02, b"x")
            + encode_field(0x03, b"bb")
            + encode_field(0x03, b"aa")
        )

        with pytest.raises(MalformedPayload):
            _Sample.from_tlv(data)

    def test_rejects_trailing_field(self):
        """Test that an unknown extra tag is rejected."""
        data = _Sample(count=1, label="x").to_tlv() + encode_field(0x09, b"")

        with pytest.raises(MalformedPayload):
            _Sample.from_tlv(data)

    def test_encoding_error_names_field(self):
        """Test that an unencodable value raises EncodingError naming the field."""
        with pytest.raises(EncodingError) as exc_info:
            _Sample(count=70_000, label="x").to_tlv()

        assert exc_info.value.field == "count"
