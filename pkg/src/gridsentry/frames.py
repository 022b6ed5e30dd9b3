"""Ethernet frame structures and the BER-TLV codec for GOOSE and SV APDUs.

All functions here are pure: decoding never mutates the frame, encoding is
byte-deterministic, and any malformed input raises a structured error from
:mod:`gridsentry.errors` instead of crashing.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

from .errors import (
    DecodeError,
    InvariantViolationError,
    MissingFieldError,
    ProtocolMismatchError,
    UnsupportedShapeError,
)

ETHERTYPE_GOOSE = 0x88B8
ETHERTYPE_SV = 0x88BA
ETHERTYPE_VLAN = 0x8100

SMP_CNT_MAX = 4799

# TLV tags (context-specific, definite length)
_TAG_GOOSE_PDU = 0x61
_TAG_GOCB_REF = 0x80
_TAG_TTL = 0x81
_TAG_DAT_SET = 0x82
_TAG_GO_ID = 0x83
_TAG_ST_NUM = 0x85
_TAG_SQ_NUM = 0x86
_TAG_ALL_DATA = 0xAB
_TAG_BOOLEAN = 0x83

_TAG_SAV_PDU = 0x60
_TAG_NO_ASDU = 0x80
_TAG_SEQ_ASDU = 0xA2
_TAG_ASDU = 0x30
_TAG_SV_ID = 0x80
_TAG_SMP_CNT = 0x82


@dataclass
class RawFrame:
    """One captured Ethernet II frame, timestamped in microseconds."""

    timestamp: int
    dst_mac: bytes
    src_mac: bytes
    ethertype: int
    payload: bytes


@dataclass
class GooseApdu:
    appid: int
    gocbRef: str
    datSet: str
    goID: str
    stNum: int
    sqNum: int
    data1: bool
    data2: bool
    ttl_ms: Optional[int] = None  # carried for wire fidelity, unused by rules

    def validate(self):
        for name in ("gocbRef", "datSet", "goID"):
            if not getattr(self, name):
                raise InvariantViolationError(f"GooseApdu.{name} must be non-empty")
        for name, bits in (("appid", 16), ("stNum", 32), ("sqNum", 32)):
            value = getattr(self, name)
            if not 0 <= value < (1 << bits):
                raise InvariantViolationError(f"GooseApdu.{name}={value} out of {bits}-bit range")
        if self.ttl_ms is not None and not 0 <= self.ttl_ms < (1 << 32):
            raise InvariantViolationError(f"GooseApdu.ttl_ms={self.ttl_ms} out of 32-bit range")


@dataclass
class SvApdu:
    appid: int
    svID: str
    smpCnt: int

    def validate(self, for_encode=False):
        if not self.svID:
            raise InvariantViolationError("SvApdu.svID must be non-empty")
        if not 0 <= self.appid < (1 << 16):
            raise InvariantViolationError(f"SvApdu.appid={self.appid} out of range")
        if not 0 <= self.smpCnt < (1 << 16):
            raise InvariantViolationError(f"SvApdu.smpCnt={self.smpCnt} out of 16-bit range")
        if for_encode and self.smpCnt > SMP_CNT_MAX:
            raise InvariantViolationError(
                f"SvApdu.smpCnt={self.smpCnt} exceeds {SMP_CNT_MAX} on encode"
            )


# ---------------------------------------------------------------------------
# TLV primitives
# ---------------------------------------------------------------------------

def _read_tlv(buf: bytes, offset: int, end: int) -> Tuple[int, bytes, int]:
    """Read one tag-length-value; returns (tag, value, next offset)."""
    if offset >= end:
        raise DecodeError("truncated TLV: no tag byte", offset)
    tag = buf[offset]
    offset += 1
    if offset >= end:
        raise DecodeError("truncated TLV: no length byte", offset)
    first = buf[offset]
    offset += 1
    if first < 0x80:
        length = first
    elif first == 0x80:
        raise DecodeError("indefinite TLV length not supported", offset - 1)
    else:
        n = first & 0x7F
        if n > 4:
            raise DecodeError(f"TLV length field of {n} octets too wide", offset - 1)
        if offset + n > end:
            raise DecodeError("truncated TLV length field", offset)
        length = int.from_bytes(buf[offset : offset + n], "big")
        offset += n
    if offset + length > end:
        raise DecodeError(f"TLV value of {length} octets overruns buffer", offset)
    return tag, buf[offset : offset + length], offset + length


def _encode_tlv(tag: int, value: bytes) -> bytes:
    n = len(value)
    if n < 0x80:
        return bytes([tag, n]) + value
    size = (n.bit_length() + 7) // 8
    return bytes([tag, 0x80 | size]) + n.to_bytes(size, "big") + value


def _encode_uint(value: int) -> bytes:
    """Minimal-length big-endian unsigned integer (BER minimal-octets)."""
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def _decode_uint(value: bytes, offset: int, max_octets: int) -> int:
    if not 1 <= len(value) <= max_octets:
        raise DecodeError(
            f"unsigned integer of {len(value)} octets (expected 1..{max_octets})", offset
        )
    return int.from_bytes(value, "big")


def _apdu_header(appid: int, pdu: bytes) -> bytes:
    length = 8 + len(pdu)
    return appid.to_bytes(2, "big") + length.to_bytes(2, "big") + b"\x00\x00\x00\x00" + pdu


def _split_apdu(frame: RawFrame) -> Tuple[int, bytes]:
    payload = frame.payload
    if len(payload) < 8:
        raise DecodeError("payload shorter than the 8-octet APDU header", len(payload))
    appid = int.from_bytes(payload[0:2], "big")
    length = int.from_bytes(payload[2:4], "big")
    if length < 8:
        raise DecodeError(f"APDU length field {length} below header size", 2)
    if length > len(payload):
        raise DecodeError(f"APDU length field {length} overruns payload", 2)
    return appid, payload[8:length]


def _check_ethertype(frame: RawFrame, expected: int):
    if frame.ethertype == ETHERTYPE_VLAN:
        raise UnsupportedShapeError("VLAN-tagged (0x8100) frames are not supported")
    if frame.ethertype != expected:
        raise ProtocolMismatchError(
            f"ethertype 0x{frame.ethertype:04X}, expected 0x{expected:04X}"
        )


# ---------------------------------------------------------------------------
# GOOSE
# ---------------------------------------------------------------------------

def decode_goose(frame: RawFrame) -> GooseApdu:
    """Parse a GOOSE frame payload (APDU header + goosePdu TLV)."""
    _check_ethertype(frame, ETHERTYPE_GOOSE)
    appid, pdu = _split_apdu(frame)
    tag, body, _ = _read_tlv(pdu, 0, len(pdu))
    if tag != _TAG_GOOSE_PDU:
        raise DecodeError(f"expected goosePdu tag 0x61, got 0x{tag:02X}", 8)

    fields = {}
    booleans = None
    off = 0
    end = len(body)
    while off < end:
        tag, value, nxt = _read_tlv(body, off, end)
        if tag == _TAG_GOCB_REF:
            fields["gocbRef"] = value.decode("ascii", errors="replace")
        elif tag == _TAG_TTL:
            fields["ttl_ms"] = _decode_uint(value, off, 4)
        elif tag == _TAG_DAT_SET:
            fields["datSet"] = value.decode("ascii", errors="replace")
        elif tag == _TAG_GO_ID:
            fields["goID"] = value.decode("ascii", errors="replace")
        elif tag == _TAG_ST_NUM:
            fields["stNum"] = _decode_uint(value, off, 4)
        elif tag == _TAG_SQ_NUM:
            fields["sqNum"] = _decode_uint(value, off, 4)
        elif tag == _TAG_ALL_DATA:
            booleans = _decode_all_data(value, off)
        # unknown tags inside the wrapper are skipped (length-delimited)
        off = nxt

    for name in ("gocbRef", "datSet", "goID", "stNum", "sqNum"):
        if name not in fields:
            raise MissingFieldError(name)
    if booleans is None:
        raise MissingFieldError("allData")
    apdu = GooseApdu(
        appid=appid,
        gocbRef=fields["gocbRef"],
        datSet=fields["datSet"],
        goID=fields["goID"],
        stNum=fields["stNum"],
        sqNum=fields["sqNum"],
        data1=booleans[0],
        data2=booleans[1],
        ttl_ms=fields.get("ttl_ms"),
    )
    if not apdu.gocbRef or not apdu.datSet or not apdu.goID:
        raise MissingFieldError("gocbRef" if not apdu.gocbRef else ("datSet" if not apdu.datSet else "goID"))
    return apdu


def _decode_all_data(value: bytes, base_offset: int):
    entries = []
    off = 0
    while off < len(value):
        tag, v, off = _read_tlv(value, off, len(value))
        if tag != _TAG_BOOLEAN:
            raise UnsupportedShapeError(
                f"allData entry tag 0x{tag:02X} is not a boolean"
            )
        if len(v) != 1:
            raise DecodeError(f"boolean of {len(v)} octets", base_offset + off)
        entries.append(v[0] != 0)
    if len(entries) != 2:
        raise UnsupportedShapeError(
            f"allData carries {len(entries)} entries, exactly 2 booleans supported"
        )
    return entries


def encode_goose(apdu: GooseApdu, dst_mac: bytes, src_mac: bytes, timestamp: int) -> RawFrame:
    """Build a GOOSE RawFrame; byte-deterministic for identical inputs."""
    apdu.validate()
    inner = _encode_tlv(_TAG_GOCB_REF, apdu.gocbRef.encode("ascii"))
    if apdu.ttl_ms is not None:
        inner += _encode_tlv(_TAG_TTL, _encode_uint(apdu.ttl_ms))
    inner += _encode_tlv(_TAG_DAT_SET, apdu.datSet.encode("ascii"))
    inner += _encode_tlv(_TAG_GO_ID, apdu.goID.encode("ascii"))
    inner += _encode_tlv(_TAG_ST_NUM, _encode_uint(apdu.stNum))
    inner += _encode_tlv(_TAG_SQ_NUM, _encode_uint(apdu.sqNum))
    all_data = b"".join(
        _encode_tlv(_TAG_BOOLEAN, b"\x01" if bit else b"\x00")
        for bit in (apdu.data1, apdu.data2)
    )
    inner += _encode_tlv(_TAG_ALL_DATA, all_data)
    pdu = _encode_tlv(_TAG_GOOSE_PDU, inner)
    return RawFrame(
        timestamp=timestamp,
        dst_mac=bytes(dst_mac),
        src_mac=bytes(src_mac),
        ethertype=ETHERTYPE_GOOSE,
        payload=_apdu_header(apdu.appid, pdu),
    )


# ---------------------------------------------------------------------------
# SV
# ---------------------------------------------------------------------------

def decode_sv(frame: RawFrame) -> SvApdu:
    """Parse a single-ASDU SV frame payload (APDU header + savPdu TLV)."""
    _check_ethertype(frame, ETHERTYPE_SV)
    appid, pdu = _split_apdu(frame)
    tag, body, _ = _read_tlv(pdu, 0, len(pdu))
    if tag != _TAG_SAV_PDU:
        raise DecodeError(f"expected savPdu tag 0x60, got 0x{tag:02X}", 8)

    no_asdu = None
    seq = None
    off = 0
    while off < len(body):
        tag, value, off = _read_tlv(body, off, len(body))
        if tag == _TAG_NO_ASDU:
            no_asdu = _decode_uint(value, off, 2)
        elif tag == _TAG_SEQ_ASDU:
            seq = value
    if no_asdu is None:
        raise MissingFieldError("noASDU")
    if no_asdu != 1:
        raise UnsupportedShapeError(f"noASDU={no_asdu}; only single-ASDU frames supported")
    if seq is None:
        raise MissingFieldError("seqOfASDU")

    tag, asdu, rest = _read_tlv(seq, 0, len(seq))
    if tag != _TAG_ASDU:
        raise DecodeError(f"expected ASDU tag 0x30, got 0x{tag:02X}", 0)
    if rest != len(seq):
        raise UnsupportedShapeError("seqOfASDU carries more than one ASDU")

    sv_id = None
    smp_cnt = None
    off = 0
    while off < len(asdu):
        tag, value, off = _read_tlv(asdu, off, len(asdu))
        if tag == _TAG_SV_ID:
            sv_id = value.decode("ascii", errors="replace")
        elif tag == _TAG_SMP_CNT:
            if len(value) != 2:
                raise DecodeError(f"smpCnt of {len(value)} octets (expected 2)", off)
            smp_cnt = int.from_bytes(value, "big")
    if sv_id is None or sv_id == "":
        raise MissingFieldError("svID")
    if smp_cnt is None:
        raise MissingFieldError("smpCnt")
    return SvApdu(appid=appid, svID=sv_id, smpCnt=smp_cnt)


def encode_sv(apdu: SvApdu, dst_mac: bytes, src_mac: bytes, timestamp: int) -> RawFrame:
    """Build an SV RawFrame; smpCnt must be within [0, 4799]."""
    apdu.validate(for_encode=True)
    asdu = _encode_tlv(_TAG_SV_ID, apdu.svID.encode("ascii"))
    asdu += _encode_tlv(_TAG_SMP_CNT, apdu.smpCnt.to_bytes(2, "big"))
    body = _encode_tlv(_TAG_NO_ASDU, b"\x01")
    body += _encode_tlv(_TAG_SEQ_ASDU, _encode_tlv(_TAG_ASDU, asdu))
    pdu = _encode_tlv(_TAG_SAV_PDU, body)
    return RawFrame(
        timestamp=timestamp,
        dst_mac=bytes(dst_mac),
        src_mac=bytes(src_mac),
        ethertype=ETHERTYPE_SV,
        payload=_apdu_header(apdu.appid, pdu),
    )
