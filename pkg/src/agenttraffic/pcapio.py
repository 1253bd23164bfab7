"""Classic pcap reading and writing, plus frame decoding.

Only the classic container is handled (both byte orders, microsecond and
nanosecond timestamps).  Frames are decoded down to TCP/UDP where possible;
everything else is kept as a length-only record so byte totals over a file
stay exact.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

MAGIC_MICRO = 0xA1B2C3D4
MAGIC_NANO = 0xA1B23C4D

MICROSECOND = "microsecond"
NANOSECOND = "nanosecond"

# Link types we decode, numbered per the tcpdump.org registry.
LINKTYPE_NULL = 0
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD

IPPROTO_TCP = 6
IPPROTO_UDP = 17


class PcapError(Exception):
    """Base error for capture file handling."""


class UnknownMagic(PcapError):
    """The input does not start with a classic-pcap magic number."""


class TruncatedHeader(PcapError):
    """The input is shorter than the 24-byte global header."""


@dataclass(frozen=True)
class TcpInfo:
    src_port: int
    dst_port: int
    syn: bool
    ack: bool
    fin: bool
    rst: bool
    psh: bool
    payload_length: int


@dataclass(frozen=True)
class UdpInfo:
    src_port: int
    dst_port: int
    payload_length: int


@dataclass(frozen=True)
class PacketRecord:
    """One capture record.

    ``frame_length`` is the on-wire length including link-layer headers
    (the quantity summed by stream accounting).  ``transport`` is None for
    frames that are not IP or not TCP/UDP; ``note`` then says why, and the
    record still participates in byte totals.
    """

    index: int
    ts_sec: int
    ts_frac: int
    frame_length: int
    captured_length: int
    frame_data: bytes
    src_address: str | None = None
    dst_address: str | None = None
    transport: TcpInfo | UdpInfo | None = None
    note: str | None = None

    @property
    def timestamp(self) -> tuple[int, int]:
        return (self.ts_sec, self.ts_frac)

    @property
    def is_tcp(self) -> bool:
        return isinstance(self.transport, TcpInfo)


@dataclass(frozen=True)
class CaptureFile:
    byte_order: str  # "big" | "little"
    timestamp_resolution: str  # MICROSECOND | NANOSECOND
    link_type: int
    snap_length: int
    packets: tuple[PacketRecord, ...]
    truncated: bool = False


def _flags(bits: int) -> tuple[bool, bool, bool, bool, bool]:
    # (syn, ack, fin, rst, psh)
    return (
        bool(bits & 0x02),
        bool(bits & 0x10),
        bool(bits & 0x01),
        bool(bits & 0x04),
        bool(bits & 0x08),
    )


def _decode_tcp(segment: bytes, onwire_payload_budget: int) -> TcpInfo | None:
    if len(segment) < 20:
        return None
    src_port, dst_port = struct.unpack(">HH", segment[:4])
    data_offset = (segment[12] >> 4) * 4
    if data_offset < 20 or data_offset > onwire_payload_budget + len(segment):
        return None
    syn, ack, fin, rst, psh = _flags(segment[13])
    # On-wire payload from the IP header, clamped to the bytes actually
    # stored so the record invariants hold for snapped captures too.
    payload = max(onwire_payload_budget - data_offset, 0)
    payload = min(payload, max(len(segment) - data_offset, 0))
    return TcpInfo(src_port, dst_port, syn, ack, fin, rst, psh, payload)


def _decode_udp(segment: bytes) -> UdpInfo | None:
    if len(segment) < 8:
        return None
    src_port, dst_port, length = struct.unpack(">HHH", segment[:6])
    return UdpInfo(src_port, dst_port, max(length - 8, 0))


def _decode_ipv4(data: bytes) -> tuple[str, str, TcpInfo | UdpInfo | None, str | None]:
    if len(data) < 20:
        raise ValueError("ipv4 header shorter than 20 bytes")
    ihl = (data[0] & 0x0F) * 4
    if (data[0] >> 4) != 4 or ihl < 20 or ihl > len(data):
        raise ValueError("inconsistent ipv4 header")
    total_length = struct.unpack(">H", data[2:4])[0]
    if total_length < ihl:
        raise ValueError("ipv4 total length smaller than header")
    proto = data[9]
    src = str(ipaddress.IPv4Address(data[12:16]))
    dst = str(ipaddress.IPv4Address(data[16:20]))
    frag_offset = struct.unpack(">H", data[6:8])[0] & 0x1FFF
    if frag_offset:
        return src, dst, None, "ipv4 fragment"
    segment = data[ihl:]
    if proto == IPPROTO_TCP:
        tcp = _decode_tcp(segment, total_length - ihl)
        if tcp is None:
            raise ValueError("tcp header inconsistent with captured bytes")
        return src, dst, tcp, None
    if proto == IPPROTO_UDP:
        udp = _decode_udp(segment)
        if udp is None:
            raise ValueError("udp header inconsistent with captured bytes")
        return src, dst, udp, None
    return src, dst, None, f"ip protocol {proto}"


def _decode_ipv6(data: bytes) -> tuple[str, str, TcpInfo | UdpInfo | None, str | None]:
    if len(data) < 40:
        raise ValueError("ipv6 header shorter than 40 bytes")
    if (data[0] >> 4) != 6:
        raise ValueError("inconsistent ipv6 header")
    payload_length = struct.unpack(">H", data[4:6])[0]
    next_header = data[6]
    src = str(ipaddress.IPv6Address(data[8:24]))
    dst = str(ipaddress.IPv6Address(data[24:40]))
    segment = data[40:]
    if next_header == IPPROTO_TCP:
        tcp = _decode_tcp(segment, payload_length)
        if tcp is None:
            raise ValueError("tcp header inconsistent with captured bytes")
        return src, dst, tcp, None
    if next_header == IPPROTO_UDP:
        udp = _decode_udp(segment)
        if udp is None:
            raise ValueError("udp header inconsistent with captured bytes")
        return src, dst, udp, None
    return src, dst, None, f"ipv6 next header {next_header}"


def _ip_payload(link_type: int, frame: bytes) -> tuple[int, bytes] | str:
    """Strip the link-layer header; returns (ip_version, ip_bytes) or a note."""
    if link_type == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            return "ethernet frame shorter than 14 bytes"
        ethertype = struct.unpack(">H", frame[12:14])[0]
        if ethertype == ETHERTYPE_IPV4:
            return (4, frame[14:])
        if ethertype == ETHERTYPE_IPV6:
            return (6, frame[14:])
        return f"non-IP ethertype 0x{ethertype:04x}"
    if link_type == LINKTYPE_NULL:
        if len(frame) < 4:
            return "loopback frame shorter than 4 bytes"
        # The family field is in the writing host's byte order.
        family = struct.unpack("<I", frame[:4])[0]
        if family > 0xFFFF:
            family = struct.unpack(">I", frame[:4])[0]
        if family == 2:
            return (4, frame[4:])
        if family in (24, 28, 30):
            return (6, frame[4:])
        return f"non-IP loopback family {family}"
    if link_type == LINKTYPE_RAW:
        if not frame:
            return "empty raw-IP frame"
        version = frame[0] >> 4
        if version in (4, 6):
            return (version, frame)
        return f"raw frame with IP version {version}"
    return f"unsupported link type {link_type}"


def decode_packet(
    link_type: int,
    raw_frame: bytes,
    *,
    index: int = 0,
    ts_sec: int = 0,
    ts_frac: int = 0,
    frame_length: int | None = None,
    captured_length: int | None = None,
) -> PacketRecord:
    """Decode one frame into a PacketRecord.

    Frames that are not IP, not TCP/UDP, or internally inconsistent come
    back with ``transport=None`` and a diagnostic note; they are never
    dropped, so length totals stay conservable.
    """
    captured = len(raw_frame) if captured_length is None else captured_length
    onwire = captured if frame_length is None else frame_length
    base = dict(
        index=index,
        ts_sec=ts_sec,
        ts_frac=ts_frac,
        frame_length=onwire,
        captured_length=captured,
        frame_data=raw_frame,
    )
    stripped = _ip_payload(link_type, raw_frame)
    if isinstance(stripped, str):
        return PacketRecord(**base, note=stripped)
    version, ip_bytes = stripped
    try:
        if version == 4:
            src, dst, transport, note = _decode_ipv4(ip_bytes)
        else:
            src, dst, transport, note = _decode_ipv6(ip_bytes)
    except ValueError as exc:
        return PacketRecord(**base, note=f"malformed frame: {exc}")
    return PacketRecord(**base, src_address=src, dst_address=dst, transport=transport, note=note)


def parse_capture(raw: bytes) -> CaptureFile:
    """Parse classic pcap bytes into a CaptureFile.

    A record header that promises more bytes than remain stops parsing and
    sets ``truncated`` instead of failing or silently returning less.
    """
    if len(raw) < GLOBAL_HEADER_LEN:
        raise TruncatedHeader(f"global header needs 24 bytes, got {len(raw)}")
    magic_be = struct.unpack(">I", raw[:4])[0]
    magic_le = struct.unpack("<I", raw[:4])[0]
    if magic_be in (MAGIC_MICRO, MAGIC_NANO):
        byte_order = "big"
        resolution = MICROSECOND if magic_be == MAGIC_MICRO else NANOSECOND
    elif magic_le in (MAGIC_MICRO, MAGIC_NANO):
        byte_order = "little"
        resolution = MICROSECOND if magic_le == MAGIC_MICRO else NANOSECOND
    else:
        raise UnknownMagic(f"0x{magic_be:08X} is not a classic pcap magic")
    endian = ">" if byte_order == "big" else "<"
    _, _, _, _, snap_length, link_type = struct.unpack(endian + "HHiIII", raw[4:24])

    packets: list[PacketRecord] = []
    truncated = False
    offset = GLOBAL_HEADER_LEN
    record_fmt = endian + "IIII"
    while offset < len(raw):
        if offset + RECORD_HEADER_LEN > len(raw):
            truncated = True
            break
        ts_sec, ts_frac, incl_len, orig_len = struct.unpack(
            record_fmt, raw[offset : offset + RECORD_HEADER_LEN]
        )
        if incl_len > snap_length:
            raise PcapError(
                f"record {len(packets)}: captured length {incl_len} exceeds snap length {snap_length}"
            )
        if incl_len > orig_len:
            raise PcapError(
                f"record {len(packets)}: captured length {incl_len} exceeds frame length {orig_len}"
            )
        body_start = offset + RECORD_HEADER_LEN
        if body_start + incl_len > len(raw):
            truncated = True
            break
        frame = raw[body_start : body_start + incl_len]
        packets.append(
            decode_packet(
                link_type,
                frame,
                index=len(packets),
                ts_sec=ts_sec,
                ts_frac=ts_frac,
                frame_length=orig_len,
                captured_length=incl_len,
            )
        )
        offset = body_start + incl_len
    return CaptureFile(
        byte_order=byte_order,
        timestamp_resolution=resolution,
        link_type=link_type,
        snap_length=snap_length,
        packets=tuple(packets),
        truncated=truncated,
    )


def _global_header(byte_order: str, resolution: str, snap_length: int, link_type: int) -> bytes:
    endian = ">" if byte_order == "big" else "<"
    magic = MAGIC_MICRO if resolution == MICROSECOND else MAGIC_NANO
    return struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, snap_length, link_type)


def write_capture(capture: CaptureFile) -> bytes:
    """Serialize a CaptureFile back to classic pcap bytes.

    Captures written by this toolkit (thiszone=0, sigfigs=0, version 2.4)
    round-trip byte-for-byte through parse_capture.
    """
    out = bytearray(
        _global_header(
            capture.byte_order,
            capture.timestamp_resolution,
            capture.snap_length,
            capture.link_type,
        )
    )
    endian = ">" if capture.byte_order == "big" else "<"
    for pkt in capture.packets:
        if len(pkt.frame_data) != pkt.captured_length:
            raise PcapError(
                f"record {pkt.index}: frame data is {len(pkt.frame_data)} bytes, "
                f"captured_length says {pkt.captured_length}"
            )
        out += struct.pack(
            endian + "IIII", pkt.ts_sec, pkt.ts_frac, pkt.captured_length, pkt.frame_length
        )
        out += pkt.frame_data
    return bytes(out)


class PcapWriter:
    """Incremental pcap writer for live capture output."""

    def __init__(
        self,
        stream: BinaryIO,
        link_type: int,
        *,
        snap_length: int = 65535,
        byte_order: str = "little",
        resolution: str = NANOSECOND,
    ):
        self._stream = stream
        self._snap = snap_length
        self._endian = ">" if byte_order == "big" else "<"
        stream.write(_global_header(byte_order, resolution, snap_length, link_type))

    def add(self, ts_sec: int, ts_frac: int, frame: bytes, frame_length: int | None = None):
        orig = len(frame) if frame_length is None else frame_length
        stored = frame[: self._snap]
        self._stream.write(
            struct.pack(self._endian + "IIII", ts_sec, ts_frac, len(stored), orig)
        )
        self._stream.write(stored)


def write_frames(
    frames: Iterable[tuple[int, int, bytes]],
    link_type: int,
    *,
    snap_length: int = 65535,
    byte_order: str = "little",
    resolution: str = NANOSECOND,
) -> bytes:
    """Build a capture from (ts_sec, ts_frac, frame) triples."""
    import io

    buf = io.BytesIO()
    writer = PcapWriter(
        buf, link_type, snap_length=snap_length, byte_order=byte_order, resolution=resolution
    )
    for ts_sec, ts_frac, frame in frames:
        writer.add(ts_sec, ts_frac, frame)
    return buf.getvalue()


def total_frame_bytes(packets: Sequence[PacketRecord]) -> int:
    return sum(p.frame_length for p in packets)
