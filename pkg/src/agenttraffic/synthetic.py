"""Synthetic Ethernet/IPv4/TCP frame construction.

Used to build capture fixtures and to validate the decoder and stream
accounting without touching a live network.  Checksums are computed for
real so the output stays loadable in standard packet tools.
"""

from __future__ import annotations

import struct

from .pcapio import LINKTYPE_ETHERNET, LINKTYPE_NULL, LINKTYPE_RAW, NANOSECOND, write_frames

FIN = 0x01
SYN = 0x02
RST = 0x04
PSH = 0x08
ACK = 0x10

_DEFAULT_MAC = b"\x02\x00\x00\x00\x00\x01"


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f">{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ipv4_tcp_packet(
    src: str,
    dst: str,
    sport: int,
    dport: int,
    flags: int,
    payload: bytes = b"",
    seq: int = 0,
    ack: int = 0,
    window: int = 65535,
    ident: int = 0,
) -> bytes:
    """Build an IPv4 packet carrying a 20-byte-header TCP segment."""
    src_b = bytes(int(x) for x in src.split("."))
    dst_b = bytes(int(x) for x in dst.split("."))
    tcp = struct.pack(
        ">HHIIBBHHH", sport, dport, seq, ack, 5 << 4, flags, window, 0, 0
    ) + payload
    pseudo = src_b + dst_b + struct.pack(">BBH", 0, 6, len(tcp))
    tcp = tcp[:16] + struct.pack(">H", _checksum(pseudo + tcp)) + tcp[18:]
    total_length = 20 + len(tcp)
    ip = struct.pack(
        ">BBHHHBBH4s4s", 0x45, 0, total_length, ident, 0x4000, 64, 6, 0, src_b, dst_b
    )
    ip = ip[:10] + struct.pack(">H", _checksum(ip)) + ip[12:]
    return ip + tcp


def ethernet_frame(ip_packet: bytes, src_mac: bytes = _DEFAULT_MAC, dst_mac: bytes = _DEFAULT_MAC) -> bytes:
    return dst_mac + src_mac + struct.pack(">H", 0x0800) + ip_packet


def loopback_frame(ip_packet: bytes) -> bytes:
    # LINKTYPE_NULL: 4-byte AF_INET family header, host byte order (little here).
    return struct.pack("<I", 2) + ip_packet


def frame_for_link(link_type: int, ip_packet: bytes) -> bytes:
    if link_type == LINKTYPE_ETHERNET:
        return ethernet_frame(ip_packet)
    if link_type == LINKTYPE_NULL:
        return loopback_frame(ip_packet)
    if link_type == LINKTYPE_RAW:
        return ip_packet
    raise ValueError(f"unsupported link type {link_type}")


def tcp_session(
    client: tuple[str, int],
    server: tuple[str, int],
    request: bytes,
    response: bytes,
    *,
    start_ns: int = 1_700_000_000_000_000_000,
    step_ns: int = 100_000,
    link_type: int = LINKTYPE_ETHERNET,
) -> list[tuple[int, int, bytes]]:
    """One full connection: handshake, request, response, bidirectional FIN.

    Returns (ts_sec, ts_frac, frame) triples at nanosecond resolution.
    """
    c_addr, c_port = client
    s_addr, s_port = server
    c_seq, s_seq = 1000, 5000
    frames: list[bytes] = []

    def c2s(flags, payload=b"", seq=None, ack=None):
        frames.append(
            frame_for_link(
                link_type,
                ipv4_tcp_packet(c_addr, s_addr, c_port, s_port, flags, payload,
                                seq=c_seq if seq is None else seq,
                                ack=s_seq if ack is None else ack),
            )
        )

    def s2c(flags, payload=b"", seq=None, ack=None):
        frames.append(
            frame_for_link(
                link_type,
                ipv4_tcp_packet(s_addr, c_addr, s_port, c_port, flags, payload,
                                seq=s_seq if seq is None else seq,
                                ack=c_seq if ack is None else ack),
            )
        )

    c2s(SYN)
    c_seq += 1
    s2c(SYN | ACK)
    s_seq += 1
    c2s(ACK)
    c2s(PSH | ACK, request)
    c_seq += len(request)
    s2c(ACK)
    s2c(PSH | ACK, response)
    s_seq += len(response)
    c2s(ACK)
    c2s(FIN | ACK)
    c_seq += 1
    s2c(ACK)
    s2c(FIN | ACK)
    s_seq += 1
    c2s(ACK)

    out = []
    ts = start_ns
    for frame in frames:
        out.append((ts // 1_000_000_000, ts % 1_000_000_000, frame))
        ts += step_ns
    return out


def sequential_sessions_capture(
    n_sessions: int,
    *,
    link_type: int = LINKTYPE_ETHERNET,
    request_size: int = 120,
    response_size: int = 400,
    server: tuple[str, int] = ("127.0.0.1", 8080),
    start_ns: int = 1_700_000_000_000_000_000,
    byte_order: str = "little",
) -> bytes:
    """A capture of n back-to-back connections, one per client port."""
    frames: list[tuple[int, int, bytes]] = []
    ts = start_ns
    for i in range(n_sessions):
        session = tcp_session(
            ("127.0.0.1", 40000 + i),
            server,
            b"Q" * request_size,
            b"A" * response_size,
            start_ns=ts,
            link_type=link_type,
        )
        frames.extend(session)
        ts = (session[-1][0] * 1_000_000_000 + session[-1][1]) + 5_000_000
    return write_frames(frames, link_type, byte_order=byte_order, resolution=NANOSECOND)
