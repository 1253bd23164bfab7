"""Packet capture on a local interface via AF_PACKET raw sockets.

Needs CAP_NET_RAW (root, typically).  On loopback the kernel hands every
frame to the tap twice, once outgoing and once incoming; the outgoing copy
is dropped so counts match what standard capture tools report.
"""

from __future__ import annotations

import socket
import struct
import threading
import time

from .pcapio import LINKTYPE_ETHERNET, NANOSECOND, write_frames

ETH_P_ALL = 0x0003
PACKET_OUTGOING = 4


class CaptureUnavailable(Exception):
    """Raw-socket capture cannot be used here (missing privilege or platform support)."""


def _open_socket(interface: str) -> socket.socket:
    if not hasattr(socket, "AF_PACKET"):
        raise CaptureUnavailable("AF_PACKET sockets are not supported on this platform")
    try:
        sock = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(ETH_P_ALL))
        sock.bind((interface, 0))
    except (PermissionError, OSError) as exc:
        raise CaptureUnavailable(
            f"cannot open raw capture socket on {interface!r}: {exc}"
        ) from exc
    return sock


def capture_available(interface: str = "lo") -> bool:
    try:
        _open_socket(interface).close()
        return True
    except CaptureUnavailable:
        return False


class LiveCapture:
    """Background sniffer collecting (ts_ns, frame) pairs until stopped."""

    def __init__(self, interface: str = "lo", snap_length: int = 65535):
        self.interface = interface
        self.snap_length = snap_length
        self.frames: list[tuple[int, bytes]] = []
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def start(self) -> "LiveCapture":
        self._sock = _open_socket(self.interface)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        self._sock.settimeout(0.05)
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="capture", daemon=True)
        self._thread.start()
        return self

    def _loop(self):
        drop_outgoing = self.interface == "lo"
        while not self._stop.is_set():
            try:
                frame, addr = self._sock.recvfrom(self.snap_length + 128)
            except socket.timeout:
                continue
            except OSError:
                break
            if drop_outgoing and addr[2] == PACKET_OUTGOING:
                continue
            self.frames.append((time.time_ns(), frame))

    def stop(self, drain_seconds: float = 0.3) -> list[tuple[int, bytes]]:
        """Stop sniffing after a short drain so teardown frames land."""
        if self._thread is None:
            return self.frames
        time.sleep(drain_seconds)
        self._stop.set()
        self._thread.join(timeout=2.0)
        self._sock.close()
        self._thread = None
        return self.frames

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def frames_to_pcap(frames: list[tuple[int, bytes]], snap_length: int = 65535) -> bytes:
    """Serialize captured frames to a nanosecond classic pcap."""
    triples = [(ts // 1_000_000_000, ts % 1_000_000_000, frame) for ts, frame in frames]
    return write_frames(
        triples, LINKTYPE_ETHERNET, snap_length=snap_length, resolution=NANOSECOND
    )
