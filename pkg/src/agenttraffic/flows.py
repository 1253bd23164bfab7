"""TCP stream indexing, per-stream byte accounting, and query matching.

Stream indices follow the familiar packet-analyzer convention: the first
packet of a never-seen connection gets the next integer starting at 0, and
a reused address/port tuple only starts a new stream once the old one
finished (FIN both ways or RST) and a fresh SYN arrives.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .pcapio import CaptureFile, PacketRecord, TcpInfo
from .runlog import QueryLogEntry

Endpoint = tuple[str, int]


@dataclass(frozen=True)
class FlowKey:
    """Direction-blind connection identity: both endpoints, canonically ordered."""

    low: Endpoint
    high: Endpoint

    @classmethod
    def of(cls, src_addr: str, src_port: int, dst_addr: str, dst_port: int) -> "FlowKey":
        a, b = (src_addr, src_port), (dst_addr, dst_port)
        return cls(min(a, b), max(a, b))

    @classmethod
    def from_packet(cls, pkt: PacketRecord) -> "FlowKey":
        t = pkt.transport
        return cls.of(pkt.src_address, t.src_port, pkt.dst_address, t.dst_port)

    def __str__(self) -> str:
        return f"{self.low[0]}:{self.low[1]}<->{self.high[0]}:{self.high[1]}"


@dataclass
class StreamStats:
    stream_index: int
    flow_key: FlowKey
    total_bytes: int = 0
    packet_count: int = 0
    payload_bytes: int = 0
    first_timestamp: tuple[int, int] = (0, 0)
    last_timestamp: tuple[int, int] = (0, 0)
    saw_syn: bool = False
    saw_fin_both: bool = False
    saw_rst: bool = False


def assign_stream_indices(packets: Iterable[PacketRecord]) -> dict[int, int]:
    """Map packet index to stream index for every TCP packet, in capture order."""
    assignment: dict[int, int] = {}
    live: dict[FlowKey, int] = {}
    fin_from: dict[int, set[Endpoint]] = {}
    rst_seen: dict[int, bool] = {}
    next_index = 0
    for pkt in packets:
        t = pkt.transport
        if not isinstance(t, TcpInfo):
            continue
        key = FlowKey.from_packet(pkt)
        idx = live.get(key)
        fresh_syn = t.syn and not t.ack
        if idx is None or (fresh_syn and (rst_seen[idx] or len(fin_from[idx]) >= 2)):
            idx = next_index
            next_index += 1
            live[key] = idx
            fin_from[idx] = set()
            rst_seen[idx] = False
        if t.fin:
            fin_from[idx].add((pkt.src_address, t.src_port))
        if t.rst:
            rst_seen[idx] = True
        assignment[pkt.index] = idx
    return assignment


def sum_stream_bytes(capture: CaptureFile, assignment: Mapping[int, int]) -> list[StreamStats]:
    """Aggregate every assigned frame into its stream; all frames count."""
    stats: dict[int, StreamStats] = {}
    for pkt in capture.packets:
        idx = assignment.get(pkt.index)
        if idx is None:
            continue
        t = pkt.transport
        s = stats.get(idx)
        if s is None:
            s = StreamStats(
                stream_index=idx,
                flow_key=FlowKey.from_packet(pkt),
                first_timestamp=pkt.timestamp,
                last_timestamp=pkt.timestamp,
            )
            stats[idx] = s
        s.total_bytes += pkt.frame_length
        s.packet_count += 1
        s.payload_bytes += t.payload_length
        s.first_timestamp = min(s.first_timestamp, pkt.timestamp)
        s.last_timestamp = max(s.last_timestamp, pkt.timestamp)
        if t.syn:
            s.saw_syn = True
        if t.rst:
            s.saw_rst = True
    # Recompute bidirectional-FIN from scratch so stats stand alone.
    fins: dict[int, set[Endpoint]] = {idx: set() for idx in stats}
    for pkt in capture.packets:
        idx = assignment.get(pkt.index)
        if idx is not None and pkt.transport.fin:
            fins[idx].add((pkt.src_address, pkt.transport.src_port))
    for idx, s in stats.items():
        s.saw_fin_both = len(fins[idx]) >= 2
    return [stats[idx] for idx in sorted(stats)]


def conservation_check(
    capture: CaptureFile, assignment: Mapping[int, int], streams: Sequence[StreamStats]
) -> tuple[bool, int, int]:
    """Exact integer check: stream totals + unassigned frame bytes == all frame bytes."""
    assigned_total = sum(s.total_bytes for s in streams)
    unassigned = sum(p.frame_length for p in capture.packets if p.index not in assignment)
    everything = sum(p.frame_length for p in capture.packets)
    return assigned_total + unassigned == everything, assigned_total + unassigned, everything


@dataclass
class QueryExchange:
    query_id: int
    prompt_text: str | None
    response_text: str | None
    local_stream_index: int | None
    external_stream_index: int | None
    local_total_bytes: int | None
    external_total_bytes: int | None
    request_body_bytes: int
    response_body_bytes: int
    latency: float
    model_profile_name: str = ""


@dataclass
class MatchResult:
    exchanges: list[QueryExchange]
    orphan_streams: dict[str, list[int]] = field(default_factory=dict)
    unmatched_queries: dict[str, list[int]] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def match_streams_to_queries(
    log: Sequence[QueryLogEntry],
    local_streams: Sequence[StreamStats] | None = None,
    external_streams: Sequence[StreamStats] | None = None,
) -> MatchResult:
    """Join streams to log entries ordinally, per capture point.

    Replay is sequential with one connection per query, so the k-th stream
    by first timestamp at a capture point belongs to the k-th log entry.
    Count mismatches produce partial matches plus named orphans, never a
    silent drop.
    """
    exchanges = [
        QueryExchange(
            query_id=e.query_id,
            prompt_text=e.question,
            response_text=e.answer,
            local_stream_index=None,
            external_stream_index=None,
            local_total_bytes=None,
            external_total_bytes=None,
            request_body_bytes=e.request_body_bytes,
            response_body_bytes=e.response_body_bytes,
            latency=e.latency,
            model_profile_name=e.model_profile_name,
        )
        for e in log
    ]
    result = MatchResult(exchanges=exchanges)
    for point, streams in (("local", local_streams), ("external", external_streams)):
        if streams is None:
            continue
        ordered = sorted(streams, key=lambda s: (s.first_timestamp, s.stream_index))
        paired = min(len(ordered), len(exchanges))
        for k in range(paired):
            s = ordered[k]
            ex = exchanges[k]
            if point == "local":
                ex.local_stream_index = s.stream_index
                ex.local_total_bytes = s.total_bytes
            else:
                ex.external_stream_index = s.stream_index
                ex.external_total_bytes = s.total_bytes
        if len(ordered) != len(exchanges):
            orphans = [s.stream_index for s in ordered[paired:]]
            missing = [e.query_id for e in log[paired:]]
            if orphans:
                result.orphan_streams[point] = orphans
            if missing:
                result.unmatched_queries[point] = missing
            result.problems.append(
                f"{point}: {len(ordered)} streams vs {len(exchanges)} queries"
                + (f"; orphan streams {orphans}" if orphans else "")
                + (f"; unmatched queries {missing}" if missing else "")
            )
    return result


def _ts_str(ts: tuple[int, int], resolution: str) -> str:
    digits = 9 if resolution == "nanosecond" else 6
    return f"{ts[0]}.{ts[1]:0{digits}d}"


def streams_to_csv(streams: Sequence[StreamStats], resolution: str = "nanosecond") -> str:
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow(
        ["stream_index", "endpoints", "packets", "total_bytes", "payload_bytes", "first_ts", "last_ts"]
    )
    for s in streams:
        w.writerow(
            [
                s.stream_index,
                str(s.flow_key),
                s.packet_count,
                s.total_bytes,
                s.payload_bytes,
                _ts_str(s.first_timestamp, resolution),
                _ts_str(s.last_timestamp, resolution),
            ]
        )
    return out.getvalue()


EXCHANGE_CSV_COLUMNS = [
    "query_id",
    "model_profile_name",
    "local_stream_index",
    "local_total_bytes",
    "external_stream_index",
    "external_total_bytes",
    "request_body_bytes",
    "response_body_bytes",
    "latency_s",
]


def exchanges_to_csv(exchanges: Sequence[QueryExchange]) -> str:
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow(EXCHANGE_CSV_COLUMNS)
    for ex in exchanges:
        w.writerow(
            [
                ex.query_id,
                ex.model_profile_name,
                "" if ex.local_stream_index is None else ex.local_stream_index,
                "" if ex.local_total_bytes is None else ex.local_total_bytes,
                "" if ex.external_stream_index is None else ex.external_stream_index,
                "" if ex.external_total_bytes is None else ex.external_total_bytes,
                ex.request_body_bytes,
                ex.response_body_bytes,
                f"{ex.latency:.6f}",
            ]
        )
    return out.getvalue()
