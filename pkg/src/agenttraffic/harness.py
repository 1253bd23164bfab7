"""Two-agent HTTP replay harness.

A querying agent replays benchmark prompts, one HTTP POST per prompt, to a
responding agent; the responding agent forwards each prompt to an upstream
LLM endpoint (a deterministic local mock by default, a live API if
configured) and relays the answer.  Every exchange lands in a JSON-lines
run log, and both the agent-to-agent and agent-to-upstream links can be
captured to pcap for accounting.
"""

from __future__ import annotations

import hashlib
import http.client
import http.server
import json
import os
import random
import socket
import ssl
import string
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from urllib.parse import urlsplit

from .capture import CaptureUnavailable, LiveCapture, frames_to_pcap
from .pcapio import LINKTYPE_ETHERNET, TcpInfo, decode_packet
from .profiles import ModelProfile, SizeDistribution, default_mock_distribution, model_profile
from .runlog import QueryLogEntry, append_entry


class HarnessError(Exception):
    pass


class FileUnreadable(HarnessError):
    pass


class MalformedRecord(HarnessError):
    pass


class InsufficientRecords(HarnessError):
    pass


class ConfigError(HarnessError):
    pass


@dataclass(frozen=True)
class PromptRecord:
    id: int
    question: str
    reference_answer: str | None = None

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must be non-empty")


def bundled_dataset_path() -> Path:
    return Path(str(resources.files(__package__).joinpath("data/prompts.jsonl")))


def load_prompts(path: str | Path, n: int) -> list[PromptRecord]:
    """First n well-formed records of a JSON-lines file with question/answer fields."""
    if n < 1:
        raise InsufficientRecords(f"prompt count must be >= 1, got {n}")
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    records: list[PromptRecord] = []
    with fh:
        for lineno, line in enumerate(fh, 1):
            if len(records) == n:
                break
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("question"), str):
                raise MalformedRecord(f"{path}: line {lineno}: missing 'question' field")
            if not obj["question"]:
                raise MalformedRecord(f"{path}: line {lineno}: empty question")
            records.append(
                PromptRecord(
                    id=len(records),
                    question=obj["question"],
                    reference_answer=obj.get("answer"),
                )
            )
    if len(records) < n:
        raise InsufficientRecords(f"{path}: needed {n} records, found {len(records)}")
    return records


# ---------------------------------------------------------------------------
# Deterministic mock backend


@dataclass(frozen=True)
class MockBackendConfig:
    seed: int = 0
    default_size: SizeDistribution | None = None
    size_overrides: dict[str, SizeDistribution] = field(default_factory=dict)
    response_delay: SizeDistribution | None = None  # seconds
    transport: str = "plain"  # plain | tls

    def __post_init__(self):
        if self.transport not in ("plain", "tls"):
            raise ValueError(f"unknown transport {self.transport!r}")


BYTES_PER_TOKEN = 4


def _rng_for(seed: int, query_id: int, purpose: str = "size") -> random.Random:
    digest = hashlib.sha256(f"{purpose}:{seed}:{query_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _draw_truncated(rng: random.Random, dist: SizeDistribution) -> float:
    if dist.sd == 0:
        return dist.mean
    for _ in range(1000):
        x = rng.normalvariate(dist.mean, dist.sd)
        if dist.minimum <= x <= dist.maximum:
            return x
    return min(max(dist.mean, dist.minimum), dist.maximum)


def draw_response_length(cfg: MockBackendConfig, model: ModelProfile, query_id: int) -> int:
    """Target body length for one query; a pure function of (seed, query_id)."""
    dist = cfg.size_overrides.get(model.model_name) or cfg.default_size
    if dist is None:
        dist = default_mock_distribution(model.model_name)
    rng = _rng_for(cfg.seed, query_id)
    length = round(_draw_truncated(rng, dist))
    length = max(length, int(dist.minimum))
    length = min(length, int(dist.maximum))
    if model.max_tokens is not None:
        length = min(length, model.max_tokens * BYTES_PER_TOKEN)
    return length


_WORD_CHARS = string.ascii_lowercase


def _filler_text(rng: random.Random, length: int) -> str:
    if length <= 0:
        return ""
    parts: list[str] = []
    remaining = length
    while remaining > 0:
        word = "".join(rng.choice(_WORD_CHARS) for _ in range(rng.randint(3, 9)))
        parts.append(word[:remaining])
        remaining -= len(parts[-1])
        if remaining > 0:
            parts.append(" ")
            remaining -= 1
    return "".join(parts)


def mock_llm_respond(prompt: PromptRecord, cfg: MockBackendConfig, model: ModelProfile) -> bytes:
    """Deterministic JSON answer body padded to the drawn target length."""
    target = draw_response_length(cfg, model, prompt.id)
    skeleton = len(json.dumps({"id": prompt.id, "answer": ""}))
    rng = _rng_for(cfg.seed, prompt.id, purpose="text")
    text = _filler_text(rng, max(target - skeleton, 0))
    return json.dumps({"id": prompt.id, "answer": text}).encode("ascii")


def generate_self_signed_cert(directory: str | Path) -> tuple[Path, Path]:
    """Throwaway localhost certificate for the TLS mock transport."""
    import datetime
    import ipaddress

    from cryptography import x509
    from cryptography.hazmat.primitives import hashes, serialization
    from cryptography.hazmat.primitives.asymmetric import rsa
    from cryptography.x509.oid import NameOID

    key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "localhost")])
    now = datetime.datetime.utcnow()
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(days=1))
        .not_valid_after(now + datetime.timedelta(days=365))
        .add_extension(
            x509.SubjectAlternativeName(
                [x509.DNSName("localhost"), x509.IPAddress(ipaddress.ip_address("127.0.0.1"))]
            ),
            critical=False,
        )
        .sign(key, hashes.SHA256())
    )
    directory = Path(directory)
    cert_path = directory / "mock-cert.pem"
    key_path = directory / "mock-key.pem"
    cert_path.write_bytes(cert.public_bytes(serialization.Encoding.PEM))
    key_path.write_bytes(
        key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.TraditionalOpenSSL,
            serialization.NoEncryption(),
        )
    )
    return cert_path, key_path


class _QuietServer(http.server.ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


def _read_json_body(handler: http.server.BaseHTTPRequestHandler) -> dict:
    length = int(handler.headers.get("Content-Length", 0))
    raw = handler.rfile.read(length) if length else b""
    return json.loads(raw) if raw else {}


def _send(handler, status: int, body: bytes, content_type: str = "application/json"):
    # send_response_only keeps Date/Server headers out, so wire bytes are
    # reproducible across runs.
    handler.send_response_only(status)
    handler.send_header("Content-Type", content_type)
    handler.send_header("Content-Length", str(len(body)))
    if handler.close_connection:
        handler.send_header("Connection", "close")
    handler.end_headers()
    handler.wfile.write(body)


class _MockHandler(http.server.BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    def do_POST(self):
        cfg: MockBackendConfig = self.server.mock_config
        try:
            body = _read_json_body(self)
            name = body.get("model")
            model = model_profile(name) if name else self.server.default_profile
            prompt = PromptRecord(id=int(body["id"]), question=body["question"])
        except Exception as exc:
            _send(self, 400, json.dumps({"error": f"bad request: {exc}"}).encode())
            return
        if cfg.response_delay is not None:
            delay = _draw_truncated(_rng_for(cfg.seed, prompt.id, "delay"), cfg.response_delay)
            time.sleep(max(delay, 0.0))
        _send(self, 200, mock_llm_respond(prompt, cfg, model))


class MockBackendServer:
    """Local stand-in for a cloud LLM API, plain HTTP or TLS."""

    def __init__(
        self,
        config: MockBackendConfig,
        default_profile: ModelProfile,
        host: str = "127.0.0.1",
        port: int = 0,
        cert_dir: str | Path | None = None,
    ):
        self.config = config
        self.default_profile = default_profile
        self._server = _QuietServer((host, port), _MockHandler)
        self._server.mock_config = config
        self._server.default_profile = default_profile
        self.ca_file: Path | None = None
        if config.transport == "tls":
            cert_dir = Path(cert_dir) if cert_dir else Path(".")
            cert_path, key_path = generate_self_signed_cert(cert_dir)
            ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            ctx.load_cert_chain(cert_path, key_path)
            self._server.socket = ctx.wrap_socket(self._server.socket, server_side=True)
            self.ca_file = cert_path
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def url(self) -> str:
        scheme = "https" if self.config.transport == "tls" else "http"
        host, port = self.address
        return f"{scheme}://{host}:{port}/complete"

    def start(self) -> "MockBackendServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="mock-backend", daemon=True
        )
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()


# ---------------------------------------------------------------------------
# Responding agent (forwarding proxy)


@dataclass
class UpstreamTarget:
    url: str
    headers: dict[str, str] = field(default_factory=dict)
    ca_file: str | Path | None = None
    timeout: float = 60.0
    keep_alive: bool = False
    forward_model: str | None = None


class _AgentHandler(http.server.BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    def do_POST(self):
        target: UpstreamTarget = self.server.upstream
        try:
            body = _read_json_body(self)
        except Exception as exc:
            _send(self, 400, json.dumps({"error": f"bad request: {exc}"}).encode())
            return
        if target.forward_model and "model" not in body:
            body["model"] = target.forward_model
        payload = json.dumps(body).encode()
        try:
            status, answer = self.server.forward(payload)
        except socket.timeout:
            _send(self, 504, json.dumps({"error": "upstream timeout"}).encode())
            return
        except OSError as exc:
            _send(self, 502, json.dumps({"error": f"upstream unreachable: {exc}"}).encode())
            return
        _send(self, status, answer)


class RespondingAgent:
    """HTTP server that forwards prompt payloads to the upstream and relays
    the response body and status unchanged (no caching)."""

    def __init__(self, upstream: UpstreamTarget, host: str = "127.0.0.1", port: int = 0):
        self.upstream = upstream
        parts = urlsplit(upstream.url)
        self._upstream_host = parts.hostname
        self._upstream_port = parts.port or (443 if parts.scheme == "https" else 80)
        self._upstream_path = parts.path or "/"
        self._tls = parts.scheme == "https"
        self._conn: http.client.HTTPConnection | None = None
        self._conn_lock = threading.Lock()
        self._server = _QuietServer((host, port), _AgentHandler)
        self._server.upstream = upstream
        self._server.forward = self._forward
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def _new_connection(self) -> http.client.HTTPConnection:
        if self._tls:
            ctx = ssl.create_default_context()
            if self.upstream.ca_file:
                ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
                ctx.load_verify_locations(self.upstream.ca_file)
            return http.client.HTTPSConnection(
                self._upstream_host, self._upstream_port, timeout=self.upstream.timeout, context=ctx
            )
        return http.client.HTTPConnection(
            self._upstream_host, self._upstream_port, timeout=self.upstream.timeout
        )

    def _forward(self, payload: bytes) -> tuple[int, bytes]:
        headers = {"Content-Type": "application/json", **self.upstream.headers}
        if not self.upstream.keep_alive:
            headers["Connection"] = "close"
            conn = self._new_connection()
            try:
                conn.request("POST", self._upstream_path, body=payload, headers=headers)
                resp = conn.getresponse()
                return resp.status, resp.read()
            finally:
                conn.close()
        with self._conn_lock:
            if self._conn is None:
                self._conn = self._new_connection()
            try:
                self._conn.request("POST", self._upstream_path, body=payload, headers=headers)
                resp = self._conn.getresponse()
                return resp.status, resp.read()
            except OSError:
                self._conn.close()
                self._conn = None
                raise

    def start(self) -> "RespondingAgent":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="responding-agent", daemon=True
        )
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._conn is not None:
            self._conn.close()


# ---------------------------------------------------------------------------
# Querying agent


def querying_agent_run(
    prompts: list[PromptRecord],
    agent_host: str,
    agent_port: int,
    log_path: str | Path,
    *,
    model_profile_name: str,
    close_per_query: bool = True,
    timeout: float = 60.0,
) -> list[QueryLogEntry]:
    """Replay prompts strictly in order, one log entry per prompt.

    Failed queries are logged with an error status; a refused connection
    aborts the run, preserving the partial log.
    """
    entries: list[QueryLogEntry] = []
    persistent: http.client.HTTPConnection | None = None
    headers = {"Content-Type": "application/json"}
    if close_per_query:
        headers["Connection"] = "close"
    with open(log_path, "w", encoding="utf-8") as fh:
        for prompt in prompts:
            body = json.dumps({"id": prompt.id, "question": prompt.question}).encode()
            send_ts = time.time()
            status = 0
            data = b""
            error = None
            try:
                if close_per_query:
                    conn = http.client.HTTPConnection(agent_host, agent_port, timeout=timeout)
                else:
                    if persistent is None:
                        persistent = http.client.HTTPConnection(
                            agent_host, agent_port, timeout=timeout
                        )
                    conn = persistent
                conn.request("POST", "/query", body=body, headers=headers)
                resp = conn.getresponse()
                data = resp.read()
                status = resp.status
                if close_per_query:
                    conn.close()
            except ConnectionRefusedError as exc:
                raise HarnessError(
                    f"responding agent refused connection; partial log kept at {log_path}"
                ) from exc
            except OSError as exc:
                error = str(exc)
                if not close_per_query and persistent is not None:
                    persistent.close()
                    persistent = None
            recv_ts = time.time()
            answer = None
            if status == 200:
                try:
                    answer = json.loads(data).get("answer")
                except (json.JSONDecodeError, AttributeError):
                    answer = None
            entry = QueryLogEntry(
                query_id=prompt.id,
                send_timestamp=send_ts,
                recv_timestamp=recv_ts,
                request_body_bytes=len(body),
                response_body_bytes=len(data),
                upstream_status=status,
                model_profile_name=model_profile_name,
                question=prompt.question,
                answer=answer,
                error=error,
            )
            entries.append(entry)
            append_entry(fh, entry)
    if persistent is not None:
        persistent.close()
    return entries


# ---------------------------------------------------------------------------
# Experiment orchestration


@dataclass
class RunConfig:
    dataset_path: str | None = None  # None -> bundled sample dataset
    prompt_count: int = 1000
    upstream: str = "mock"  # "mock" or a live endpoint URL
    model_profile_name: str = "open-mistral-7b"
    connection_policy: str = "close-per-query"  # close-per-query | keep-alive
    pacing: str = "sequential"
    capture_local: bool = False
    capture_external: bool = False
    capture_interface: str = "lo"
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    seed: int = 0
    out_dir: str = "runs"
    run_id: str | None = None
    mock_transport: str = "plain"
    mock_size: SizeDistribution | None = None
    response_delay: SizeDistribution | None = None
    credential_env: str = "LLM_API_KEY"
    live_headers: dict[str, str] = field(default_factory=dict)
    upstream_timeout: float = 60.0

    @property
    def measurement_mode(self) -> bool:
        return self.capture_local or self.capture_external

    @property
    def live(self) -> bool:
        return self.upstream != "mock"

    def validated(self) -> list[str]:
        """Check the config, returning warnings; raises ConfigError when unusable."""
        warnings = []
        if self.prompt_count < 1:
            raise ConfigError(f"prompt_count must be >= 1, got {self.prompt_count}")
        if self.pacing != "sequential":
            raise ConfigError(f"only sequential pacing is implemented, got {self.pacing!r}")
        if self.connection_policy not in ("close-per-query", "keep-alive"):
            raise ConfigError(f"unknown connection policy {self.connection_policy!r}")
        if self.measurement_mode and self.connection_policy != "close-per-query":
            warnings.append(
                "measurement mode forces close-per-query so each query maps to one stream"
            )
            self.connection_policy = "close-per-query"
        if self.live:
            if not self.upstream.startswith(("http://", "https://")):
                raise ConfigError(f"upstream must be 'mock' or an http(s) URL, got {self.upstream!r}")
            if not os.environ.get(self.credential_env):
                raise ConfigError(
                    f"live mode needs the credential environment variable {self.credential_env} set"
                )
        model_profile(self.model_profile_name)  # raises UnknownModel
        return warnings


@dataclass
class RunArtifacts:
    run_id: str
    out_dir: Path
    query_log: Path
    capture_local: Path | None
    capture_external: Path | None
    manifest: Path
    warnings: list[str]


def _frame_ports(frame: bytes) -> tuple[int, int] | None:
    record = decode_packet(LINKTYPE_ETHERNET, frame)
    if isinstance(record.transport, TcpInfo):
        return record.transport.src_port, record.transport.dst_port
    return None


def _frames_for_port(frames: list[tuple[int, bytes]], port: int) -> list[tuple[int, bytes]]:
    kept = []
    for ts, frame in frames:
        ports = _frame_ports(frame)
        if ports and port in ports:
            kept.append((ts, frame))
    return kept


def run_experiment(config: RunConfig) -> RunArtifacts:
    """Serve, replay, capture, and write artifacts for one run."""
    warnings = config.validated()
    dataset = config.dataset_path or bundled_dataset_path()
    prompts = load_prompts(dataset, config.prompt_count)
    profile = model_profile(config.model_profile_name)

    run_id = config.run_id or f"run-{time.strftime('%Y%m%d-%H%M%S')}-seed{config.seed}"
    out_dir = Path(config.out_dir) / run_id
    out_dir.mkdir(parents=True, exist_ok=True)

    backend = None
    if config.live:
        credential = os.environ[config.credential_env]
        headers = {
            name: value.replace("$CREDENTIAL", credential)
            for name, value in config.live_headers.items()
        }
        upstream = UpstreamTarget(
            url=config.upstream,
            headers=headers,
            timeout=config.upstream_timeout,
            keep_alive=config.connection_policy == "keep-alive",
            forward_model=profile.model_name,
        )
    else:
        mock_cfg = MockBackendConfig(
            seed=config.seed,
            default_size=config.mock_size or default_mock_distribution(profile.model_name),
            response_delay=config.response_delay,
            transport=config.mock_transport,
        )
        backend = MockBackendServer(mock_cfg, profile, cert_dir=out_dir).start()
        upstream = UpstreamTarget(
            url=backend.url,
            ca_file=backend.ca_file,
            timeout=config.upstream_timeout,
            keep_alive=config.connection_policy == "keep-alive",
            forward_model=profile.model_name,
        )

    agent = RespondingAgent(upstream, config.listen_host, config.listen_port).start()
    agent_host, agent_port = agent.address

    sniffer = None
    if config.measurement_mode:
        try:
            sniffer = LiveCapture(config.capture_interface).start()
        except CaptureUnavailable as exc:
            warnings.append(f"capture unavailable: {exc}; continuing log-only")

    query_log = out_dir / "querylog.jsonl"
    try:
        querying_agent_run(
            prompts,
            agent_host,
            agent_port,
            query_log,
            model_profile_name=profile.model_name,
            close_per_query=config.connection_policy == "close-per-query",
            timeout=config.upstream_timeout,
        )
    finally:
        frames = sniffer.stop() if sniffer is not None else []
        agent.stop()
        if backend is not None:
            backend.stop()

    local_pcap = external_pcap = None
    if sniffer is not None:
        if config.capture_local:
            local_pcap = out_dir / "local.pcap"
            local_pcap.write_bytes(frames_to_pcap(_frames_for_port(frames, agent_port)))
        if config.capture_external:
            upstream_port = urlsplit(upstream.url).port or (
                443 if upstream.url.startswith("https") else 80
            )
            external_pcap = out_dir / "external.pcap"
            external_pcap.write_bytes(frames_to_pcap(_frames_for_port(frames, upstream_port)))

    manifest = out_dir / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "run_id": run_id,
                "model_profile_name": profile.model_name,
                "prompt_count": config.prompt_count,
                "seed": config.seed,
                "upstream": "mock" if not config.live else config.upstream,
                "mock_transport": config.mock_transport if not config.live else None,
                "connection_policy": config.connection_policy,
                "agent_port": agent_port,
                "query_log": query_log.name,
                "capture_local": local_pcap.name if local_pcap else None,
                "capture_external": external_pcap.name if external_pcap else None,
                "warnings": warnings,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return RunArtifacts(
        run_id=run_id,
        out_dir=out_dir,
        query_log=query_log,
        capture_local=local_pcap,
        capture_external=external_pcap,
        manifest=manifest,
        warnings=warnings,
    )
