import json
import math
import socket

import pytest

from agenttraffic.harness import (
    BYTES_PER_TOKEN,
    ConfigError,
    FileUnreadable,
    HarnessError,
    InsufficientRecords,
    MalformedRecord,
    MockBackendConfig,
    MockBackendServer,
    PromptRecord,
    RespondingAgent,
    RunConfig,
    UpstreamTarget,
    bundled_dataset_path,
    draw_response_length,
    load_prompts,
    mock_llm_respond,
    querying_agent_run,
    run_experiment,
)
from agenttraffic.profiles import SizeDistribution, model_profile
from agenttraffic.runlog import read_query_log

MISTRAL = model_profile("open-mistral-7b")


@pytest.fixture
def prompt_file(tmp_path):
    path = tmp_path / "prompts.jsonl"
    rows = [
        {"question": "What is 2+2?", "answer": "4"},
        {"question": "What is 3*3?", "answer": "9"},
        {"question": "What is 10-7?", "answer": "3"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


class TestLoadPrompts:
    def test_zero_request_rejected(self, prompt_file):
        with pytest.raises(InsufficientRecords):
            load_prompts(prompt_file, 0)

    def test_first_two_records_ids_zero_one(self, prompt_file):
        records = load_prompts(prompt_file, 2)
        assert [r.id for r in records] == [0, 1]
        assert records[0].question == "What is 2+2?"
        assert records[1].reference_answer == "9"

    def test_insufficient_records(self, prompt_file):
        with pytest.raises(InsufficientRecords, match="needed 5"):
            load_prompts(prompt_file, 5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileUnreadable):
            load_prompts(tmp_path / "nope.jsonl", 1)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"question": "ok", "answer": "1"}\nnot-json\n')
        with pytest.raises(MalformedRecord, match="line 2"):
            load_prompts(path, 2)

    def test_empty_question_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text('{"question": "", "answer": "1"}\n')
        with pytest.raises(MalformedRecord, match="empty question"):
            load_prompts(path, 1)

    def test_bundled_dataset_thousand(self):
        path = bundled_dataset_path()
        records = load_prompts(path, 1000)
        assert len(records) == 1000
        assert all(r.question for r in records)
        # independent oracle: raw line count covers the request
        with open(path, encoding="utf-8") as fh:
            assert sum(1 for line in fh if line.strip()) >= 1000

    def test_prompt_record_rejects_empty_question(self):
        with pytest.raises(ValueError):
            PromptRecord(id=0, question="")


class TestMockDraws:
    def test_degenerate_distribution_exact_length(self):
        cfg = MockBackendConfig(
            seed=7, default_size=SizeDistribution(mean=500, sd=0, minimum=0, maximum=1000)
        )
        for qid in range(20):
            body = mock_llm_respond(PromptRecord(qid, "x"), cfg, MISTRAL)
            assert len(body) == 500
            parsed = json.loads(body)
            assert parsed["id"] == qid

    def test_same_seed_same_bytes(self):
        cfg = MockBackendConfig(seed=42)
        a = mock_llm_respond(PromptRecord(3, "q"), cfg, MISTRAL)
        b = mock_llm_respond(PromptRecord(3, "other question"), cfg, MISTRAL)
        assert a == b  # depends only on (seed, query_id), not prompt text

    def test_different_query_ids_differ(self):
        cfg = MockBackendConfig(seed=42)
        bodies = {mock_llm_respond(PromptRecord(i, "q"), cfg, MISTRAL) for i in range(10)}
        assert len(bodies) == 10

    def test_order_independence(self):
        cfg = MockBackendConfig(seed=11)
        forward = [draw_response_length(cfg, MISTRAL, qid) for qid in range(50)]
        backward = [draw_response_length(cfg, MISTRAL, qid) for qid in reversed(range(50))]
        assert forward == list(reversed(backward))

    def test_statistical_oracle_three_sigma(self):
        dist = SizeDistribution(mean=1600, sd=300, minimum=0, maximum=3200)
        cfg = MockBackendConfig(seed=1, default_size=dist)
        draws = [draw_response_length(cfg, MISTRAL, qid) for qid in range(1000)]
        sample_mean = sum(draws) / len(draws)
        assert abs(sample_mean - 1600) <= 3 * 300 / math.sqrt(1000)
        assert all(0 <= d <= 3200 for d in draws)

    def test_max_tokens_caps_length(self):
        small = model_profile("qwen-2.5-32b-groq")  # max_tokens 1024
        dist = SizeDistribution(mean=10_000, sd=0, minimum=0, maximum=20_000)
        cfg = MockBackendConfig(seed=0, default_size=dist)
        assert draw_response_length(cfg, small, 0) == small.max_tokens * BYTES_PER_TOKEN

    def test_per_model_override(self):
        cfg = MockBackendConfig(
            seed=0,
            default_size=SizeDistribution(mean=100, sd=0, minimum=0, maximum=200),
            size_overrides={
                MISTRAL.model_name: SizeDistribution(mean=900, sd=0, minimum=0, maximum=1000)
            },
        )
        assert draw_response_length(cfg, MISTRAL, 0) == 900


@pytest.fixture
def mock_stack():
    """Mock backend + responding agent, torn down after the test."""
    cfg = MockBackendConfig(
        seed=7, default_size=SizeDistribution(mean=600, sd=50, minimum=400, maximum=800)
    )
    backend = MockBackendServer(cfg, MISTRAL).start()
    agent = RespondingAgent(
        UpstreamTarget(url=backend.url, timeout=5.0, forward_model=MISTRAL.model_name)
    ).start()
    yield backend, agent
    agent.stop()
    backend.stop()


class TestServing:
    def test_round_trip_and_determinism(self, mock_stack, tmp_path):
        backend, agent = mock_stack
        host, port = agent.address
        prompts = [PromptRecord(i, f"question {i}") for i in range(5)]
        first = querying_agent_run(
            prompts, host, port, tmp_path / "log1.jsonl", model_profile_name=MISTRAL.model_name
        )
        second = querying_agent_run(
            prompts, host, port, tmp_path / "log2.jsonl", model_profile_name=MISTRAL.model_name
        )
        assert [e.upstream_status for e in first] == [200] * 5
        assert [e.response_body_bytes for e in first] == [
            e.response_body_bytes for e in second
        ]
        assert [e.answer for e in first] == [e.answer for e in second]  # byte-identical
        for entry in first:
            assert entry.recv_timestamp >= entry.send_timestamp
            assert entry.answer
        # sequential invariant
        for earlier, later in zip(first, first[1:]):
            assert earlier.recv_timestamp <= later.send_timestamp
        logged = read_query_log(tmp_path / "log1.jsonl")
        assert [e.query_id for e in logged] == [0, 1, 2, 3, 4]

    def test_keep_alive_mode_works(self, mock_stack, tmp_path):
        _, agent = mock_stack
        host, port = agent.address
        prompts = [PromptRecord(i, f"q{i}") for i in range(3)]
        entries = querying_agent_run(
            prompts, host, port, tmp_path / "log.jsonl",
            model_profile_name=MISTRAL.model_name, close_per_query=False,
        )
        assert [e.upstream_status for e in entries] == [200] * 3

    def test_upstream_down_gives_502_and_logs(self, tmp_path):
        # grab a port that is certainly closed
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        agent = RespondingAgent(
            UpstreamTarget(url=f"http://127.0.0.1:{dead_port}/complete", timeout=2.0)
        ).start()
        try:
            host, port = agent.address
            entries = querying_agent_run(
                [PromptRecord(0, "q")], host, port, tmp_path / "log.jsonl",
                model_profile_name=MISTRAL.model_name,
            )
        finally:
            agent.stop()
        assert entries[0].upstream_status == 502
        assert read_query_log(tmp_path / "log.jsonl")[0].upstream_status == 502

    def test_upstream_timeout_gives_504(self, tmp_path):
        cfg = MockBackendConfig(
            seed=0,
            default_size=SizeDistribution(mean=100, sd=0, minimum=0, maximum=200),
            response_delay=SizeDistribution(mean=1.0, sd=0, minimum=0, maximum=2),
        )
        backend = MockBackendServer(cfg, MISTRAL).start()
        agent = RespondingAgent(UpstreamTarget(url=backend.url, timeout=0.2)).start()
        try:
            host, port = agent.address
            entries = querying_agent_run(
                [PromptRecord(0, "q")], host, port, tmp_path / "log.jsonl",
                model_profile_name=MISTRAL.model_name,
            )
        finally:
            agent.stop()
            backend.stop()
        assert entries[0].upstream_status == 504

    def test_refused_connection_aborts_with_partial_log(self, tmp_path):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(HarnessError, match="refused"):
            querying_agent_run(
                [PromptRecord(0, "q")], "127.0.0.1", dead_port, tmp_path / "log.jsonl",
                model_profile_name=MISTRAL.model_name,
            )
        assert (tmp_path / "log.jsonl").exists()

    def test_tls_upstream_round_trip(self, tmp_path):
        cfg = MockBackendConfig(
            seed=7,
            default_size=SizeDistribution(mean=600, sd=50, minimum=400, maximum=800),
            transport="tls",
        )
        backend = MockBackendServer(cfg, MISTRAL, cert_dir=tmp_path).start()
        assert backend.url.startswith("https://")
        agent = RespondingAgent(
            UpstreamTarget(url=backend.url, ca_file=backend.ca_file, timeout=5.0)
        ).start()
        try:
            host, port = agent.address
            entries = querying_agent_run(
                [PromptRecord(0, "secure?")], host, port, tmp_path / "log.jsonl",
                model_profile_name=MISTRAL.model_name,
            )
        finally:
            agent.stop()
            backend.stop()
        assert entries[0].upstream_status == 200
        # same (seed, query_id) as plain transport gives the same body bytes
        assert entries[0].response_body_bytes == len(
            mock_llm_respond(PromptRecord(0, "secure?"), cfg, MISTRAL)
        )


class TestRunExperiment:
    def test_log_only_run(self, tmp_path):
        config = RunConfig(
            prompt_count=3, seed=5, out_dir=str(tmp_path), run_id="t1", upstream="mock"
        )
        artifacts = run_experiment(config)
        entries = read_query_log(artifacts.query_log)
        assert len(entries) == 3
        assert artifacts.capture_local is None
        manifest = json.loads(artifacts.manifest.read_text())
        assert manifest["prompt_count"] == 3
        assert manifest["seed"] == 5

    def test_live_without_credential_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        config = RunConfig(
            prompt_count=1, upstream="https://api.example.com/v1/complete",
            out_dir=str(tmp_path),
        )
        with pytest.raises(ConfigError, match="LLM_API_KEY"):
            run_experiment(config)

    def test_bad_prompt_count_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(prompt_count=0).validated()

    def test_measurement_mode_forces_close_per_query(self):
        config = RunConfig(capture_local=True, connection_policy="keep-alive", prompt_count=1)
        warnings = config.validated()
        assert config.connection_policy == "close-per-query"
        assert any("close-per-query" in w for w in warnings)

    def test_unknown_model_rejected(self):
        with pytest.raises(KeyError):
            RunConfig(model_profile_name="made-up-model", prompt_count=1).validated()
