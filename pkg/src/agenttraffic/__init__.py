"""agenttraffic: measure, summarize, and forecast LLM agent network traffic."""

__version__ = "0.1.0"

from .flows import (
    FlowKey,
    MatchResult,
    QueryExchange,
    StreamStats,
    assign_stream_indices,
    conservation_check,
    match_streams_to_queries,
    sum_stream_bytes,
)
from .forecast import (
    ForecastScenario,
    GrowthAssumption,
    TrafficFigure,
    format_bytes_si,
    parse_bytes_si,
    project_growth,
    scenario_traffic,
    share_of_internet,
)
from .harness import (
    MockBackendConfig,
    PromptRecord,
    RunConfig,
    load_prompts,
    mock_llm_respond,
    run_experiment,
)
from .pcapio import CaptureFile, PacketRecord, decode_packet, parse_capture, write_capture
from .profiles import ModelProfile, SizeDistribution, model_profile
from .stats import TrafficSummary, cross_model_mean, emit_report, export_distribution, summarize

__all__ = [name for name in dir() if not name.startswith("_")]
