"""LLM model profiles and calibrated defaults for the mock backend."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


class UnknownModel(KeyError):
    pass


@dataclass(frozen=True)
class ModelProfile:
    model_name: str
    company: str | None = None
    release_date: str | None = None
    parameter_count_b: float | None = None
    context_length: int | None = None
    max_tokens: int | None = None
    temperature: float | None = None
    top_p: float | None = None

    def __post_init__(self):
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_p is not None and not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if (
            self.max_tokens is not None
            and self.context_length is not None
            and self.max_tokens > self.context_length
        ):
            raise ValueError("max_tokens cannot exceed context_length")


@dataclass(frozen=True)
class SizeDistribution:
    """Truncated normal over byte counts: values drawn from N(mean, sd) kept in [minimum, maximum]."""

    mean: float
    sd: float
    minimum: float
    maximum: float

    def __post_init__(self):
        if not (self.minimum <= self.mean <= self.maximum):
            raise ValueError("distribution needs minimum <= mean <= maximum")
        if self.sd < 0:
            raise ValueError("sd must be >= 0")


def _data_text(name: str) -> str:
    return resources.files(__package__).joinpath(f"data/{name}").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _registry() -> dict[str, ModelProfile]:
    entries = json.loads(_data_text("model_profiles.json"))
    registry: dict[str, ModelProfile] = {}
    for entry in entries:
        aliases = entry.pop("aliases", [])
        profile = ModelProfile(**entry)
        registry[profile.model_name.lower()] = profile
        for alias in aliases:
            registry[alias.lower()] = profile
    return registry


def model_profile(name: str) -> ModelProfile:
    profile = _registry().get(name.strip().lower())
    if profile is None:
        known = sorted({p.model_name for p in _registry().values()})
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(known)}")
    return profile


def all_profiles() -> list[ModelProfile]:
    seen = {}
    for profile in _registry().values():
        seen[profile.model_name] = profile
    return [seen[k] for k in sorted(seen)]


@lru_cache(maxsize=None)
def reference_stats(capture_point: str) -> dict:
    """Bundled published per-model traffic statistics for a capture point."""
    if capture_point not in ("local", "external"):
        raise ValueError("capture_point must be 'local' or 'external'")
    return json.loads(_data_text(f"reference_{capture_point}_stats.json"))


# Row labels in the bundled reference tables, per model.
LOCAL_ROW_FOR_MODEL = {
    "open-mistral-7b": "MistralAI",
    "claude-3-sonnet": "Claude-3-sonnet-20240229",
    "llama3.1-70b": "llama3.1-70b",
    "llama3.2-11b-vision": "llama3.2-11b-vision",
    "qwen-2.5-32b-groq": "Qwen-2.5-32b (Groq)",
    "gpt-4o": "Openai gpt-4o",
    "deepseek-r1": "DeepSeek R1",
}

EXTERNAL_ROW_FOR_MODEL = dict(
    LOCAL_ROW_FOR_MODEL, **{"claude-3-sonnet": "Claude-3-sonnet"}
)

# Bytes one local exchange spends outside the response body: TCP handshake
# and teardown, pure ACKs, both HTTP/1.1 header blocks, and the replayed
# question body.  Measured once from header-only exchanges of this harness
# on the loopback point (stream total minus response body, mean over the
# bundled dataset; 1242 of it is body-independent framing).
LOCAL_EXCHANGE_OVERHEAD = 1368

# A JSON body {"id": ..., "answer": ...} cannot get much smaller than this.
MIN_MOCK_BODY = 30


def default_mock_distribution(model_name: str | None = None) -> SizeDistribution:
    """Mock response-size defaults for a model, calibrated so local-point
    stream totals land near the published local distributions.

    The published per-query totals include protocol overhead; the mock
    draws body sizes, so the overhead constant is subtracted out.  Models
    without a published row get the cross-model average shape.
    """
    rows = reference_stats("local")["rows"]
    row = None
    if model_name is not None:
        label = LOCAL_ROW_FOR_MODEL.get(model_profile(model_name).model_name)
        row = rows.get(label) if label else None
    if row is None:
        n = len(rows)
        row = {
            key: sum(r[key] for r in rows.values()) / n
            for key in ("min", "avg", "max", "sd")
        }
    floor = float(MIN_MOCK_BODY)
    minimum = max(row["min"] - LOCAL_EXCHANGE_OVERHEAD, floor)
    maximum = max(row["max"] - LOCAL_EXCHANGE_OVERHEAD, minimum)
    mean = min(max(row["avg"] - LOCAL_EXCHANGE_OVERHEAD, minimum), maximum)
    return SizeDistribution(mean=mean, sd=row["sd"], minimum=minimum, maximum=maximum)
