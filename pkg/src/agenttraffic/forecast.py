"""Three-parameter traffic forecasting for agent-driven workloads.

Traffic per day is the exact integer product users x bytes-per-exchange x
queries-per-user-per-day; values reach 10^20, so everything stays in
Python integers and never rounds through floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

DAYS_PER_MONTH = 30

# Expected total Internet traffic around 2025, bytes per month.
INTERNET_MONTHLY_BYTES_2025 = 400 * 10**18

_SI_PREFIXES = [
    ("EB", 18),
    ("PB", 15),
    ("TB", 12),
    ("GB", 9),
    ("MB", 6),
    ("kB", 3),
]


@dataclass(frozen=True)
class ForecastScenario:
    label: str
    users: int
    avg_exchange_bytes: int
    queries_per_user_per_day: int

    def __post_init__(self):
        for name in ("users", "avg_exchange_bytes", "queries_per_user_per_day"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class GrowthAssumption:
    quantity: str  # users | queries_per_day | visits
    rate: float  # fraction per period
    period: str  # month | year

    def __post_init__(self):
        if self.quantity not in ("users", "queries_per_day", "visits"):
            raise ValueError(f"unknown quantity {self.quantity!r}")
        if self.rate <= -1:
            raise ValueError("rate must be > -1")
        if self.period not in ("month", "year"):
            raise ValueError(f"unknown period {self.period!r}")


@dataclass(frozen=True)
class TrafficFigure:
    bytes: int
    period: str  # day | month

    def __post_init__(self):
        if self.bytes < 0:
            raise ValueError("bytes must be >= 0")
        if self.period not in ("day", "month"):
            raise ValueError(f"unknown period {self.period!r}")

    @property
    def human_readable(self) -> str:
        return format_bytes_si(self.bytes)


def _shift_decimal(n: int, places: int) -> str:
    """n / 10**places as an exact decimal string."""
    s = str(n)
    if len(s) <= places:
        s = "0" * (places - len(s) + 1) + s
    whole, frac = s[:-places], s[-places:]
    frac = frac.rstrip("0")
    return f"{whole}.{frac}" if frac else whole


def format_bytes_si(n: int) -> str:
    """Decimal-SI rendering at powers of 1000, exact (no rounding)."""
    for suffix, exp in _SI_PREFIXES:
        if n >= 10**exp:
            return f"{_shift_decimal(n, exp)} {suffix}"
    return f"{n} B"


def parse_bytes_si(text: str) -> int:
    """Inverse of format_bytes_si; also accepts forms like '400EB'."""
    cleaned = text.strip()
    for suffix, exp in _SI_PREFIXES + [("B", 0)]:
        if cleaned.endswith(suffix):
            number = cleaned[: -len(suffix)].strip()
            if "." in number:
                whole, frac = number.split(".", 1)
            else:
                whole, frac = number, ""
            if not (whole + frac).isdigit():
                raise ValueError(f"cannot parse byte size {text!r}")
            if len(frac) > exp:
                raise ValueError(f"{text!r} does not denote a whole number of bytes")
            return int(whole + frac) * 10 ** (exp - len(frac))
    raise ValueError(f"cannot parse byte size {text!r}")


def scenario_traffic(scenario: ForecastScenario) -> TrafficFigure:
    """Exact bytes per day for a scenario."""
    total = scenario.users * scenario.avg_exchange_bytes * scenario.queries_per_user_per_day
    return TrafficFigure(bytes=total, period="day")


def to_monthly(figure: TrafficFigure) -> TrafficFigure:
    if figure.period == "month":
        return figure
    return TrafficFigure(bytes=figure.bytes * DAYS_PER_MONTH, period="month")


def project_growth(initial: float, growth: GrowthAssumption, horizon: int) -> list[float]:
    """Geometric series initial*(1+rate)^k for k = 0..horizon."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    factor = 1.0 + growth.rate
    return [initial * factor**k for k in range(horizon + 1)]


def share_of_internet(
    figure: TrafficFigure, internet_monthly_bytes: int = INTERNET_MONTHLY_BYTES_2025
) -> float:
    """Fraction of total Internet traffic, on a monthly basis (30-day months)."""
    if internet_monthly_bytes <= 0:
        raise ValueError("internet_monthly_bytes must be > 0")
    return to_monthly(figure).bytes / internet_monthly_bytes


def builtin_scenarios() -> list[ForecastScenario]:
    """The published short/medium/long-term scenario triple."""
    return [
        ForecastScenario("short", 500_000_000, 7_500, 1),
        ForecastScenario("medium", 1_000_000_000, 1_000_000, 100),
        ForecastScenario("long", 2_000_000_000, 50_000_000, 1_000),
    ]


def load_scenarios(path) -> list[ForecastScenario]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = [raw]
    return [
        ForecastScenario(
            label=item.get("label", f"scenario-{i}"),
            users=item["users"],
            avg_exchange_bytes=item["avg_exchange_bytes"],
            queries_per_user_per_day=item["queries_per_user_per_day"],
        )
        for i, item in enumerate(raw)
    ]


def forecast_table(
    scenarios: Sequence[ForecastScenario], internet_monthly_bytes: int | None = None
) -> dict:
    """Scenario parameters plus daily and 30x monthly totals.

    The published scenario table labels the plain product "monthly"; both
    readings are emitted, clearly marked, rather than picking one.
    """
    out: dict = {"scenarios": []}
    for s in scenarios:
        daily = scenario_traffic(s)
        monthly = to_monthly(daily)
        row = {
            "label": s.label,
            "users": s.users,
            "avg_exchange_bytes": s.avg_exchange_bytes,
            "queries_per_user_per_day": s.queries_per_user_per_day,
            "bytes_per_day": daily.bytes,
            "per_day": daily.human_readable,
            "bytes_per_month_30d": monthly.bytes,
            "per_month_30d": monthly.human_readable,
        }
        if internet_monthly_bytes:
            row["share_of_internet_monthly"] = share_of_internet(daily, internet_monthly_bytes)
        out["scenarios"].append(row)
    if internet_monthly_bytes:
        out["internet_monthly_bytes"] = internet_monthly_bytes
    return out


def forecast_markdown(table: dict) -> str:
    rows = table["scenarios"]
    header = ["Quantity"] + [r["label"] for r in rows]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
        "| Number of users | " + " | ".join(f"{r['users']:,}" for r in rows) + " |",
        "| Avg. exchange [bytes] | "
        + " | ".join(format_bytes_si(r["avg_exchange_bytes"]) for r in rows)
        + " |",
        "| Usage [queries/user/day] | "
        + " | ".join(f"{r['queries_per_user_per_day']:,}" for r in rows)
        + " |",
        "| Traffic per day (exact product) | "
        + " | ".join(r["per_day"] for r in rows)
        + " |",
        "| Traffic per month (30 days) | "
        + " | ".join(r["per_month_30d"] for r in rows)
        + " |",
    ]
    if any("share_of_internet_monthly" in r for r in rows):
        lines.append(
            "| Share of Internet (monthly) | "
            + " | ".join(f"{r['share_of_internet_monthly']:.3g}" for r in rows)
            + " |"
        )
    return "\n".join(lines) + "\n"
