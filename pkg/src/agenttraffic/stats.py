"""Seven-statistic traffic summaries, cross-model aggregates, and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import profiles


class TooFewSamples(ValueError):
    pass


def _leq(a: float, b: float) -> bool:
    # ordering check that tolerates float rounding at the last ulp
    return a <= b or math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


@dataclass(frozen=True)
class TrafficSummary:
    minimum: float
    q1: float
    median: float
    avg: float
    q3: float
    maximum: float
    sd: float

    def __post_init__(self):
        chain = (self.minimum, self.q1, self.median, self.q3, self.maximum)
        if not all(_leq(a, b) for a, b in zip(chain, chain[1:])):
            raise ValueError("order statistics out of order")
        if not (_leq(self.minimum, self.avg) and _leq(self.avg, self.maximum)):
            raise ValueError("average outside data range")
        if self.sd < 0:
            raise ValueError("sd must be >= 0")

    def as_row(self) -> list[float]:
        return [self.minimum, self.q1, self.median, self.avg, self.q3, self.maximum, self.sd]


STAT_COLUMNS = ["Min", "1st-Q", "Median", "Avg", "3rd-Q", "Max", "Sd"]


def _quantile(sorted_vals: Sequence[float], p: float) -> float:
    # Linear interpolation between order statistics (the "type-7" rule).
    h = (len(sorted_vals) - 1) * p
    lo = math.floor(h)
    frac = h - lo
    if frac == 0:
        return float(sorted_vals[lo])
    return sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo])


def summarize(samples: Sequence[float]) -> TrafficSummary:
    """Seven descriptive statistics; quartiles are type-7, sd uses n-1."""
    n = len(samples)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    ordered = sorted(float(x) for x in samples)
    mean = sum(ordered) / n
    var = sum((x - mean) ** 2 for x in ordered) / (n - 1)
    return TrafficSummary(
        minimum=ordered[0],
        q1=_quantile(ordered, 0.25),
        median=_quantile(ordered, 0.5),
        avg=mean,
        q3=_quantile(ordered, 0.75),
        maximum=ordered[-1],
        sd=math.sqrt(var),
    )


GRAND_SD_CONVENTION = (
    "population standard deviation (n denominator) of the per-model average values"
)


def cross_model_mean(summaries: Sequence[TrafficSummary]) -> tuple[float, float]:
    """Unweighted grand average of per-model averages, and its spread.

    The spread is the population sd across the per-model averages; see
    GRAND_SD_CONVENTION.  Published aggregates computed under other,
    unstated conventions will not match and are flagged by grand_summary.
    """
    if len(summaries) < 2:
        raise TooFewSamples("need at least 2 per-model summaries")
    avgs = [s.avg for s in summaries]
    grand_avg = sum(avgs) / len(avgs)
    grand_sd = math.sqrt(sum((a - grand_avg) ** 2 for a in avgs) / len(avgs))
    return grand_avg, grand_sd


@dataclass
class SummaryTable:
    capture_point: str  # "local" | "external"
    rows: dict[str, TrafficSummary]
    sample_counts: dict[str, int]

    def __post_init__(self):
        for name, count in self.sample_counts.items():
            if count < 2:
                raise ValueError(f"row {name!r}: sample_count must be >= 2")


def summary_table_from_samples(
    capture_point: str, samples_by_model: Mapping[str, Sequence[float]]
) -> SummaryTable:
    rows = {name: summarize(vals) for name, vals in samples_by_model.items()}
    counts = {name: len(vals) for name, vals in samples_by_model.items()}
    return SummaryTable(capture_point=capture_point, rows=rows, sample_counts=counts)


def load_reference_table(capture_point: str) -> SummaryTable:
    """The bundled published statistics as a SummaryTable."""
    raw = profiles.reference_stats(capture_point)
    rows = {
        name: TrafficSummary(
            minimum=r["min"], q1=r["q1"], median=r["median"], avg=r["avg"],
            q3=r["q3"], maximum=r["max"], sd=r["sd"],
        )
        for name, r in raw["rows"].items()
    }
    counts = {name: raw["sample_count"] for name in rows}
    return SummaryTable(capture_point=capture_point, rows=rows, sample_counts=counts)


def grand_summary(table: SummaryTable) -> dict:
    """Cross-model aggregate for a table, with any published aggregate
    reported side by side and divergence flagged rather than hidden."""
    grand_avg, grand_sd = cross_model_mean(list(table.rows.values()))
    out = {
        "capture_point": table.capture_point,
        "grand_avg_bytes": grand_avg,
        "grand_sd_bytes": grand_sd,
        "sd_convention": GRAND_SD_CONVENTION,
    }
    try:
        published = profiles.reference_stats(table.capture_point).get("published_aggregate")
    except ValueError:
        published = None
    if published:
        out["published_avg_bytes"] = published["avg_bytes"]
        out["published_sd_bytes"] = published["sd_bytes"]
        out["avg_matches_published"] = round(grand_avg) == published["avg_bytes"]
        out["sd_diverges_from_published"] = abs(grand_sd - published["sd_bytes"]) > 1.0
    return out


def emit_report(table: SummaryTable, fmt: str) -> str:
    """Render a SummaryTable as csv, json, or markdown.

    Column order is fixed (Min, 1st-Q, Median, Avg, 3rd-Q, Max, Sd) and
    values print with two decimals.
    """
    if fmt == "json":
        doc = {
            "capture_point": table.capture_point,
            "columns": STAT_COLUMNS,
            "rows": {
                name: dict(zip(STAT_COLUMNS, s.as_row())) for name, s in table.rows.items()
            },
            "sample_counts": table.sample_counts,
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["Model"] + STAT_COLUMNS)
        for name, s in table.rows.items():
            w.writerow([name] + [f"{v:.2f}" for v in s.as_row()])
        return out.getvalue()
    if fmt == "markdown":
        lines = [
            "| Model | " + " | ".join(STAT_COLUMNS) + " |",
            "|" + "---|" * (len(STAT_COLUMNS) + 1),
        ]
        for name, s in table.rows.items():
            lines.append("| " + name + " | " + " | ".join(f"{v:.2f}" for v in s.as_row()) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def export_distribution(
    samples: Mapping[str, Mapping[str, Sequence[float]]]
) -> dict:
    """Boxplot-ready dataset: five-number summary per model and capture
    point, whiskers and outliers under the 1.5*IQR rule."""
    doc: dict = {"whisker_rule": "1.5*IQR", "points": {}}
    for point, by_model in samples.items():
        doc["points"][point] = {}
        for model, vals in by_model.items():
            if not vals:
                raise ValueError(f"{point}/{model}: no samples")
            s = summarize(vals) if len(vals) >= 2 else None
            ordered = sorted(float(v) for v in vals)
            if s is None:
                q1 = median = q3 = ordered[0]
            else:
                q1, median, q3 = s.q1, s.median, s.q3
            iqr = q3 - q1
            lo_fence = q1 - 1.5 * iqr
            hi_fence = q3 + 1.5 * iqr
            inliers = [v for v in ordered if lo_fence <= v <= hi_fence]
            outliers = [v for v in ordered if v < lo_fence or v > hi_fence]
            doc["points"][point][model] = {
                "count": len(ordered),
                "min": ordered[0],
                "q1": q1,
                "median": median,
                "q3": q3,
                "max": ordered[-1],
                "whisker_low": inliers[0] if inliers else None,
                "whisker_high": inliers[-1] if inliers else None,
                "outliers": outliers,
            }
    return doc
