import itertools
import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agenttraffic.stats import (
    GRAND_SD_CONVENTION,
    SummaryTable,
    TooFewSamples,
    TrafficSummary,
    cross_model_mean,
    emit_report,
    export_distribution,
    grand_summary,
    load_reference_table,
    summarize,
    summary_table_from_samples,
)


def oracle(samples):
    """Independent brute-force route: numpy's type-7 quantiles and ddof=1 sd."""
    arr = np.asarray(samples, dtype=float)
    q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75])
    return (
        float(arr.min()),
        float(q1),
        float(med),
        float(arr.mean()),
        float(q3),
        float(arr.max()),
        float(arr.std(ddof=1)),
    )


def assert_close(ours, expected, rel=1e-9):
    for a, b in zip(ours, expected):
        assert a == pytest.approx(b, rel=rel, abs=1e-12)


class TestSummarize:
    def test_four_values_type7_quartiles(self):
        s = summarize([1, 2, 3, 4])
        assert s.q1 == 1.75
        assert s.median == 2.5
        assert s.q3 == 3.25

    def test_constant_data(self):
        s = summarize([5, 5, 5, 5, 5])
        assert s.as_row() == [5, 5, 5, 5, 5, 5, 0]

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            summarize([7])

    def test_thousand_random_vs_oracle(self):
        rng = random.Random(20250610)
        samples = [rng.randint(1000, 20000) for _ in range(1000)]
        assert_close(summarize(samples).as_row(), oracle(samples))

    def test_small_exhaustive_subset(self):
        # lengths 2..4 here; the full <=6 sweep runs in the acceptance suite
        for n in range(2, 5):
            for values in itertools.product(range(11), repeat=n):
                assert_close(summarize(values).as_row(), oracle(values))

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
    @settings(max_examples=100)
    def test_matches_oracle_on_floats(self, samples):
        assert_close(summarize(samples).as_row(), oracle(samples))

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50),
        st.randoms(use_true_random=False),
    )
    def test_permutation_invariance(self, samples, rnd):
        shuffled = samples[:]
        rnd.shuffle(shuffled)
        assert summarize(shuffled) == summarize(samples)

    @given(
        st.lists(st.floats(-1e5, 1e5), min_size=2, max_size=50),
        st.floats(-1e5, 1e5),
    )
    def test_translation(self, samples, c):
        base = summarize(samples)
        moved = summarize([x + c for x in samples])
        for stat in ("minimum", "q1", "median", "avg", "q3", "maximum"):
            assert getattr(moved, stat) == pytest.approx(getattr(base, stat) + c, rel=1e-9, abs=1e-6)
        assert moved.sd == pytest.approx(base.sd, rel=1e-9, abs=1e-6)

    @given(
        st.lists(st.floats(-1e5, 1e5), min_size=2, max_size=50),
        st.floats(1e-3, 1e3),
    )
    def test_scaling(self, samples, c):
        base = summarize(samples)
        scaled = summarize([x * c for x in samples])
        for ours, reference in zip(scaled.as_row(), base.as_row()):
            assert ours == pytest.approx(reference * c, rel=1e-9, abs=1e-6)


class TestCrossModelMean:
    def test_reference_external_grand_average(self):
        table = load_reference_table("external")
        grand_avg, grand_sd = cross_model_mean(list(table.rows.values()))
        assert grand_avg == pytest.approx(7592.57, abs=0.01)
        assert round(grand_avg) == 7593
        # population-sd convention over the seven averages
        assert grand_sd == pytest.approx(505.27, abs=0.01)

    def test_reference_local_grand_average(self):
        table = load_reference_table("local")
        grand_avg, _ = cross_model_mean(list(table.rows.values()))
        assert grand_avg == pytest.approx(1943.67, abs=0.5)

    def test_two_identical_summaries(self):
        s = summarize([10, 20, 30])
        grand_avg, grand_sd = cross_model_mean([s, s])
        assert grand_avg == s.avg
        assert grand_sd == 0

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            cross_model_mean([summarize([1, 2])])

    def test_divergence_flagged_not_matched(self):
        grand = grand_summary(load_reference_table("external"))
        assert grand["avg_matches_published"] is True
        assert grand["sd_diverges_from_published"] is True
        assert grand["published_sd_bytes"] == 369
        assert grand["sd_convention"] == GRAND_SD_CONVENTION


class TestEmitReport:
    def test_markdown_matches_reference_cells_verbatim(self):
        text = emit_report(load_reference_table("local"), "markdown")
        assert (
            "| MistralAI | 1094.00 | 1714.75 | 1895.50 | 1961.18 | 2143.00 | 4873.00 | 398.37 |"
            in text
        )
        assert (
            "| DeepSeek R1 | 1184.00 | 1536.00 | 1664.00 | 1702.52 | 1828.25 | 2660.00 | 235.23 |"
            in text
        )
        assert text.splitlines()[0] == "| Model | Min | 1st-Q | Median | Avg | 3rd-Q | Max | Sd |"

    def test_external_markdown_cells(self):
        text = emit_report(load_reference_table("external"), "markdown")
        assert (
            "| Qwen-2.5-32b (Groq) | 7290.00 | 7648.75 | 7764.00 | 7794.98 | 7878.25 | 9480.00 | 250.94 |"
            in text
        )

    def test_header_only_on_empty_rows(self):
        table = SummaryTable(capture_point="local", rows={}, sample_counts={})
        assert emit_report(table, "csv").strip() == "Model,Min,1st-Q,Median,Avg,3rd-Q,Max,Sd"
        md = emit_report(table, "markdown")
        assert md.splitlines()[0].startswith("| Model |")
        assert len(md.strip().splitlines()) == 2

    def test_csv_json_value_equivalence(self):
        table = load_reference_table("external")
        import csv as csv_mod
        import io

        parsed_csv = {}
        reader = csv_mod.DictReader(io.StringIO(emit_report(table, "csv")))
        for row in reader:
            name = row.pop("Model")
            parsed_csv[name] = {k: float(v) for k, v in row.items()}
        parsed_json = json.loads(emit_report(table, "json"))["rows"]
        for name, stats_row in parsed_json.items():
            for column, value in stats_row.items():
                assert parsed_csv[name][column] == pytest.approx(round(value, 2), abs=1e-9)

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(load_reference_table("local"), "xml")

    def test_sample_count_floor(self):
        with pytest.raises(ValueError):
            SummaryTable("local", rows={}, sample_counts={"m": 1})


class TestExportDistribution:
    def test_no_outliers_one_through_nine(self):
        doc = export_distribution({"local": {"m": list(range(1, 10))}})
        row = doc["points"]["local"]["m"]
        assert row["whisker_low"] == 1
        assert row["whisker_high"] == 9
        assert row["outliers"] == []

    def test_hundred_is_outlier(self):
        doc = export_distribution({"local": {"m": list(range(1, 10)) + [100]}})
        row = doc["points"]["local"]["m"]
        assert row["outliers"] == [100]
        assert row["whisker_high"] < 100

    def test_five_number_consistent_with_summarize(self):
        rng = random.Random(3)
        samples = [rng.gauss(2000, 300) for _ in range(500)]
        doc = export_distribution({"local": {"m": samples}})
        row = doc["points"]["local"]["m"]
        s = summarize(samples)
        assert row["min"] == s.minimum
        assert row["q1"] == s.q1
        assert row["median"] == s.median
        assert row["q3"] == s.q3
        assert row["max"] == s.maximum

    def test_json_serializable(self):
        doc = export_distribution({"external": {"m": [1.0, 2.0, 3.0]}})
        json.dumps(doc)


class TestSummaryTableFromSamples:
    def test_builds_rows_and_counts(self):
        table = summary_table_from_samples(
            "local", {"a": [1, 2, 3, 4], "b": [10, 20, 30]}
        )
        assert table.rows["a"].median == 2.5
        assert table.sample_counts == {"a": 4, "b": 3}

    def test_invariants_on_summary(self):
        s = summarize([3, 1, 2])
        assert s.minimum <= s.q1 <= s.median <= s.q3 <= s.maximum
        assert s.minimum <= s.avg <= s.maximum
        assert s.sd >= 0

    def test_invalid_summary_rejected(self):
        with pytest.raises(ValueError):
            TrafficSummary(minimum=5, q1=4, median=3, avg=4, q3=2, maximum=1, sd=0)
