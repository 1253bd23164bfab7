#!/usr/bin/env python3
"""Full offline desk experiment: replay, capture, account, summarize, forecast.

Runs the two-agent mock replay over loopback with both capture points
enabled, joins streams to queries, prints the seven-statistic summary of
the run next to the bundled reference table, and ends with the traffic
forecast. Capture needs CAP_NET_RAW; without it the run degrades to
log-only and the capture-based sections are skipped.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from agenttraffic.capture import capture_available
from agenttraffic.flows import (
    assign_stream_indices,
    conservation_check,
    match_streams_to_queries,
    sum_stream_bytes,
)
from agenttraffic.forecast import builtin_scenarios, forecast_markdown, forecast_table
from agenttraffic.harness import RunConfig, run_experiment
from agenttraffic.pcapio import parse_capture
from agenttraffic.runlog import read_query_log
from agenttraffic.stats import emit_report, load_reference_table, summary_table_from_samples


def analyze_point(name, pcap_path):
    capture = parse_capture(pcap_path.read_bytes())
    assignment = assign_stream_indices(capture.packets)
    streams = sum_stream_bytes(capture, assignment)
    ok, lhs, rhs = conservation_check(capture, assignment, streams)
    print(
        f"{name}: {len(capture.packets)} frames, {len(streams)} streams, "
        f"conservation {'OK' if ok else 'BROKEN'} ({lhs} == {rhs})"
    )
    return streams


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--prompts", type=int, default=100)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--model", default="open-mistral-7b")
    parser.add_argument("--out", default="runs")
    parser.add_argument("--tls", action="store_true", help="TLS on the external hop")
    args = parser.parse_args()

    can_capture = capture_available()
    if not can_capture:
        print("note: raw capture unavailable (needs CAP_NET_RAW); running log-only")

    config = RunConfig(
        prompt_count=args.prompts,
        seed=args.seed,
        model_profile_name=args.model,
        out_dir=args.out,
        capture_local=can_capture,
        capture_external=can_capture,
        mock_transport="tls" if args.tls else "plain",
    )
    artifacts = run_experiment(config)
    print(f"run {artifacts.run_id}: log at {artifacts.query_log}")
    for warning in artifacts.warnings:
        print(f"warning: {warning}")

    log = read_query_log(artifacts.query_log)
    ok_count = sum(1 for e in log if e.upstream_status == 200)
    print(f"{len(log)} queries, {ok_count} ok, "
          f"mean latency {sum(e.latency for e in log) / len(log) * 1000:.1f} ms")

    if not artifacts.capture_local:
        return

    local = analyze_point("local", artifacts.capture_local)
    external = analyze_point("external", artifacts.capture_external)
    result = match_streams_to_queries(log, local, external)
    if not result.ok:
        print("match problems:", "; ".join(result.problems))
        return

    model = log[0].model_profile_name
    samples = {
        "local": {model: [e.local_total_bytes for e in result.exchanges]},
        "external": {model: [e.external_total_bytes for e in result.exchanges]},
    }
    for point in ("local", "external"):
        print(f"\n== {point} capture point, this run ==")
        table = summary_table_from_samples(point, samples[point])
        print(emit_report(table, "markdown"))
        print(f"== {point} capture point, bundled reference ==")
        print(emit_report(load_reference_table(point), "markdown"))

    print("== traffic forecast, built-in scenarios ==")
    print(forecast_markdown(forecast_table(builtin_scenarios(), 400 * 10**18)))


if __name__ == "__main__":
    main()
