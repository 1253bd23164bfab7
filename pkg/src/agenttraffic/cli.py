"""Command-line entry point.

Subcommands: run, analyze, summarize, forecast, report.
Exit codes: 0 success, 2 configuration error, 3 data mismatch,
4 capture unavailable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import flows, forecast, harness, pcapio, stats
from .profiles import UnknownModel
from .runlog import read_query_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISMATCH = 3
EXIT_NO_CAPTURE = 4


def _fail(kind: str, message: str) -> None:
    print(f"error: {kind}: {message}", file=sys.stderr)


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {value!r}")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agenttraffic",
        description="Replay agent exchanges, account their packet captures, and forecast agent traffic.",
    )
    parser.add_argument("--config", type=Path, help="JSON file with run settings")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="run seed")
    parser.add_argument(
        "--format", choices=["csv", "json", "markdown"], default="markdown", help="report format"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the two-agent replay experiment")
    p.add_argument("--mock", action="store_true", help="use the deterministic mock backend (default)")
    p.add_argument("--live", metavar="URL", help="forward to a live LLM endpoint URL")
    p.add_argument("--prompts", type=int, default=None, help="number of prompts to replay")
    p.add_argument("--model", default=None, help="model profile name")
    p.add_argument("--dataset", default=None, help="JSON-lines prompt dataset (default: bundled)")
    p.add_argument(
        "--capture",
        choices=["off", "local", "external", "both"],
        default=None,
        help="which capture points to record",
    )
    p.add_argument("--tls-upstream", action="store_true", help="TLS between agent and mock backend")
    p.add_argument("--keep-alive", action="store_true", help="reuse connections (not for measurement)")
    p.add_argument("--listen", type=_parse_listen, default=None, help="responding agent HOST:PORT")
    p.add_argument("--credential-env", default=None, help="env var holding the live API credential")
    p.add_argument("--run-id", default=None)

    p = sub.add_parser("analyze", help="join captures to a run log and account bytes per query")
    p.add_argument("--log", required=True, help="query log (JSON-lines)")
    p.add_argument("--local", help="local capture point pcap")
    p.add_argument("--external", help="external capture point pcap")

    p = sub.add_parser("summarize", help="seven-statistic summary tables from exchange CSVs")
    p.add_argument("--exchanges", nargs="+", required=True, help="exchange CSV files from analyze")
    p.add_argument("--distribution-out", help="also write a boxplot-ready JSON here")

    p = sub.add_parser("forecast", help="project agent traffic for usage scenarios")
    p.add_argument(
        "--paper-defaults",
        action="store_true",
        help="use the built-in published short/medium/long-term scenarios",
    )
    p.add_argument("--scenarios", help="JSON file with custom scenarios")
    p.add_argument(
        "--share-of-internet",
        metavar="SIZE",
        help="also report each scenario as a fraction of this monthly total (e.g. 400EB)",
    )

    p = sub.add_parser("report", help="render the bundled reference traffic tables")
    p.add_argument("--point", choices=["local", "external", "both"], default="both")
    return parser


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise harness.ConfigError(f"cannot load config {path}: {exc}") from exc


def cmd_run(args) -> int:
    settings = _load_config_file(args.config)
    if args.live and args.mock:
        raise harness.ConfigError("--mock and --live are mutually exclusive")
    if args.live:
        settings["upstream"] = args.live
    elif args.mock:
        settings["upstream"] = "mock"
    if args.prompts is not None:
        settings["prompt_count"] = args.prompts
    if args.model is not None:
        settings["model_profile_name"] = args.model
    if args.dataset is not None:
        settings["dataset_path"] = args.dataset
    if args.capture is not None:
        settings["capture_local"] = args.capture in ("local", "both")
        settings["capture_external"] = args.capture in ("external", "both")
    if args.tls_upstream:
        settings["mock_transport"] = "tls"
    if args.keep_alive:
        settings["connection_policy"] = "keep-alive"
    if args.listen is not None:
        settings["listen_host"], settings["listen_port"] = args.listen
    if args.credential_env is not None:
        settings["credential_env"] = args.credential_env
    if args.run_id is not None:
        settings["run_id"] = args.run_id
    if args.seed is not None:
        settings["seed"] = args.seed
    settings.setdefault("out_dir", str(args.out))

    if "mock_size" in settings and isinstance(settings["mock_size"], dict):
        from .profiles import SizeDistribution

        settings["mock_size"] = SizeDistribution(**settings["mock_size"])

    unknown = set(settings) - set(harness.RunConfig.__dataclass_fields__)
    if unknown:
        raise harness.ConfigError(f"unknown run settings: {', '.join(sorted(unknown))}")
    config = harness.RunConfig(**settings)
    capture_requested = config.measurement_mode
    artifacts = harness.run_experiment(config)
    for warning in artifacts.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"run_id: {artifacts.run_id}")
    print(f"query_log: {artifacts.query_log}")
    if artifacts.capture_local:
        print(f"capture_local: {artifacts.capture_local}")
    if artifacts.capture_external:
        print(f"capture_external: {artifacts.capture_external}")
    if capture_requested and any("capture unavailable" in w for w in artifacts.warnings):
        _fail("capture", "capture requested but unavailable; artifacts are log-only")
        return EXIT_NO_CAPTURE
    return EXIT_OK


def _analyze_point(pcap_path: str) -> tuple[list[flows.StreamStats], str, pcapio.CaptureFile]:
    capture = pcapio.parse_capture(Path(pcap_path).read_bytes())
    assignment = flows.assign_stream_indices(capture.packets)
    streams = flows.sum_stream_bytes(capture, assignment)
    ok, lhs, rhs = flows.conservation_check(capture, assignment, streams)
    line = (
        f"byte conservation: {'OK' if ok else 'FAILED'} "
        f"(streams+unassigned={lhs}, all frames={rhs})"
    )
    if not ok:
        raise RuntimeError(f"{pcap_path}: {line}")
    return streams, line, capture


def cmd_analyze(args) -> int:
    if not args.local and not args.external:
        raise harness.ConfigError("analyze needs --local and/or --external")
    log = read_query_log(args.log)
    out_dir: Path = args.out
    out_dir.mkdir(parents=True, exist_ok=True)

    local_streams = external_streams = None
    for point, path in (("local", args.local), ("external", args.external)):
        if not path:
            continue
        streams, line, capture = _analyze_point(path)
        print(f"{point}: {len(streams)} streams, {len(capture.packets)} packets; {line}")
        csv_path = out_dir / f"streams_{point}.csv"
        csv_path.write_text(
            flows.streams_to_csv(streams, capture.timestamp_resolution), encoding="utf-8"
        )
        print(f"{point}: stream stats -> {csv_path}")
        if point == "local":
            local_streams = streams
        else:
            external_streams = streams

    result = flows.match_streams_to_queries(log, local_streams, external_streams)
    exchanges_path = out_dir / "exchanges.csv"
    exchanges_path.write_text(flows.exchanges_to_csv(result.exchanges), encoding="utf-8")
    print(f"exchanges: {len(result.exchanges)} -> {exchanges_path}")
    if not result.ok:
        for problem in result.problems:
            _fail("data-mismatch", problem)
        return EXIT_MISMATCH
    return EXIT_OK


def _read_exchange_samples(paths: list[str]) -> dict[str, dict[str, list[float]]]:
    samples: dict[str, dict[str, list[float]]] = {"local": {}, "external": {}}
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                model = row.get("model_profile_name") or "unknown"
                for point, column in (
                    ("local", "local_total_bytes"),
                    ("external", "external_total_bytes"),
                ):
                    value = row.get(column)
                    if value:
                        samples[point].setdefault(model, []).append(float(value))
    return {point: by_model for point, by_model in samples.items() if by_model}


def cmd_summarize(args) -> int:
    samples = _read_exchange_samples(args.exchanges)
    if not samples:
        raise harness.ConfigError("no byte samples found in the given exchange CSVs")
    for point, by_model in samples.items():
        table = stats.summary_table_from_samples(point, by_model)
        print(f"# {point} capture point")
        print(stats.emit_report(table, args.format))
    if args.distribution_out:
        doc = stats.export_distribution(samples)
        Path(args.distribution_out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"distribution export -> {args.distribution_out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    if args.scenarios and args.paper_defaults:
        raise harness.ConfigError("--scenarios and --paper-defaults are mutually exclusive")
    if args.scenarios:
        scenarios = forecast.load_scenarios(args.scenarios)
    else:
        scenarios = forecast.builtin_scenarios()
    internet = forecast.parse_bytes_si(args.share_of_internet) if args.share_of_internet else None
    table = forecast.forecast_table(scenarios, internet)
    if args.format == "json":
        print(json.dumps(table, indent=2))
    elif args.format == "csv":
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=list(table["scenarios"][0].keys()))
        writer.writeheader()
        writer.writerows(table["scenarios"])
        print(out.getvalue(), end="")
    else:
        print(forecast.forecast_markdown(table), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    points = ["local", "external"] if args.point == "both" else [args.point]
    for point in points:
        table = stats.load_reference_table(point)
        print(f"# {point} capture point (bundled reference measurements)")
        print(stats.emit_report(table, args.format))
        grand = stats.grand_summary(table)
        print(
            f"grand average of per-model averages: {grand['grand_avg_bytes']:.2f} bytes "
            f"(rounds to {round(grand['grand_avg_bytes'])})"
        )
        print(f"grand sd ({grand['sd_convention']}): {grand['grand_sd_bytes']:.2f} bytes")
        if "published_sd_bytes" in grand:
            flag = "DIVERGES" if grand["sd_diverges_from_published"] else "matches"
            print(
                f"published aggregate: avg {grand['published_avg_bytes']} bytes, "
                f"sd {grand['published_sd_bytes']} bytes; computed sd {flag} "
                "(the published aggregation convention is unstated)"
            )
        print()
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "analyze": cmd_analyze,
    "summarize": cmd_summarize,
    "forecast": cmd_forecast,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (harness.ConfigError, UnknownModel, ValueError) as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    except harness.HarnessError as exc:
        _fail("run", str(exc))
        return 1
    except OSError as exc:
        _fail("io", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
