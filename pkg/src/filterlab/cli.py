"""Command-line entry point.

Subcommands: ``run`` (execute suites from a config file), ``list-models``,
``list-suites``, ``emit-plotdata`` (regenerate plot CSVs from a completed
run directory).
"""

import argparse
import json
import sys
from pathlib import Path

from .lattice import ConfigurationError
from .models import list_models
from .runner import (ExperimentConfig, ExperimentReport, SUITES, SuiteResult,
                     Verdict, emit_plotdata, parse_config, run)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filterlab",
        description="Monte Carlo laboratory for Euler-discretized "
                    "continuous-time nonlinear filtering")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the suites selected by a config")
    p_run.add_argument("--config", type=Path, default=None,
                       help="key=value config file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="master seed override")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker process count (does not change results)")
    p_run.add_argument("--out", type=Path, default=Path("."),
                       help="output directory for report.json and CSVs")

    sub.add_parser("list-models", help="print the model catalog")
    sub.add_parser("list-suites", help="print the available suites")

    p_plot = sub.add_parser("emit-plotdata",
                            help="derive plot CSVs from a run directory")
    p_plot.add_argument("--config", type=Path, default=None)
    p_plot.add_argument("--seed", type=int, default=None)
    p_plot.add_argument("--threads", type=int, default=None)
    p_plot.add_argument("--out", type=Path, required=True,
                        help="directory containing report.json")
    return parser


def _load_config(args) -> "ExperimentConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    text = ""
    if args.config is not None:
        text = Path(args.config).read_text()
    return parse_config(text, overrides)


def _report_from_dir(out: Path) -> ExperimentReport:
    payload = json.loads((out / "report.json").read_text())["report"]
    config = ExperimentConfig(**{
        k: tuple(v) if isinstance(v, list) else v
        for k, v in payload["config"].items()})
    report = ExperimentReport(config=config, out_dir=str(out))
    for name, s in payload["suites"].items():
        report.suites[name] = SuiteResult(
            name=name, verdicts=[Verdict(**v) for v in s["verdicts"]],
            files=s["files"], seconds=0.0, error=s["error"])
    return report


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-models":
            for name in list_models():
                print(name)
            return 0
        if args.command == "list-suites":
            for name in SUITES:
                print(name)
            return 0
        if args.command == "run":
            config = _load_config(args)
            report = run(config, out_dir=args.out)
            for name, suite in report.suites.items():
                status = "PASS" if suite.passed else "FAIL"
                extra = f" ({suite.error})" if suite.error else ""
                print(f"{name}: {status}{extra}")
            print(f"report: {Path(args.out) / 'report.json'}")
            return 0 if report.passed else 1
        if args.command == "emit-plotdata":
            report = _report_from_dir(args.out)
            for path in emit_plotdata(report):
                print(path)
            return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
