"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 failed sweep cells,
3 theory-check violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, default_config, load_config
from .report import ReportError, emit_report
from .runner import run_sweep, run_trial, verify_theory_suite

EXIT_OK, EXIT_USAGE, EXIT_CELLS, EXIT_THEORY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prefdist", description="Tabular preference-based distribution learning experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a sweep and write the report files")
    run.add_argument("--config", required=True)
    run.add_argument("--output-dir", help="override the config's output_dir")
    run.add_argument("--jobs", type=int, default=1, help="worker processes (one seed per task)")

    trial = sub.add_parser("trial", help="run one cell and print it as JSON")
    trial.add_argument("--config", required=True)
    trial.add_argument("--method", required=True)
    trial.add_argument("--n", type=int, required=True)
    trial.add_argument("--beta", type=float, required=True)
    trial.add_argument("--seed", type=int, required=True)

    sub.add_parser("verify-theory", help="run the inequality check suite")
    sub.add_parser("default-config", help="print the default config as JSON")
    return parser


def _print_reports(reports) -> bool:
    ok = True
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.violations}/{r.instances_tested} violations, "
              f"worst margin {r.worst_margin:.3e}")
        if not r.passed:
            ok = False
            print(f"       worst instance: {r.worst_instance}")
    return ok


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "default-config":
        print(json.dumps(default_config().to_dict(), indent=2, sort_keys=True))
        return EXIT_OK

    if args.command == "verify-theory":
        return EXIT_OK if _print_reports(verify_theory_suite()) else EXIT_THEORY

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "trial":
        if args.method not in cfg.methods:
            print(f"method {args.method!r} not in config methods {list(cfg.methods)}", file=sys.stderr)
            return EXIT_USAGE
        try:
            result = run_trial(cfg, args.method, args.n, args.beta, args.seed)
        except Exception as exc:  # noqa: BLE001 - reported as a cell failure
            print(f"cell failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_CELLS
        print(json.dumps(result.to_dict(), sort_keys=True))
        return EXIT_OK

    sweep = run_sweep(cfg, jobs=args.jobs)
    out = args.output_dir or cfg.output_dir
    try:
        paths = emit_report(sweep, out)
    except ReportError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    for method, fit in sorted(sweep.rate_fits.items()):
        print(f"{method}: slope {fit.slope:.3f} (r^2 {fit.r_squared:.3f}, {fit.points_used} points)")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    theory_ok = _print_reports(sweep.check_reports) if sweep.check_reports else True
    if sweep.failures:
        print(f"{len(sweep.failures)} cell(s) failed", file=sys.stderr)
        return EXIT_CELLS
    return EXIT_OK if theory_ok else EXIT_THEORY


if __name__ == "__main__":
    sys.exit(main())
