"""Command line entry point: ``slowfast-gl --study <name> ...``.

Exit codes: 0 success, 1 a self-check failed, 2 configuration or validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import STUDIES, build_config, load_config_file
from .errors import ConfigError, NumericalError
from .harness import run_study

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _csv_floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="slowfast-gl", description="Averaging studies for the slow-fast stochastic Ginzburg-Landau system.")
    ap.add_argument("--config", help="flat key = value config file (model.beta = 1.0, study.samples = 100, ...)")
    ap.add_argument("--study", choices=STUDIES, help="study to run (overrides study.name)")
    ap.add_argument("--eps", type=_csv_floats, help="comma-separated eps list, descending")
    ap.add_argument("--delta", help="comma-separated block lengths, or 'sqrt' for sqrt(eps)")
    ap.add_argument("--p", type=float, dest="p_order", help="moment order p (error uses the 2p-th power)")
    ap.add_argument("--samples", type=int, help="Monte Carlo replicas")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--out", help="output directory for report.csv and report.json")
    ap.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    ap.add_argument("--timings", action="store_true", default=None, help="write wall times into the CSV")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        flat = load_config_file(args.config) if args.config else {}
        overrides = dict(study=args.study, eps_list=args.eps, p_order=args.p_order, mc_samples=args.samples,
                         master_seed=args.seed, out_path=args.out, workers=args.workers, timings=args.timings)
        if args.delta is not None:
            flat = {**flat, "study.delta": args.delta}
        cfg = build_config(flat, **overrides)
        report = run_study(cfg, echo=print)
    except ConfigError as exc:
        print(f"slowfast-gl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"slowfast-gl: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if report.metadata.get("passed") is False:
        print("slowfast-gl: self-check FAILED", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
