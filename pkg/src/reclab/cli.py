"""Command line entry point: ``reclab <kind> --config PATH --out DIR``.

Exit codes: 0 when every asserted tolerance holds, 2 when one fails, 1 on
any error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, ReclabError
from .harness import KINDS, ExperimentConfig, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reclab",
                                     description="Run a recurrence-statistics experiment.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int,
                       help="worker processes (default: $RECLAB_JOBS or 1)")
        p.add_argument("--plot-script", action="store_true",
                       help="also write plot.py for the CSV outputs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError({"config": "must be a JSON object"})
        raw.setdefault("kind", args.kind)
        if raw["kind"] != args.kind:
            raise ConfigError({"kind": f"config says {raw['kind']!r}, command is {args.kind!r}"})
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(cfg, jobs=args.jobs)
        report.write(args.out, plot_script=args.plot_script or None)
    except (ReclabError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"reclab: error: {exc}", file=sys.stderr)
        return 1
    for m in report.metrics:
        if m.asserted:
            status = "PASS" if m.passed else "FAIL"
            print(f"{status} {m.name} = {m.value!r} ({m.comparator} {m.tolerance!r})")
    return 0 if report.passed else 2


if __name__ == "__main__":
    sys.exit(main())
