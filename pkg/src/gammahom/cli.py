"""Command line entry point: ``gammahom <subcommand> [--config FILE] [--out DIR] [--jobs K]``."""

from __future__ import annotations

import argparse
import logging
import sys

from gammahom.config import ConfigError, ExperimentConfig, LpCase, parse_config
from gammahom.lp_homogenization import INTEGRANDS
from gammahom.pipeline import StageError, run_pipeline

SUBCOMMANDS = {
    "correctors": ("correctors",),
    "homogenize": ("correctors", "homogenize"),
    "expand": ("correctors", "homogenize", "expand"),
    "rl": ("rl",),
    "lp": ("lp",),
    "full-report": ("correctors", "homogenize", "expand", "rl", "lp"),
}

HELP = {
    "correctors": "solve the cell problems and check corrector invariants",
    "homogenize": "cell stage plus F0 and the first order limit with its term groups",
    "expand": "fine-scale n-sweep: energy gaps, residual rates and extrapolated limits",
    "rl": "first order Riemann-Lebesgue discrepancies",
    "lp": "mass-constrained minima of oscillating and homogenized functionals",
    "full-report": "every stage plus figures",
}


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="gammahom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="TOML experiment config (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (overrides [experiment] output)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "lp":
            p.add_argument("--integrand", choices=sorted(INTEGRANDS),
                           help="run a single integrand preset")
            p.add_argument("--mass", type=float, help="mass constraint m")
            p.add_argument("--ns", type=_int_list, help="comma-separated n-list")
    return parser


def _apply_lp_overrides(cfg: ExperimentConfig, args):
    if getattr(args, "integrand", None):
        cfg.lp.cases = [LpCase(args.integrand)]
    if getattr(args, "mass", None) is not None:
        cfg.lp.mass = args.mass
    if getattr(args, "ns", None):
        ns = args.ns
        if any(b <= a for a, b in zip(ns, ns[1:])) or min(ns) < 1:
            raise ConfigError(["--ns: n-list must be strictly increasing"])
        cfg.lp.ns = ns


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config) if args.config else ExperimentConfig()
        _apply_lp_overrides(cfg, args)
        if args.jobs < 1:
            raise ConfigError(["--jobs must be >= 1"])
        stages = SUBCOMMANDS[args.command]
        man = run_pipeline(cfg, stages=stages, out=args.out, jobs=args.jobs,
                           figures=args.command == "full-report")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for name, ok in sorted(man.checks.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"outputs in {man.output}")
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
