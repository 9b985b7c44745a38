"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from chapar import experiments as ex
from chapar.config import load_config
from chapar.engine import InvariantViolation, describe, run
from chapar.events import LogSchemaError
from chapar.world import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _seeds(args) -> list[int]:
    if args.paper_mode:
        if args.seeds is not None:
            raise ConfigError("--paper-mode fixes the seeds to 0..9; drop --seeds")
        return list(range(ex.PAPER_SEEDS))
    try:
        seeds = ex.parse_seeds(args.seeds if args.seeds is not None else ex.DEFAULT_SEEDS)
    except ValueError:
        raise ConfigError(f"bad --seeds value {args.seeds!r}") from None
    if not seeds:
        raise ConfigError("no seeds given")
    return seeds


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    res = run(cfg)
    if args.log:
        res.log.write(args.log)
    print(describe(res))
    print(json.dumps(res.metrics, sort_keys=True))
    return EXIT_OK


def cmd_exp1(args) -> int:
    rows, table = ex.run_experiment1(_seeds(args))
    for p in ex.write_exp1(args.out, rows, table):
        print(p)
    return EXIT_OK


def cmd_exp2(args) -> int:
    rows, table = ex.run_experiment2(_seeds(args))
    for p in ex.write_exp2(args.out, rows, table):
        print(p)
    for t in table:
        print(f"{t.method}: absorption {t.absorption_pct.mean:.2f}% over {t.run_count} runs")
    return EXIT_OK


def cmd_robustness(args) -> int:
    sc = ex.load_scenario(args.scenario)
    rows, summary = ex.run_robustness(sc)
    for p in ex.write_robustness(args.out, rows, summary):
        print(p)
    print(json.dumps(summary["methods"], indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    for p in ex.report(args.inp, args.out):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chapar", description="Swarm task-allocation simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one simulation run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="write the JSON-lines event log here")
    p.set_defaults(func=cmd_run)

    for name, func in (("exp1", cmd_exp1), ("exp2", cmd_exp2)):
        p = sub.add_parser(name, help=f"experiment {name[-1]} batch")
        p.add_argument("--seeds", help="count (N means 0..N-1) or comma list")
        p.add_argument("--out", required=True)
        p.add_argument("--paper-mode", action="store_true", help="10 runs, seeds 0..9")
        p.set_defaults(func=func)

    p = sub.add_parser("robustness", help="failure-injection scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file or shipped name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("report", help="tables and plot series from batch CSVs")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.RunError as e:
        if isinstance(e.cause, InvariantViolation):
            print(f"invariant violation: {e}", file=sys.stderr)
            return EXIT_INVARIANT
        if isinstance(e.cause, ConfigError):
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, LogSchemaError, ex.SchemaMismatch, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
