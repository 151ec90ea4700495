"""Command line entry point: run, aggregate, plot, replay and calibrate."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, InvalidRoad, SchemaMismatch
from .geometry import GeometryConfig
from .harness import (
    CampaignConfig,
    CampaignResult,
    aggregate,
    calibrate,
    emit_boxplot,
    format_table,
    replay,
    run_experiment,
)
from .records import TestSuite
from .sut import SimConfig

VERBOSITY_ENV = "WOGAN_VERBOSITY"
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _setup_logging() -> None:
    level = {"0": logging.WARNING, "1": logging.INFO, "2": logging.DEBUG}.get(os.environ.get(VERBOSITY_ENV, "1"),
                                                                               logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wogan", description="Online WGAN road test generation against a mock lane keeper.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run repeated campaigns of one algorithm")
    run.add_argument("--config", help="JSON campaign config; CLI flags override its fields")
    run.add_argument("--algorithm", choices=("wogan", "random", "frenetic"))
    run.add_argument("--budget-tests", type=int)
    run.add_argument("--budget-seconds", type=float)
    run.add_argument("--reps", type=int, dest="repetitions")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", dest="output_dir")

    agg = sub.add_parser("aggregate", help="print a comparison table of finished campaigns")
    agg.add_argument("dirs", nargs="+")
    agg.add_argument("--csv", help="also write the table as CSV")

    plot = sub.add_parser("plot", help="box plot of a statistic across campaigns")
    plot.add_argument("dirs", nargs="+")
    plot.add_argument("--stat", default="failing")
    plot.add_argument("--out", required=True)

    rep = sub.add_parser("replay", help="simulate one test and render it")
    src = rep.add_mutually_exclusive_group(required=True)
    src.add_argument("--kappas", type=float, nargs="+")
    src.add_argument("--jsonl", help="records file to take the test from")
    rep.add_argument("--index", type=int, default=0, help="record index within --jsonl")
    rep.add_argument("--out", required=True)

    cal = sub.add_parser("calibrate", help="failure rate of uniform random tests on the mock SUT")
    cal.add_argument("--n", type=int, default=400)
    cal.add_argument("--seed", type=int, default=0)
    return p


def _cmd_run(args) -> None:
    cfg = CampaignConfig.load(args.config) if args.config else CampaignConfig()
    cfg = cfg.with_overrides(algorithm=args.algorithm, budget_tests=args.budget_tests,
                             budget_seconds=args.budget_seconds, repetitions=args.repetitions, seed=args.seed,
                             workers=args.workers, output_dir=args.output_dir)
    result = run_experiment(cfg)
    mean_fail = result.aggregate["failing"][0]
    print(f"{cfg.algorithm}: {cfg.repetitions} repetitions, mean failing tests {mean_fail:.2f} -> {cfg.output_dir}")


def _cmd_aggregate(args) -> None:
    rows = aggregate(args.dirs)
    print(format_table(rows))
    if args.csv:
        import csv

        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


def _cmd_plot(args) -> None:
    groups = {}
    for d in args.dirs:
        r = CampaignResult.load(d)
        if not hasattr(r.stats[0], args.stat):
            raise ConfigError(f"--stat: unknown statistic {args.stat!r}")
        label = r.algorithm if r.algorithm not in groups else f"{r.algorithm} ({Path(d).name})"
        groups[label] = [getattr(s, args.stat) for s in r.stats if getattr(s, args.stat) is not None]
    emit_boxplot(groups, args.out, title=args.stat)
    print(args.out)


def _cmd_replay(args) -> None:
    if args.kappas is not None:
        test = args.kappas
    else:
        suite = TestSuite.from_jsonl(args.jsonl)
        if not 0 <= args.index < len(suite):
            raise ConfigError(f"--index: {args.index} outside 0..{len(suite) - 1}")
        test = suite[args.index].test
    trace, svg = replay(test, args.out)
    print(trace)
    print(svg)


def _cmd_calibrate(args) -> None:
    sim, geometry = SimConfig(), GeometryConfig()
    rate, median = calibrate(args.n, args.seed, sim, geometry)
    print(f"failure rate {rate:.4f} over {args.n} uniform random valid tests (median fitness {median:.3f})")


COMMANDS = {
    "run": _cmd_run,
    "aggregate": _cmd_aggregate,
    "plot": _cmd_plot,
    "replay": _cmd_replay,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (OSError, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidRoad, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
