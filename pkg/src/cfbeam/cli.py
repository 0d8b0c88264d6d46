"""Command line entry point: ``cfbeam {run, assign-patterns, export, truth}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, config_to_dict, load_config
from .harness import (compute_ground_truth, drop_seed, export_results, load_results,
                      make_assignment, make_drop, run_monte_carlo)
from .patterns import assign_patterns_lb, assign_patterns_random

OUTPUT_ENV = "CFBEAM_OUTPUT_DIR"

log = logging.getLogger("cfbeam")


def _out_dir(arg):
    path = Path(arg or os.environ.get(OUTPUT_ENV, "results"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args):
    config = load_config(args.config, args.set)
    out = _out_dir(args.out)

    def progress(done, total):
        if not args.quiet:
            print(f"drop {done}/{total}", file=sys.stderr)

    stats = run_monte_carlo(config, progress=progress)
    export_results(stats, out / "stats.csv", "csv")
    export_results(stats, out / "stats.json", "json")
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=1)
    for row in stats.rows():
        print("{estimator},{assignment},D={D},N_D={N_D},T={T}: {prob:.3f} +/- {ci95:.3f} "
              "({successes}/{trials})".format(**row))
    return 0


def _read_positions(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["ap_positions"]
    return np.asarray(data, dtype=float).reshape(-1, 2)


def cmd_assign(args):
    positions = _read_positions(args.positions)
    rng = np.random.default_rng(args.seed)
    if args.mode == "lb":
        assignment = assign_patterns_lb(positions, args.D, rng, max_iters=args.max_iters)
    else:
        assignment = assign_patterns_random(len(positions), args.D, rng)
    text = json.dumps(assignment.to_dict())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def cmd_export(args):
    stats = load_results(args.stats)
    export_results(stats, args.out, args.format)
    return 0


def cmd_truth(args):
    config = load_config(args.config, args.set)
    params = config.params
    seed = drop_seed(config.master_seed, args.drop)
    drop, geo, patterns, codebook = make_drop(params, seed, config.geometry)
    assignment = make_assignment(args.assignment, drop, len(patterns), seed)
    truth = compute_ground_truth(geo, assignment, params.N_AP, params.N_UE)
    doc = {"drop_index": args.drop, "drop": drop.to_dict(), "geometry": geo.to_dict(),
           "assignment": assignment.to_dict(), "truth": truth.to_dict()}
    path = _out_dir(args.out) / f"truth_drop{args.drop}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cfbeam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte Carlo detection probability")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("assign-patterns", help="assign data patterns to AP positions")
    p.add_argument("--positions", required=True, help="JSON list of [x, y] or {ap_positions: ...}")
    p.add_argument("--D", type=int, required=True)
    p.add_argument("--mode", choices=("lb", "ra"), default="lb")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("export", help="convert stats JSON to CSV or JSON")
    p.add_argument("--stats", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("truth", help="dump one drop with its ground truth")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--drop", type=int, default=0)
    p.add_argument("--assignment", choices=("lb", "ra"), default="lb")
    p.add_argument("--out")
    p.set_defaults(func=cmd_truth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"cfbeam: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
