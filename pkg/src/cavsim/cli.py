"""Command-line front end.

Single run by default; ``--batch`` executes the default MPR x PER grid with
three replications per cell. Progress goes to standard error once per
simulated 60 s; machine-readable outputs only go to files. Exit codes:
0 ok, 1 configuration or usage error, 2 runtime abort (infeasible demand).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import BatchSpec, ConfigError, default_scenario, load_scenario
from .engine import SpawnQueueOverflow
from .runner import run_batch, run_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cavsim",
        description="Deterministic corridor simulation of mixed CAV/HDV traffic "
                    "with lossy V2V beaconing.")
    p.add_argument("--config", metavar="PATH",
                   help="scenario config file (JSON); defaults to the calibrated "
                        "built-in corridor study")
    p.add_argument("--out-dir", metavar="PATH", default="out",
                   help="output directory for CSV files (default: out)")
    p.add_argument("--seed", type=int, metavar="N",
                   help="override the scenario seed")
    p.add_argument("--batch", action="store_true",
                   help="run the 7-cell MPR x PER grid, 3 replications each")
    p.add_argument("--parallel", type=int, metavar="N", default=1,
                   help="worker processes for --batch (default: 1)")
    p.add_argument("--trajectories", action="store_true",
                   help="write the per-step trajectory log (single run only)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_scenario(args.config) if args.config else default_scenario()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.trajectories:
            cfg = replace(cfg, output=replace(cfg.output, trajectories=True))
        if args.parallel < 1:
            raise ConfigError("--parallel must be at least 1")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out_dir)
    try:
        if args.batch:
            return _run_batch(cfg, out_dir, args)
        return _run_single(cfg, out_dir, args)
    except SpawnQueueOverflow as exc:
        print(f"abort: {exc}", file=sys.stderr)
        return 2


def _run_single(cfg: ScenarioConfig, out_dir: Path, args) -> int:
    progress = None
    if not args.quiet:
        def progress(t, n):
            print(f"t={t:7.1f}s  active={n}", file=sys.stderr)
    result = run_scenario(cfg, out_dir=out_dir, progress=progress)
    if not args.quiet:
        s = result.summary
        print(f"done: travel_rate={s.travel_rate:.4f} min/km  rci={s.rci:.4f}  "
              f"collisions={s.collisions}  completed={s.vehicles_completed}",
              file=sys.stderr)
    return 0


def _run_batch(cfg: ScenarioConfig, out_dir: Path, args) -> int:
    spec = BatchSpec(base=cfg, parallelism=args.parallel)
    progress = None
    if not args.quiet:
        def progress(key, err):
            mpr, per, rep, seed = key
            state = "failed" if err else "ok"
            per_s = "NA" if per is None else f"{per * 100:.0f}"
            print(f"cell mpr={mpr * 100:.0f} per={per_s} rep={rep} seed={seed}: {state}",
                  file=sys.stderr)
    batch = run_batch(spec, out_dir=out_dir, progress=progress)
    for key, message in batch.failures:
        print(f"failed cell {key}: {message}", file=sys.stderr)
    return 2 if batch.failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
