"""Single-run and batch execution with CSV outputs.

A run writes ``edges.csv`` (per-edge, per-60-s-bin travel rates) and
``summary.csv`` (one network-level row). A batch executes an MPR x PER grid
with replications on a bounded process pool and merges everything into one
``batch_summary.csv`` sorted by (mpr, per, replication), with per-cell mean
and sample-stddev rows appended. Rows are assembled after all workers finish,
so the merged file is byte-identical at any parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import BatchSpec, ScenarioConfig
from .engine import SpawnQueueOverflow, World
from .metrics import EdgeRecord, RunSummary, network_summary, travel_rate
from .network import RoadNetwork


@dataclass(frozen=True)
class RunResult:
    summary: RunSummary
    bins: tuple[EdgeRecord, ...]
    edge_totals: tuple[EdgeRecord, ...]
    spawned: int
    completed: int
    queued_at_end: int


def _fmt(x) -> str:
    """CSV cell: full-precision floats, empty for missing."""
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x) if not x.is_integer() else repr(x)
    return str(x)


def _pct(fraction: float | None) -> str:
    if fraction is None:
        return "NA"
    value = fraction * 100.0
    return str(int(round(value))) if abs(value - round(value)) < 1e-9 else repr(value)


def write_edges_csv(path, bins, network: RoadNetwork) -> None:
    """Per-edge, per-bin rows with the edge-local congestion index."""
    ff = {e.id: (e.length / e.speed_limit / 60.0) / (e.length / 1000.0)
          for e in network.edges}
    lines = ["edge_id,t0,t1,traversals,travel_rate_min_per_km,rci\n"]
    for rec in bins:
        tr = travel_rate(rec)
        idx = None if tr is None else (tr - ff[rec.edge_id]) / ff[rec.edge_id]
        lines.append(f"{rec.edge_id},{_fmt(rec.t0)},{_fmt(rec.t1)},"
                     f"{rec.traversals},{_fmt(tr)},{_fmt(idx)}\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")


def summary_row(s: RunSummary) -> str:
    return (f"{_pct(s.mpr / 100.0)},{_pct(None if s.per is None else s.per / 100.0)},"
            f"{_fmt(s.travel_rate)},{_fmt(s.rci)},{s.collisions},{s.vehicles_completed}\n")


def write_summary_csv(path, s: RunSummary) -> None:
    Path(path).write_text(
        "mpr,per,travel_rate,rci,collisions,vehicles_completed\n" + summary_row(s),
        encoding="utf-8", newline="\n")


def run_scenario(cfg: ScenarioConfig, out_dir=None, progress=None) -> RunResult:
    """Execute one run; write CSVs when out_dir is given.

    Raises SpawnQueueOverflow when demand cannot be served (runtime abort).
    """
    traj_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.output.trajectories:
            traj_path = out / "trajectories.csv"
    world = World(cfg, trajectory_path=traj_path)
    world.run(progress=progress)
    per_pct = None if cfg.demand.mpr <= 0 and cfg.channel.per == 0 else cfg.channel.per * 100.0
    summary = network_summary(
        world.metrics.edge_totals(), cfg.network,
        mpr=cfg.demand.mpr * 100.0,
        per=per_pct,
        collisions=world.collision_count,
        vehicles_completed=world.n_despawned,
    )
    result = RunResult(
        summary=summary,
        bins=tuple(world.metrics.bin_records()),
        edge_totals=tuple(world.metrics.edge_totals()),
        spawned=world.n_spawned,
        completed=world.n_despawned,
        queued_at_end=world.queued,
    )
    if out_dir is not None:
        write_edges_csv(out / "edges.csv", result.bins, cfg.network)
        write_summary_csv(out / "summary.csv", summary)
    return result


def _cell_config(base: ScenarioConfig, mpr: float, per: float | None, seed: int) -> ScenarioConfig:
    channel = replace(base.channel, per=0.0 if per is None else per)
    demand = replace(base.demand, mpr=mpr)
    return replace(base, demand=demand, channel=channel, seed=seed)


def _run_cell(args):
    """Worker entry point; returns (key, summary-or-None, error-or-None)."""
    base, mpr, per, rep, seed, out_dir = args
    cfg = _cell_config(base, mpr, per, seed)
    cell_dir = None
    if out_dir is not None:
        tag = f"mpr{int(round(mpr * 100)):03d}_per{'NA' if per is None else int(round(per * 100)):03}_rep{rep}"
        cell_dir = Path(out_dir) / tag
    try:
        result = run_scenario(cfg, out_dir=cell_dir)
    except SpawnQueueOverflow as exc:
        return (mpr, per, rep, seed), None, str(exc)
    # the baseline cell has no connected vehicles, so PER is not applicable
    summary = result.summary
    if per is None:
        summary = replace(summary, per=None)
    return (mpr, per, rep, seed), summary, None


@dataclass(frozen=True)
class BatchResult:
    rows: tuple[tuple[tuple, RunSummary], ...]   # ((mpr, per, rep, seed), summary)
    failures: tuple[tuple[tuple, str], ...]      # ((mpr, per, rep, seed), message)


def _sort_key(item):
    (mpr, per, rep, _seed) = item[0]
    return (mpr, -1.0 if per is None else per, rep)


def batch_rows_to_csv(batch: BatchResult) -> str:
    """Merged per-replication rows plus per-cell mean / sample-stddev rows."""
    lines = ["mpr,per,replication,travel_rate,rci,collisions,vehicles_completed\n"]
    cells: dict[tuple, list[RunSummary]] = {}
    for (mpr, per, rep, _seed), s in batch.rows:
        lines.append(f"{_pct(mpr)},{_pct(per)},{rep},{_fmt(s.travel_rate)},"
                     f"{_fmt(s.rci)},{s.collisions},{s.vehicles_completed}\n")
        cells.setdefault((mpr, per), []).append(s)
    for (mpr, per), group in sorted(cells.items(),
                                    key=lambda kv: (kv[0][0], -1.0 if kv[0][1] is None else kv[0][1])):
        n = len(group)
        tr = [g.travel_rate for g in group]
        ix = [g.rci for g in group]
        mean_tr, mean_ix = sum(tr) / n, sum(ix) / n
        if n > 1:
            std_tr = math.sqrt(sum((x - mean_tr) ** 2 for x in tr) / (n - 1))
            std_ix = math.sqrt(sum((x - mean_ix) ** 2 for x in ix) / (n - 1))
        else:
            std_tr = std_ix = None
        coll = sum(g.collisions for g in group)
        done = sum(g.vehicles_completed for g in group)
        lines.append(f"{_pct(mpr)},{_pct(per)},mean,{_fmt(mean_tr)},{_fmt(mean_ix)},{coll},{done}\n")
        lines.append(f"{_pct(mpr)},{_pct(per)},std,{_fmt(std_tr)},{_fmt(std_ix)},,\n")
    return "".join(lines)


def run_batch(spec: BatchSpec, out_dir=None, progress=None) -> BatchResult:
    """Run every (mpr, per, replication) cell; merge into a sorted table.

    Cells run on a process pool bounded by ``spec.parallelism``; a failed cell
    is reported in the result and the rest still complete.
    """
    jobs = [(spec.base, mpr, per, rep, seed, out_dir)
            for (mpr, per, rep, seed) in spec.cells()]
    results = []
    if spec.parallelism <= 1:
        for job in jobs:
            results.append(_run_cell(job))
            if progress is not None:
                progress(results[-1][0], results[-1][2])
    else:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            for res in pool.map(_run_cell, jobs):
                results.append(res)
                if progress is not None:
                    progress(res[0], res[2])
    rows = sorted(((key, s) for key, s, err in results if err is None), key=_sort_key)
    failures = sorted(((key, err) for key, _s, err in results if err is not None),
                      key=_sort_key)
    batch = BatchResult(rows=tuple(rows), failures=tuple(failures))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "batch_summary.csv").write_text(batch_rows_to_csv(batch),
                                               encoding="utf-8", newline="\n")
    return batch
