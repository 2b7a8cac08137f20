"""Edge-based traffic efficiency accounting.

Travel rate is traversal time per unit distance (min/km, the inverse of mean
speed); the relative congestion index (RCI) is the relative excess of the
travel rate over the free-flow rate, (tr - tr_ff) / tr_ff, so 0 means free
flow and values above 2 mean very heavy congestion. Both are measured per
edge in fixed time bins and aggregated network-wide as vehicle-hours over
vehicle-kilometers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class EdgeRecord:
    """Traversal aggregates for one edge over one time interval.

    Partial traversals contribute pro-rated time and distance; the traversal
    counter increments only when a vehicle completes the full edge.
    """

    edge_id: str
    t0: float
    t1: float
    traversals: int = 0
    total_time: float = 0.0      # s
    total_distance: float = 0.0  # m

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValueError("interval must have positive length")
        if self.total_time < 0 or self.total_distance < 0 or self.traversals < 0:
            raise ValueError("aggregates must be nonnegative")


@dataclass(frozen=True)
class RunSummary:
    """One scenario outcome, shaped like a row of the results table."""

    mpr: float                 # percent
    per: float | None          # percent, None for the no-CAV baseline
    travel_rate: float         # min/km
    rci: float
    collisions: int
    vehicles_completed: int


def record_traversal(rec: EdgeRecord, time_in_edge: float, distance_in_edge: float,
                     completed: bool = False) -> EdgeRecord:
    """Accumulate one vehicle's contribution on an edge."""
    if time_in_edge < 0 or distance_in_edge < 0:
        raise ValueError("time and distance contributions must be nonnegative")
    return replace(
        rec,
        total_time=rec.total_time + time_in_edge,
        total_distance=rec.total_distance + distance_in_edge,
        traversals=rec.traversals + (1 if completed else 0),
    )


def travel_rate(rec: EdgeRecord) -> float | None:
    """Aggregate travel rate in min/km, or None when nothing was driven."""
    if rec.total_distance <= 0:
        return None
    return (rec.total_time / 60.0) / (rec.total_distance / 1000.0)


def rci(tr: float, tr_ff: float) -> float:
    """Relative congestion index: relative delay over the free-flow rate."""
    if tr_ff <= 0:
        raise ValueError("free-flow travel rate must be positive")
    return (tr - tr_ff) / tr_ff


def merge_records(a: EdgeRecord, b: EdgeRecord) -> EdgeRecord:
    """Combine two interval records of the same edge (union of intervals)."""
    if a.edge_id != b.edge_id:
        raise ValueError("cannot merge records of different edges")
    return EdgeRecord(
        a.edge_id, min(a.t0, b.t0), max(a.t1, b.t1),
        a.traversals + b.traversals,
        a.total_time + b.total_time,
        a.total_distance + b.total_distance,
    )


def network_summary(records, network, *, mpr: float, per: float | None,
                    collisions: int, vehicles_completed: int) -> RunSummary:
    """Aggregate edge records into a run summary.

    The network travel rate is total vehicle time over total vehicle distance
    (unit-converted); the RCI compares it against the length-weighted
    free-flow rate of the corridor.
    """
    records = list(records)
    total_time = sum(r.total_time for r in records)
    total_distance = sum(r.total_distance for r in records)
    if total_distance <= 0:
        raise ValueError("empty run: no distance driven in the measured window")
    tr = (total_time / 60.0) / (total_distance / 1000.0)
    tr_ff = network.free_flow_travel_rate()
    return RunSummary(
        mpr=mpr, per=per,
        travel_rate=tr, rci=rci(tr, tr_ff),
        collisions=collisions, vehicles_completed=vehicles_completed,
    )


class MetricsAccumulator:
    """Per-(edge, bin) accumulation owned by the engine during a run.

    The measured window starts at ``warmup``; contributions are attributed to
    the bin containing the step start time. Vectorized add for the common
    no-boundary-crossing case, scalar adds for crossings.
    """

    def __init__(self, network, warmup: float, duration: float, bin_width: float = 60.0):
        self.network = network
        self.warmup = warmup
        self.duration = duration
        self.bin_width = bin_width
        self.n_edges = len(network.edges)
        self.n_bins = max(1, int(np.ceil((duration - warmup) / bin_width)))
        self._time = np.zeros((self.n_bins, self.n_edges))
        self._dist = np.zeros((self.n_bins, self.n_edges))
        self._traversals = np.zeros((self.n_bins, self.n_edges), dtype=np.int64)

    def bin_of(self, t: float) -> int | None:
        if t < self.warmup or t >= self.duration:
            return None
        return min(int((t - self.warmup) / self.bin_width), self.n_bins - 1)

    def add_array(self, t_start: float, edge_idx, times, dists) -> None:
        b = self.bin_of(t_start)
        if b is None:
            return
        np.add.at(self._time[b], edge_idx, times)
        np.add.at(self._dist[b], edge_idx, dists)

    def add(self, t_start: float, edge_idx: int, time: float, dist: float,
            completed: bool = False) -> None:
        b = self.bin_of(t_start)
        if b is None:
            return
        self._time[b, edge_idx] += time
        self._dist[b, edge_idx] += dist
        if completed:
            self._traversals[b, edge_idx] += 1

    def bin_records(self) -> list[EdgeRecord]:
        out = []
        for b in range(self.n_bins):
            t0 = self.warmup + b * self.bin_width
            t1 = min(t0 + self.bin_width, self.duration)
            for e, edge in enumerate(self.network.edges):
                out.append(EdgeRecord(edge.id, t0, t1,
                                      int(self._traversals[b, e]),
                                      float(self._time[b, e]),
                                      float(self._dist[b, e])))
        return out

    def edge_totals(self) -> list[EdgeRecord]:
        out = []
        for e, edge in enumerate(self.network.edges):
            out.append(EdgeRecord(edge.id, self.warmup, self.duration,
                                  int(self._traversals[:, e].sum()),
                                  float(self._time[:, e].sum()),
                                  float(self._dist[:, e].sum())))
        return out
