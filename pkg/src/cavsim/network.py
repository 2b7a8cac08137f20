"""Road corridor description and traffic demand.

The network is a sequence of edges joined end to start (a motorway corridor).
Positions are front-bumper longitudinal coordinates; each edge has its own
frame, and the network provides the global frame used by the engine.
On-ramps are attachment points where additional demand merges into lane 0.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Edge:
    id: str
    length: float       # m
    lanes: int
    speed_limit: float  # m/s

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"edge {self.id}: length must be positive")
        if self.lanes < 1:
            raise ValueError(f"edge {self.id}: needs at least one lane")
        if self.speed_limit <= 0:
            raise ValueError(f"edge {self.id}: speed limit must be positive")


@dataclass(frozen=True)
class Ramp:
    edge: str
    position: float  # m, within the edge
    kind: str = "on"

    def __post_init__(self):
        if self.kind not in ("on", "off"):
            raise ValueError("ramp kind must be 'on' or 'off'")


@dataclass(frozen=True)
class RoadNetwork:
    edges: tuple[Edge, ...]
    ramps: tuple[Ramp, ...] = ()

    def __post_init__(self):
        if not self.edges:
            raise ValueError("network needs at least one edge")
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ValueError("edge ids must be unique")
        by_id = {e.id: e for e in self.edges}
        for ramp in self.ramps:
            if ramp.edge not in by_id:
                raise ValueError(f"ramp references unknown edge {ramp.edge!r}")
            if not 0 <= ramp.position <= by_id[ramp.edge].length:
                raise ValueError(f"ramp position outside edge {ramp.edge!r}")

    # -- global frame helpers ------------------------------------------------

    @property
    def offsets(self) -> np.ndarray:
        """Global start coordinate of each edge."""
        lengths = np.array([e.length for e in self.edges])
        return np.concatenate(([0.0], np.cumsum(lengths)))[:-1]

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def edge_index_at(self, position: float) -> int:
        """Index of the edge containing a global position (end-exclusive)."""
        bounds = self.offsets
        idx = bisect.bisect_right(list(bounds), position) - 1
        return max(0, min(idx, len(self.edges) - 1))

    def to_edge_frame(self, position: float) -> tuple[str, float]:
        idx = self.edge_index_at(position)
        return self.edges[idx].id, position - float(self.offsets[idx])

    def to_global(self, edge_id: str, s: float) -> float:
        for idx, edge in enumerate(self.edges):
            if edge.id == edge_id:
                return float(self.offsets[idx]) + s
        raise KeyError(edge_id)

    def ramp_global_positions(self) -> list[float]:
        return [self.to_global(r.edge, r.position) for r in self.ramps if r.kind == "on"]

    def free_flow_travel_rate(self) -> float:
        """Length-weighted free-flow travel rate of the corridor, min/km."""
        total_time = sum(e.length / e.speed_limit for e in self.edges)
        return (total_time / 60.0) / (self.total_length / 1000.0)


@dataclass(frozen=True)
class DemandSpec:
    """Traffic demand at the corridor entries.

    inflow feeds the corridor head (spread over its lanes); ramp_inflow feeds
    each on-ramp. mpr is the probability that a spawned vehicle is connected.
    """

    inflow: float = 0.0        # veh/h at the corridor head
    ramp_inflow: float = 0.0   # veh/h per on-ramp
    mpr: float = 0.0           # market penetration rate in [0, 1]

    def __post_init__(self):
        if self.inflow < 0 or self.ramp_inflow < 0:
            raise ValueError("inflows must be nonnegative")
        if not 0.0 <= self.mpr <= 1.0:
            raise ValueError("mpr must be in [0, 1]")


def default_corridor(length_km: float = 7.0, lanes: int = 4,
                     speed_limit_kmh: float = 100.0, edge_km: float = 1.0,
                     ramp_at_km: float | None = 3.5) -> RoadNetwork:
    """Synthetic motorway corridor: uniform edges plus one mid-corridor on-ramp."""
    n_edges = max(1, round(length_km / edge_km))
    limit = speed_limit_kmh / 3.6
    edges = tuple(Edge(f"e{i}", edge_km * 1000.0, lanes, limit) for i in range(n_edges))
    ramps: tuple[Ramp, ...] = ()
    if ramp_at_km is not None:
        idx = min(int(ramp_at_km / edge_km), n_edges - 1)
        within = (ramp_at_km - idx * edge_km) * 1000.0
        ramps = (Ramp(f"e{idx}", within, "on"),)
    return RoadNetwork(edges, ramps)
