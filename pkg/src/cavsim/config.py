"""Scenario and batch configuration with JSON round-trip.

A scenario fully determines one run: network, demand, controller and channel
parameters, timing, seed and output options. Serialization uses plain JSON so
configs are human-readable and round-trip bit-exactly (Python float repr is
shortest-round-trip). Batch specs expand a scenario over an MPR x PER grid
with deterministically derived per-run seeds.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .comms import ChannelConfig
from .control import CavParams, ControlConfig, HdvParams
from .network import DemandSpec, Edge, Ramp, RoadNetwork, default_corridor


class ConfigError(ValueError):
    """Invalid scenario or batch configuration; message names the violated rule."""


@dataclass(frozen=True)
class SimParams:
    """Engine tuning knobs that are not controller or channel physics."""

    sensing_range: float = 300.0       # m, radar stand-in for predecessor detection
    headway_blend_rate: float = 0.5    # 1/s, mode-transition headway relaxation
    lc_strategic: float = 0.5          # lane-change incentive weight
    lc_cooperative: float = 0.5        # merge-yielding weight
    lc_interval: float = 1.0           # s, per-vehicle decision interval
    lc_gain_threshold: float = 1.0     # m/s, anticipated speed gain to move
    ramp_speed_factor: float = 0.7     # merge entry speed as a fraction of the limit
    guard_trigger: float = 6.8         # m/s^2, emergency supervisor threshold
    guard_leader_decel: float = 7.5    # m/s^2, assumed worst-case leader braking
    guard_margin: float = 1.2          # supervisor command overshoot factor
    spawn_queue_limit: int = 1000

    def __post_init__(self):
        if self.sensing_range <= 0 or self.lc_interval <= 0:
            raise ConfigError("sensing_range and lc_interval must be positive")
        if self.spawn_queue_limit < 1:
            raise ConfigError("spawn_queue_limit must be at least 1")
        if not 0.0 < self.ramp_speed_factor <= 1.0:
            raise ConfigError("ramp_speed_factor must be in (0, 1]")


@dataclass(frozen=True)
class OutputOptions:
    trajectories: bool = False
    out_dir: str = "out"


@dataclass(frozen=True)
class ScenarioConfig:
    network: RoadNetwork = field(default_factory=default_corridor)
    demand: DemandSpec = field(default_factory=DemandSpec)
    control: ControlConfig = field(default_factory=ControlConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sim: SimParams = field(default_factory=SimParams)
    dt: float = 0.1          # s, also the beacon handling granularity
    duration: float = 1800.0  # s, total simulated time incl. warmup
    warmup: float = 300.0     # s, excluded from metrics
    seed: int = 1
    output: OutputOptions = field(default_factory=OutputOptions)

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.warmup < 0:
            raise ConfigError("warmup must be nonnegative")
        if self.duration <= self.warmup:
            raise ConfigError("duration must exceed warmup")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


def default_scenario(mpr: float = 0.0, per: float | None = None,
                     seed: int = 1) -> ScenarioConfig:
    """Study scenario: the default corridor loaded just past human capacity.

    Demand is calibrated so an all-human fleet runs visibly congested at the
    on-ramp merge (network RCI near 1.1) without overflowing the spawn
    queues, leaving room for fleet and channel effects in both directions.
    ``per=None`` (the baseline grid cell) keeps the loss-free channel.
    """
    return ScenarioConfig(
        demand=DemandSpec(inflow=7000.0, ramp_inflow=1600.0, mpr=mpr),
        channel=ChannelConfig(per=0.0 if per is None else per),
        seed=seed,
    )


# Seven-cell scenario grid: baseline plus {20, 40, 70}% MPR x {0, 70}% PER.
DEFAULT_GRID: tuple[tuple[float, float | None], ...] = (
    (0.0, None),
    (0.2, 0.0), (0.2, 0.7),
    (0.4, 0.0), (0.4, 0.7),
    (0.7, 0.0), (0.7, 0.7),
)


@dataclass(frozen=True)
class BatchSpec:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid: tuple[tuple[float, float | None], ...] = DEFAULT_GRID
    replications: int = 3
    parallelism: int = 1

    def __post_init__(self):
        if not self.grid:
            raise ConfigError("grid must be non-empty")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")

    def cells(self):
        """(mpr, per, replication, seed) for every run, in deterministic order."""
        for mpr, per in self.grid:
            for rep in range(self.replications):
                yield mpr, per, rep, derive_seed(self.base.seed, mpr, per, rep)


def derive_seed(base_seed: int, mpr: float, per: float | None, replication: int) -> int:
    """Stable per-run seed from the batch seed and the cell coordinates."""
    key = f"{base_seed}|{mpr!r}|{per!r}|{replication}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


# -- serialization -----------------------------------------------------------

def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["network"] = {
        "edges": [dataclasses.asdict(e) for e in cfg.network.edges],
        "ramps": [dataclasses.asdict(r) for r in cfg.network.ramps],
    }
    return d


def scenario_from_dict(d: dict) -> ScenarioConfig:
    try:
        net = d["network"]
        network = RoadNetwork(
            tuple(Edge(**e) for e in net["edges"]),
            tuple(Ramp(**r) for r in net.get("ramps", [])),
        )
        control = ControlConfig(
            hdv=HdvParams(**d["control"]["hdv"]),
            cav=CavParams(**d["control"]["cav"]),
            vehicle_length=d["control"]["vehicle_length"],
        )
        return ScenarioConfig(
            network=network,
            demand=DemandSpec(**d["demand"]),
            control=control,
            channel=ChannelConfig(**d["channel"]),
            sim=SimParams(**d.get("sim", {})),
            dt=d["dt"],
            duration=d["duration"],
            warmup=d["warmup"],
            seed=d["seed"],
            output=OutputOptions(**d.get("output", {})),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario config: {exc}") from exc


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw)
