"""Single-lane platoon harness for controller-level experiments.

Builds a minimal world with a pre-placed CACC platoon at its equilibrium
spacing (gap = r + h*v), beacon links already warm, and an optional
speed-tracking override on the leader. Used by the string-stability and
degradation studies and their tests; corridor traffic uses the regular
scenario path instead.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .comms import ChannelConfig
from .config import ScenarioConfig, SimParams
from .control import VehicleClass
from .engine import World
from .network import DemandSpec, Edge, RoadNetwork


def platoon_world(n_vehicles: int = 10, v_base: float = 25.0, per: float = 0.0,
                  headway: float = 0.6, seed: int = 1, dt: float = 0.1,
                  length_m: float = 8000.0, duration: float = 120.0) -> World:
    """A warm n-vehicle CACC platoon on one lane, leader in front.

    Vehicle 0 is the leader (free-road cruise holding v_base unless an
    acceleration override is installed); ids increase rearward. Followers
    start in CACC at the equilibrium gap r + headway*v_base with live links,
    so an experiment begins at steady state rather than after a transient.
    """
    if n_vehicles < 2:
        raise ValueError("a platoon needs at least two vehicles")
    net = RoadNetwork((Edge("lane", length_m, 1, v_base + 15.0),))
    cfg = ScenarioConfig(
        network=net,
        demand=DemandSpec(),
        channel=ChannelConfig(per=per, beacon_period=dt),
        sim=replace(SimParams(), lc_interval=1e9),
        dt=dt,
        duration=duration,
        warmup=0.0,
        seed=seed,
    )
    world = World(cfg)
    p = cfg.control.cav
    spacing = cfg.control.vehicle_length + p.r_standstill + headway * v_base
    # rear of platoon sits at 100 m; leave road ahead for the whole run
    lead_pos = 100.0 + (n_vehicles - 1) * spacing
    for i in range(n_vehicles):
        pos = lead_pos - i * spacing
        # leader keeps v_base as its desired speed; followers get slack so
        # the cruise cap cannot clip their tracking commands
        v0 = v_base if i == 0 else v_base + 10.0
        world.add_vehicle(VehicleClass.CAV, 0, pos, v_base, v0=v0, h_current=headway)
    world.seed_platoon_links()
    return world


def sine_speed_tracker(v_base: float, amplitude: float = 2.0, period: float = 10.0,
                       cycles: float = 1.0, gain: float = 1.5):
    """Leader override: track v_ref(t) = v_base + A*sin(2*pi*t/period).

    Proportional speed tracking with the feedforward reference slope, so the
    realized speed follows the pulse closely despite the actuator lag. After
    ``cycles`` full periods the reference returns to v_base and stays there.
    """

    def fn(t, state):
        if t < cycles * period:
            phase = 2.0 * math.pi * t / period
            v_ref = v_base + amplitude * math.sin(phase)
            dv_ref = amplitude * (2.0 * math.pi / period) * math.cos(phase)
        else:
            v_ref, dv_ref = v_base, 0.0
        return gain * (v_ref - state.v) + dv_ref

    return fn


def speed_amplitudes(history: np.ndarray, v_base: float) -> np.ndarray:
    """Peak speed deviation from v_base per vehicle; history is (steps, n)."""
    return np.max(np.abs(np.asarray(history) - v_base), axis=0)


def run_platoon(world: World, duration: float, record=("v",)):
    """Step the platoon, recording the requested arrays; returns dict of (steps+1, n)."""
    names = {v.id: i for i, v in enumerate(world.vehicles)}
    n = len(names)
    steps = int(round(duration / world.dt))
    out = {key: np.empty((steps + 1, n)) for key in record}
    modes = np.empty((steps + 1, n), dtype=np.int64)

    def snapshot(row):
        for key in record:
            arr = getattr(world, key)
            for vid, col in names.items():
                idx = int(np.flatnonzero(world.vid[: world.n] == vid)[0])
                out[key][row, col] = arr[idx]
                modes[row, col] = world.mode[idx]

    snapshot(0)
    for k in range(steps):
        world.step()
        snapshot(k + 1)
    out["mode"] = modes
    return out
