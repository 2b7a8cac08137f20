"""Time-stepped world engine coupling traffic and beaconing.

One :class:`World` is one isolated run: a corridor, a vehicle population kept
in structure-of-arrays form (numpy), and a fixed per-step phase order:

  1. spawn arrivals          7. actuator lag -> actual acceleration
  2. emit due beacons        8. kinematics, edge crossings, metrics
  3. channel + link updates  9. lane changes
  4. predecessor resolution 10. (metrics folded into 8; movement only)
  5. mode selection         11. despawn compaction
  6. controller evaluation

Everything downstream of the seeded generator is deterministic, so two runs
with the same config and seed produce bit-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import comms, control
from .comms import BeaconMsg, LinkState
from .config import ScenarioConfig
from .control import CaccState, LeaderObservation, Mode, VehicleClass
from .metrics import MetricsAccumulator

_GROW = 256  # array capacity increment

# A ramp vehicle may enter anywhere along its acceleration lane, modeled as
# evenly spaced candidate slots downstream of the gore point.
_MERGE_SLOTS = 7
_MERGE_SLOT_SPACING = 40.0  # m

# Cooperative lane changes yield lane 0 over the approach plus the whole
# acceleration lane, mirroring how drivers clear a loaded merge.
_COOP_ZONE_BACK = 150.0   # m upstream of the gore
_COOP_ZONE_AHEAD = 250.0  # m downstream of the gore

# Below this speed a human lane changer is taken to be escaping a queue; the
# prospective follower's comfort bound is waived (forced merge) while the
# kinematic brake-to-avoid bound still applies, so the move stays safe.
# Automated vehicles never force: they keep the comfort bound at any speed.
_FORCED_LC_SPEED = 10.0  # m/s

# A queued ramp vehicle with a radio broadcasts a merge request each step it
# waits. Equipped merge-lane vehicles that receive the request open their
# headway toward _ASSIST_HEADWAY for _ASSIST_HOLD seconds so an insertion
# slot forms; a lost packet only delays the opening until the next resend.
_ASSIST_HEADWAY = 1.8  # s
_ASSIST_HOLD = 4.0  # s
_ASSIST_ZONE_BACK = 150.0  # m upstream of the gore


class SpawnQueueOverflow(RuntimeError):
    """An entry queue exceeded its limit; demand is infeasible for the network."""


@dataclass(frozen=True)
class VehicleState:
    """Snapshot view of one vehicle, for inspection and tests."""

    id: int
    vehicle_class: VehicleClass
    edge: str
    lane: int
    s: float          # m, front bumper within edge
    pos: float        # m, global frame
    v: float
    a: float
    u: float
    mode: Mode
    target_headway: float
    h_current: float
    cacc: CaccState
    link: LinkState
    v0: float
    entry_log: tuple[tuple[str, float], ...]  # (edge id, entry time) history


@dataclass
class _Entry:
    """One demand entry point with its waiting queue."""

    name: str
    kind: str                    # "head" or "ramp"
    position: float
    lanes: list[int]
    inflow: float                # veh/h
    queue: list                  # pending (is_cav, v0_factor) tuples


class TrajectoryWriter:
    """Streams per-step vehicle rows to CSV with round-trip float precision."""

    HEADER = "t,id,class,mode,edge,lane,s,v,a,gap,link_alive\n"

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(self.HEADER)

    def row(self, t, vid, klass, mode, edge, lane, s, v, a, gap, alive):
        gap_s = "" if gap is None or not math.isfinite(gap) else repr(float(gap))
        self._fh.write(
            f"{float(t)!r},{vid},{'CAV' if klass else 'HDV'},{Mode(mode).name},"
            f"{edge},{lane},{float(s)!r},{float(v)!r},{float(a)!r},{gap_s},{int(alive)}\n"
        )

    def close(self):
        self._fh.close()


class World:
    """One simulation run over a corridor (single-threaded, deterministic)."""

    def __init__(self, cfg: ScenarioConfig, trajectory_path=None):
        self.cfg = cfg
        self.net = cfg.network
        self.dt = cfg.dt
        self.rng = np.random.default_rng(cfg.seed)
        self.k = 0  # step counter; t = k * dt

        self._bounds = np.asarray(self.net.offsets)
        self._edge_len = np.array([e.length for e in self.net.edges])
        self._edge_limit = np.array([e.speed_limit for e in self.net.edges])
        self.total_length = self.net.total_length

        self.metrics = MetricsAccumulator(self.net, cfg.warmup, cfg.duration)
        self.writer = TrajectoryWriter(trajectory_path) if trajectory_path else None

        # population arrays, sized to capacity with n active rows
        self._cap = _GROW
        self.n = 0
        self._next_vid = 0
        f = lambda fill=0.0: np.full(self._cap, fill, dtype=float)
        i = lambda fill=0: np.full(self._cap, fill, dtype=np.int64)
        self.vid = i(-1)
        self.klass = i()
        self.lane = i()
        self.pos = f()
        self.v = f()
        self.a = f()
        self.u = f()
        self.v0 = f()
        self.mode = i()
        self.h_tgt = f()
        self.h_cur = f()
        self.cacc_u = f()
        self.link_pred = i(-1)
        self.link_t_rx = f(np.nan)
        self.bcn_pos = f(np.nan)
        self.bcn_speed = f(np.nan)
        self.bcn_accel = f(np.nan)
        self.bcn_lane = i(-1)
        self.last_emit = f(np.nan)
        self.next_lc_t = f(np.inf)
        self.spawn_t = f()
        self.edge_idx = i()
        self.assist_until = f()
        # per-step derived (valid after phase 4)
        self.pred_idx = i(-1)
        self.gap = f(np.inf)
        self.pred_v = f(np.nan)

        self.entry_log: dict[int, list[tuple[str, float]]] = {}
        self.accel_overrides: dict[int, object] = {}
        self._brake_now = np.zeros(0, dtype=bool)
        self.collision_events: list[tuple[float, int, int, float]] = []
        self._overlapping: set[tuple[int, int]] = set()
        self.n_spawned = 0
        self.n_despawned = 0

        self._entries = self._build_entries()
        self._ramp_positions = self.net.ramp_global_positions()

    # -- construction helpers -------------------------------------------------

    def _build_entries(self) -> list[_Entry]:
        entries = [_Entry("head", "head", 0.0, list(range(self.net.edges[0].lanes)),
                          self.cfg.demand.inflow, [])]
        for ramp_pos in self.net.ramp_global_positions():
            entries.append(_Entry(f"ramp@{ramp_pos:g}", "ramp", ramp_pos, [0],
                                  self.cfg.demand.ramp_inflow, []))
        return entries

    def _grow(self, need: int):
        while self._cap < need:
            self._cap += max(_GROW, self._cap)
        for name in ("vid", "klass", "lane", "pos", "v", "a", "u", "v0", "mode",
                     "h_tgt", "h_cur", "cacc_u", "link_pred", "link_t_rx",
                     "bcn_pos", "bcn_speed", "bcn_accel", "bcn_lane", "last_emit",
                     "next_lc_t", "spawn_t", "edge_idx", "assist_until",
                     "pred_idx", "gap", "pred_v"):
            old = getattr(self, name)
            fill = -1 if old.dtype == np.int64 and name in ("vid", "link_pred", "pred_idx", "bcn_lane") else 0
            new = np.full(self._cap, fill, dtype=old.dtype)
            if old.dtype == float and name in ("link_t_rx", "bcn_pos", "bcn_speed",
                                               "bcn_accel", "last_emit", "pred_v"):
                new.fill(np.nan)
            if name == "next_lc_t":
                new.fill(np.inf)
            if name == "gap":
                new.fill(np.inf)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    # -- public API ------------------------------------------------------------

    @property
    def t(self) -> float:
        return self.k * self.dt

    def add_vehicle(self, vehicle_class: VehicleClass, lane: int, pos: float,
                    v: float, v0: float | None = None, h_current: float | None = None) -> int:
        """Place a vehicle directly (harness/tests); returns its id."""
        cav = vehicle_class == VehicleClass.CAV
        ctl = self.cfg.control
        if v0 is None:
            v0 = self._edge_limit[self.net.edge_index_at(pos)]
        if h_current is None:
            h_current = ctl.cav.h_acc if cav else ctl.hdv.T
        return self._insert(int(cav), lane, pos, v, float(v0), float(h_current))

    def seed_platoon_links(self):
        """Pretend each follower held a fresh predecessor beacon at the current time.

        Lets harness platoons start in CACC instead of waiting one beacon period.
        """
        self._resolve_predecessors()
        has_pred = self.pred_idx[: self.n] >= 0
        src = self.pred_idx[: self.n][has_pred]
        dst = np.flatnonzero(has_pred)
        self.link_pred[dst] = self.vid[src]
        self.link_t_rx[dst] = self.t
        self.bcn_pos[dst] = self.pos[src]
        self.bcn_speed[dst] = self.v[src]
        self.bcn_accel[dst] = self.u[src]
        self.bcn_lane[dst] = self.lane[src]

    def set_accel_override(self, vid: int, fn):
        """fn(t, VehicleState) -> commanded acceleration; replaces the controller."""
        self.accel_overrides[vid] = fn

    def vehicle(self, vid: int) -> VehicleState:
        rows = np.flatnonzero(self.vid[: self.n] == vid)
        if not len(rows):
            raise KeyError(f"vehicle {vid} not active")
        return self._view(int(rows[0]))

    @property
    def vehicles(self) -> list[VehicleState]:
        return [self._view(i) for i in range(self.n)]

    def find_predecessor(self, vid: int):
        """Nearest same-lane vehicle ahead within sensing range: (pred_id, gap)."""
        rows = np.flatnonzero(self.vid[: self.n] == vid)
        if not len(rows):
            raise KeyError(f"vehicle {vid} not active")
        i = int(rows[0])
        same = (self.lane[: self.n] == self.lane[i]) & (self.pos[: self.n] > self.pos[i])
        same[i] = False
        if not same.any():
            return None
        cand = np.flatnonzero(same)
        j = cand[np.argmin(self.pos[cand])]
        gap = float(self.pos[j] - self.cfg.control.vehicle_length - self.pos[i])
        if gap > self.cfg.sim.sensing_range:
            return None
        return int(self.vid[j]), gap

    def run(self, until: float | None = None, progress=None):
        """Advance to ``until`` (default: configured duration)."""
        until = self.cfg.duration if until is None else until
        next_report = 0.0
        while self.t < until - 1e-9:
            self.step()
            if progress is not None and self.t >= next_report:
                progress(self.t, self.n)
                next_report += 60.0
        if self.writer:
            self.writer.close()
            self.writer = None

    def check_conservation(self) -> bool:
        return self.n_spawned == self.n + self.n_despawned

    @property
    def collision_count(self) -> int:
        return len(self.collision_events)

    @property
    def queued(self) -> int:
        return sum(len(e.queue) for e in self._entries)

    # -- stepping --------------------------------------------------------------

    def step(self):
        t = self.t
        self._spawn(t)
        self._comms(t)
        self._resolve_predecessors()
        self._collision_scan(t)
        self._select_modes(t)
        self._controllers(t)
        self._actuator()
        removed = self._kinematics(t)
        self._lane_changes(t)
        self._log_rows(t + self.dt)
        self._compact(removed)
        if not self.check_conservation():
            raise RuntimeError("vehicle conservation violated")
        self.k += 1

    # phase 1 ------------------------------------------------------------------

    def _spawn(self, t):
        dem = self.cfg.demand
        sim = self.cfg.sim
        for entry in self._entries:
            lam = entry.inflow / 3600.0 * self.dt
            arrivals = int(self.rng.poisson(lam)) if lam > 0 else 0
            for _ in range(arrivals):
                is_cav = bool(self.rng.random() < dem.mpr)
                entry.queue.append((is_cav, self._speed_factor(is_cav)))
            if len(entry.queue) > sim.spawn_queue_limit:
                raise SpawnQueueOverflow(
                    f"{len(entry.queue)} vehicles waiting at {entry.name}")
            self._drain_entry(entry, t)
            if entry.kind == "ramp" and entry.queue and entry.queue[0][0]:
                self._merge_request(entry, t)

    def _merge_request(self, entry: _Entry, t):
        """Headway-opening request from a blocked, equipped ramp vehicle.

        The broadcast originates at the gore; each equipped merge-lane vehicle
        near the insertion window takes an independent channel draw.
        """
        n = self.n
        if n == 0:
            return
        gore = entry.position
        zone = ((self.lane[:n] == 0) & (self.klass[:n] == 1)
                & (self.pos[:n] >= gore - _ASSIST_ZONE_BACK)
                & (self.pos[:n] <= gore + _MERGE_SLOTS * _MERGE_SLOT_SPACING))
        rx = np.flatnonzero(zone)
        if not len(rx):
            return
        ok = comms.deliver_mask(np.full(len(rx), gore), self.pos[rx],
                                self.cfg.channel, self.rng)
        self.assist_until[rx[ok]] = t + _ASSIST_HOLD

    def _speed_factor(self, is_cav: bool) -> float:
        dev = self.cfg.control.cav.speed_dev if is_cav else self.cfg.control.hdv.speed_dev
        for _ in range(64):
            factor = 1.0 + dev * self.rng.standard_normal()
            if 0.8 <= factor <= 1.2:
                return factor
        return float(np.clip(factor, 0.8, 1.2))

    def _drain_entry(self, entry: _Entry, t):
        ctl = self.cfg.control
        used_lanes: set[int] = set()
        while entry.queue:
            is_cav, factor = entry.queue[0]
            base = self.cfg.control.hdv.v0_mean
            limit = float(self._edge_limit[self.net.edge_index_at(entry.position)])
            v_des = factor * (base if (base and not is_cav) else limit)
            placed = self._try_place(entry, t, is_cav, v_des, limit,
                                     [l for l in entry.lanes if l not in used_lanes])
            if placed is None:
                break
            entry.queue.pop(0)
            used_lanes.add(placed)

    def _try_place(self, entry, t, is_cav, v_des, limit, lanes):
        """Insert at the entry if a lane has a safe slot; returns the lane used.

        The corridor head inserts at full spacing (vehicles arrive already in
        lane). A ramp merges anywhere along its acceleration lane: candidate
        slots are scanned downstream of the gore and the first feasible one is
        taken, with the merging vehicle entering at ramp speed whenever the
        new follower only has to absorb the closing speed. The resulting
        cut-ins are what make the merge act as a bottleneck.
        """
        if not lanes:
            return None
        ctl = self.cfg.control
        ramp = entry.kind == "ramp"
        if ramp:
            positions = [entry.position + j * _MERGE_SLOT_SPACING
                         for j in range(_MERGE_SLOTS)]
        else:
            positions = [entry.position]
        best = None  # (headroom, lane, position, v_spawn)
        for position in positions:
            for lane in lanes:
                slot = self._slot_ok(position, lane, is_cav, v_des, limit, ramp)
                if slot is None:
                    continue
                room, v_spawn = slot
                if best is None or room > best[0]:
                    best = (room, lane, position, v_spawn)
            if ramp and best is not None:
                break  # merge as early along the acceleration lane as possible
        if best is None:
            return None
        _, lane, position, v_spawn = best
        h0 = (ctl.cav.h_acc if is_cav else ctl.hdv.T)
        self._insert(int(is_cav), lane, position, v_spawn, v_des, h0, t)
        return lane

    def _slot_ok(self, position, lane, is_cav, v_des, limit, ramp):
        """Feasibility of one insertion slot; returns (headroom, v_spawn) or None."""
        ctl = self.cfg.control
        sim = self.cfg.sim
        L = ctl.vehicle_length
        p = ctl.cav if is_cav else ctl.hdv
        n = self.n
        # only vehicles near the slot can constrain it
        near = np.flatnonzero(np.abs(self.pos[:n] - position) <= 500.0)
        sub = near[self.lane[near] == lane]
        lead_gap, lead_v = np.inf, limit
        fol_gap, fol_row = np.inf, -1
        if len(sub):
            ahead = sub[self.pos[sub] >= position]
            behind = sub[self.pos[sub] < position]
            if len(ahead):
                j = ahead[np.argmin(self.pos[ahead])]
                lead_gap = float(self.pos[j] - L - position)
                lead_v = float(self.v[j])
            if len(behind):
                fol_row = int(behind[np.argmax(self.pos[behind])])
                fol_gap = float(position - L - self.pos[fol_row])
        v_spawn = min(limit, v_des, _safe_entry_speed(lead_gap, lead_v, p.s0))
        if ramp:
            # entry speed capped below the limit; _safe_entry_speed already
            # bounds the closing speed the merging driver accepts
            v_spawn = min(v_spawn, sim.ramp_speed_factor * limit)
            if lead_gap < p.s0 + 2.0:
                return None
        else:
            head_T = ctl.cav.h_acc if is_cav else ctl.hdv.T
            if lead_gap < p.s0 + head_T * v_spawn:
                return None
            if float(control.brake_to_avoid(v_spawn, lead_v, lead_gap, p.s0,
                                            sim.guard_leader_decel, self.dt)) >= sim.guard_trigger:
                return None
        if fol_row >= 0:
            fp = ctl.cav if self.klass[fol_row] else ctl.hdv
            if ramp:
                # merge cut-in: the follower only has to absorb the closing
                # speed against a leader that keeps rolling, not a worst-case
                # braking one; this is what lets the ramp load the mainline
                if fol_gap < fp.s0 + 2.0:
                    return None
                closing = max(float(self.v[fol_row]) - v_spawn, 0.0)
                if closing ** 2 / (2.0 * (fol_gap - fp.s0)) >= sim.guard_trigger:
                    return None
            else:
                if fol_gap < fp.s0 + self.h_cur[fol_row] * self.v[fol_row]:
                    return None
                if float(control.brake_to_avoid(self.v[fol_row], v_spawn, fol_gap, fp.s0,
                                                sim.guard_leader_decel, self.dt)) >= sim.guard_trigger:
                    return None
        return min(lead_gap, fol_gap), v_spawn

    def _insert(self, is_cav, lane, pos, v, v_des, h_current, t=None) -> int:
        t = self.t if t is None else t
        self._grow(self.n + 1)
        i = self.n
        vid = self._next_vid
        self._next_vid += 1
        self.n += 1
        self.vid[i] = vid
        self.klass[i] = is_cav
        self.lane[i] = lane
        self.pos[i] = pos
        self.v[i] = v
        self.a[i] = 0.0
        self.u[i] = 0.0
        self.v0[i] = v_des
        self.mode[i] = Mode.ACC if is_cav else Mode.IDM
        self.h_tgt[i] = h_current
        self.h_cur[i] = h_current
        self.cacc_u[i] = 0.0
        self.link_pred[i] = -1
        self.link_t_rx[i] = np.nan
        self.bcn_pos[i] = np.nan
        self.bcn_speed[i] = np.nan
        self.bcn_accel[i] = np.nan
        self.bcn_lane[i] = -1
        self.last_emit[i] = np.nan
        # stagger lane-change decisions across the population
        self.next_lc_t[i] = t + self.cfg.sim.lc_interval * (1 + vid % 10) / 10.0
        self.spawn_t[i] = t
        self.assist_until[i] = 0.0
        self.pred_idx[i] = -1
        self.gap[i] = np.inf
        self.pred_v[i] = np.nan
        e = self.net.edge_index_at(pos)
        self.edge_idx[i] = e
        self.entry_log[vid] = [(self.net.edges[e].id, t)]
        self.n_spawned += 1
        if self.writer:
            self._log_one(i, t)
        return vid

    # phases 2-3 -----------------------------------------------------------------

    def _comms(self, t):
        n = self.n
        if n == 0:
            return
        ch = self.cfg.channel
        cav = self.klass[:n] == 1
        due = cav & (np.isnan(self.last_emit[:n])
                     | (t - self.last_emit[:n] >= ch.beacon_period - comms.EMIT_TOL))
        if not due.any():
            return
        self.last_emit[:n][due] = t
        payload_accel = self.u if ch.accel_source == "commanded" else self.a
        # only the follower of each sender consumes its beacon
        rx = np.flatnonzero(cav & (self.pred_idx[:n] >= 0))
        if not len(rx):
            return
        senders = self.pred_idx[rx]
        sender_emits = due[senders] & (self.vid[senders] == self.link_pred[rx])
        rx = rx[sender_emits]
        if not len(rx):
            return
        senders = self.pred_idx[rx]
        ok = comms.deliver_mask(self.pos[senders], self.pos[rx], ch, self.rng)
        rx, senders = rx[ok], senders[ok]
        self.link_t_rx[rx] = t
        self.bcn_pos[rx] = self.pos[senders]
        self.bcn_speed[rx] = self.v[senders]
        self.bcn_accel[rx] = payload_accel[senders]
        self.bcn_lane[rx] = self.lane[senders]

    # phase 4 ----------------------------------------------------------------------

    def _resolve_predecessors(self):
        n = self.n
        if n == 0:
            return
        L = self.cfg.control.vehicle_length
        order = np.lexsort((self.pos[:n], self.lane[:n]))
        lanes_sorted = self.lane[order]
        pred = np.full(n, -1, dtype=np.int64)
        same = lanes_sorted[1:] == lanes_sorted[:-1]
        pred[order[:-1][same]] = order[1:][same]
        has = pred >= 0
        gap = np.full(n, np.inf)
        gap[has] = self.pos[pred[has]] - L - self.pos[:n][has]
        out_of_range = has & (gap > self.cfg.sim.sensing_range)
        pred[out_of_range] = -1
        gap[out_of_range] = np.inf
        self.pred_idx[:n] = pred
        self.gap[:n] = gap
        self.pred_v[:n] = np.where(pred >= 0, self.v[np.maximum(pred, 0)], np.nan)
        # reset links whose predecessor changed
        pred_vid = np.where(pred >= 0, self.vid[np.maximum(pred, 0)], -1)
        changed = self.link_pred[:n] != pred_vid
        self.link_pred[:n] = pred_vid
        idx = np.flatnonzero(changed)
        self.link_t_rx[idx] = np.nan
        self.bcn_pos[idx] = np.nan
        self.bcn_speed[idx] = np.nan
        self.bcn_accel[idx] = np.nan
        self.bcn_lane[idx] = -1

    def _collision_scan(self, t):
        n = self.n
        overlap = np.flatnonzero((self.pred_idx[:n] >= 0) & (self.gap[:n] <= 0.0))
        current: set[tuple[int, int]] = set()
        for i in overlap:
            pair = (int(self.vid[i]), int(self.vid[self.pred_idx[i]]))
            current.add(pair)
            if pair not in self._overlapping:
                self.collision_events.append((t, pair[0], pair[1], float(self.gap[i])))
        self._overlapping = current

    # phase 5 ----------------------------------------------------------------------

    def _select_modes(self, t):
        n = self.n
        if n == 0:
            return
        ctl = self.cfg.control
        cav = self.klass[:n] == 1
        has_pred = self.pred_idx[:n] >= 0
        pred_cav = np.zeros(n, dtype=bool)
        pred_cav[has_pred] = self.klass[self.pred_idx[:n][has_pred]] == 1
        alive = ~np.isnan(self.link_t_rx[:n]) & (t - self.link_t_rx[:n] <= self.cfg.channel.timeout)
        old_mode = self.mode[:n].copy()
        mode = np.where(cav, Mode.ACC, Mode.IDM).astype(np.int64)
        to_cacc = cav & has_pred & pred_cav & alive
        mode[to_cacc] = Mode.CACC
        h_tgt = np.full(n, ctl.hdv.T)
        h_tgt[cav] = ctl.cav.h_acc
        h_tgt[cav & has_pred & pred_cav & ~alive] = ctl.cav.h_degraded
        h_tgt[to_cacc] = ctl.cav.h_cacc
        # only platoon members give headway to a merge request: tight CACC
        # strings are what deny insertion slots, and a vehicle outside CACC
        # is already at sensor-only spacing
        assisting = to_cacc & (self.assist_until[:n] > t)
        if assisting.any():
            h_tgt[assisting] = np.maximum(h_tgt[assisting], _ASSIST_HEADWAY)
        self.mode[:n] = mode
        self.h_tgt[:n] = h_tgt
        # re-seed the CACC integrator from the actual acceleration on upgrade
        upgraded = to_cacc & (old_mode != Mode.CACC)
        self.cacc_u[:n][upgraded] = self.a[:n][upgraded]
        blend = control.headway_blend(self.h_cur[:n][cav], h_tgt[cav],
                                      self.cfg.sim.headway_blend_rate, self.dt)
        self.h_cur[:n][cav] = blend

    # phases 6-7 ----------------------------------------------------------------------

    def _controllers(self, t):
        n = self.n
        if n == 0:
            return
        ctl = self.cfg.control
        sim = self.cfg.sim
        u = np.zeros(n)
        mode = self.mode[:n]
        has_pred = self.pred_idx[:n] >= 0
        v = self.v[:n]
        gap = self.gap[:n]
        pv = self.pred_v[:n]

        m = (mode == Mode.IDM) & has_pred
        if m.any():
            u[m] = control.idm_accel(v[m], self.v0[:n][m],
                                     LeaderObservation(gap[m], pv[m]), ctl.hdv)
        m = (mode == Mode.IDM) & ~has_pred
        if m.any():
            u[m] = control.idm_accel(v[m], self.v0[:n][m], None, ctl.hdv)
        m = (mode == Mode.ACC) & has_pred
        if m.any():
            cmd = control.acc_accel(v[m], LeaderObservation(gap[m], pv[m]),
                                    self.h_cur[:n][m], ctl.cav)
            u[m] = np.minimum(cmd, control.cruise_accel(v[m], self.v0[:n][m], ctl.cav))
        m = (mode == Mode.ACC) & ~has_pred
        if m.any():
            u[m] = control.cruise_accel(v[m], self.v0[:n][m], ctl.cav)
        m = mode == Mode.CACC
        if m.any():
            obs = LeaderObservation(gap[m], pv[m], self.bcn_accel[:n][m])
            cmd, state = control.cacc_step(CaccState(u=self.cacc_u[:n][m]),
                                           v[m], self.a[:n][m], obs,
                                           self.h_cur[:n][m], self.dt, ctl.cav)
            self.cacc_u[:n][m] = state.u
            u[m] = np.minimum(cmd, control.cruise_accel(v[m], self.v0[:n][m], ctl.cav))

        # emergency supervisor: the linear laws do not cover approaches to
        # stopped traffic, so cap the command where a worst-case leader stop
        # would need more braking than the trigger threshold
        self._brake_now = np.zeros(n, dtype=bool)
        guard = (self.klass[:n] == 1) & has_pred
        if guard.any():
            req = control.brake_to_avoid(v[guard], pv[guard], gap[guard], ctl.cav.s0,
                                         sim.guard_leader_decel, self.dt)
            need = req >= sim.guard_trigger
            if need.any():
                brake = -np.minimum(ctl.cav.emerg_decel, sim.guard_margin * req[need])
                rows = np.flatnonzero(guard)[need]
                u[rows] = np.minimum(u[rows], brake)
                # emergency braking must not wait out the drive-train lag
                self._brake_now[rows] = True

        for vid, fn in self.accel_overrides.items():
            rows = np.flatnonzero(self.vid[:n] == vid)
            if len(rows):
                i = int(rows[0])
                p = ctl.cav if self.klass[i] else ctl.hdv
                u[i] = float(np.clip(fn(t, self._view(i)), -p.emerg_decel, p.a_max))
        self.u[:n] = u

    def _actuator(self):
        n = self.n
        if n == 0:
            return
        ctl = self.cfg.control
        cav = self.klass[:n] == 1
        a = self.a[:n]
        a_cav = control.actuator_step(a[cav], self.u[:n][cav], ctl.cav.tau, self.dt,
                                      -ctl.cav.emerg_decel, ctl.cav.a_max)
        self.a[:n][cav] = a_cav
        hdv = ~cav
        self.a[:n][hdv] = np.clip(self.u[:n][hdv], -ctl.hdv.emerg_decel, ctl.hdv.a_max)
        # supervisor-commanded braking bypasses the lag (friction brakes act
        # within a step, unlike the modeled drive-train response)
        em = self._brake_now
        if em.any():
            self.a[:n][em] = np.minimum(
                self.a[:n][em],
                np.clip(self.u[:n][em], -ctl.cav.emerg_decel, ctl.cav.a_max))

    # phase 8 ----------------------------------------------------------------------

    def _kinematics(self, t) -> np.ndarray:
        n = self.n
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        v_new, ds = kinematics_update(self.v[:n], self.a[:n], self.dt)
        pos_old = self.pos[:n].copy()
        pos_new = pos_old + ds
        self.v[:n] = v_new
        self.pos[:n] = pos_new

        new_edge = np.searchsorted(self._bounds, pos_new, side="right") - 1
        new_edge = np.minimum(new_edge, len(self.net.edges) - 1)
        exiting = pos_new >= self.total_length
        crossing = (new_edge != self.edge_idx[:n]) | exiting

        plain = ~crossing
        if plain.any():
            self.metrics.add_array(t, self.edge_idx[:n][plain],
                                   np.full(int(plain.sum()), self.dt), ds[plain])
        removed = []
        for i in np.flatnonzero(crossing):
            if self._cross_edges(i, t, pos_old[i], pos_new[i], ds[i], bool(exiting[i])):
                removed.append(i)
        keep_edges = ~exiting
        self.edge_idx[:n][keep_edges] = new_edge[keep_edges]
        return np.asarray(removed, dtype=np.int64)

    def _cross_edges(self, i, t, p0, p1, ds_total, exits) -> bool:
        """Split one vehicle's step across edge boundaries; True if it despawned."""
        eid = int(self.edge_idx[i])
        cur = p0
        end = min(p1, self.total_length)
        vid = int(self.vid[i])
        while eid < len(self.net.edges) - 1 and self._bounds[eid] + self._edge_len[eid] <= end:
            boundary = float(self._bounds[eid] + self._edge_len[eid])
            part = boundary - cur
            self.metrics.add(t, eid, self.dt * part / ds_total if ds_total > 0 else 0.0,
                             part, completed=True)
            cur = boundary
            eid += 1
            t_entry = t + self.dt * (boundary - p0) / ds_total if ds_total > 0 else t
            self.entry_log[vid].append((self.net.edges[eid].id, t_entry))
        if exits:
            part = end - cur
            frac = (end - p0) / ds_total if ds_total > 0 else 1.0
            self.metrics.add(t, eid, self.dt * frac - self.dt * (cur - p0) / ds_total
                             if ds_total > 0 else 0.0,
                             part, completed=eid == len(self.net.edges) - 1)
            self.n_despawned += 1
            if self.writer:
                t_exit = t + self.dt * frac
                edge = self.net.edges[-1]
                self.writer.row(t_exit, vid, self.klass[i], self.mode[i], edge.id,
                                int(self.lane[i]), float(self._edge_len[-1]),
                                float(self.v[i]), float(self.a[i]), None, False)
            return True
        part = end - cur
        self.metrics.add(t, eid, self.dt * part / ds_total if ds_total > 0 else self.dt,
                         part, completed=False)
        return False

    # phase 9 ----------------------------------------------------------------------

    def _lane_changes(self, t):
        n = self.n
        if n < 2:
            return
        due = np.flatnonzero(self.next_lc_t[:n] <= t + 1e-9)
        if not len(due):
            return
        self.next_lc_t[:n][due] += self.cfg.sim.lc_interval
        moves = lane_change_decide(self, due)
        if not moves:
            return
        # veto movers that would land too close to an earlier accepted mover
        ctl = self.cfg.control
        kept: list[tuple[int, int]] = []
        order = sorted(moves, key=lambda m: (-self.pos[m[0]], self.vid[m[0]]))
        for i, target in order:
            near = [j for j, tl in kept
                    if tl == target and abs(self.pos[j] - self.pos[i])
                    < ctl.vehicle_length + ctl.cav.s0 + self.h_cur[i] * max(self.v[i], self.v[j])]
            if not near:
                kept.append((i, target))
        for i, target in kept:
            self.lane[i] = target

    # logging / compaction -----------------------------------------------------------

    def _view(self, i: int) -> VehicleState:
        e = int(self.edge_idx[i])
        link = LinkState(
            pred_id=int(self.link_pred[i]) if self.link_pred[i] >= 0 else None,
            t_last_rx=None if np.isnan(self.link_t_rx[i]) else float(self.link_t_rx[i]),
            last_beacon=None if np.isnan(self.link_t_rx[i]) else BeaconMsg(
                int(self.link_pred[i]), float(self.link_t_rx[i]), float(self.bcn_pos[i]),
                int(self.bcn_lane[i]), float(self.bcn_speed[i]), float(self.bcn_accel[i])),
        )
        return VehicleState(
            id=int(self.vid[i]), vehicle_class=VehicleClass(int(self.klass[i])),
            edge=self.net.edges[e].id, lane=int(self.lane[i]),
            s=float(self.pos[i] - self._bounds[e]), pos=float(self.pos[i]),
            v=float(self.v[i]), a=float(self.a[i]), u=float(self.u[i]),
            mode=Mode(int(self.mode[i])), target_headway=float(self.h_tgt[i]),
            h_current=float(self.h_cur[i]),
            cacc=CaccState(u=float(self.cacc_u[i]), h_current=float(self.h_cur[i])),
            link=link, v0=float(self.v0[i]),
            entry_log=tuple(self.entry_log[int(self.vid[i])]),
        )

    def _log_one(self, i, t):
        e = int(self.edge_idx[i])
        alive = (not np.isnan(self.link_t_rx[i])
                 and t - self.link_t_rx[i] <= self.cfg.channel.timeout)
        gap = float(self.gap[i]) if self.pred_idx[i] >= 0 else None
        self.writer.row(t, int(self.vid[i]), int(self.klass[i]), int(self.mode[i]),
                        self.net.edges[e].id, int(self.lane[i]),
                        float(self.pos[i] - self._bounds[e]), float(self.v[i]),
                        float(self.a[i]), gap, alive)

    def _log_rows(self, t_next):
        if not self.writer:
            return
        for i in range(self.n):
            if self.pos[i] < self.total_length:
                self._log_one(i, t_next)

    def _compact(self, removed: np.ndarray):
        if not len(removed):
            return
        n = self.n
        keep = np.ones(n, dtype=bool)
        keep[removed] = False
        m = int(keep.sum())
        for name in ("vid", "klass", "lane", "pos", "v", "a", "u", "v0", "mode",
                     "h_tgt", "h_cur", "cacc_u", "link_pred", "link_t_rx",
                     "bcn_pos", "bcn_speed", "bcn_accel", "bcn_lane", "last_emit",
                     "next_lc_t", "spawn_t", "edge_idx", "assist_until"):
            arr = getattr(self, name)
            arr[:m] = arr[:n][keep]
        # remap cached predecessor row indices
        new_index = np.full(n, -1, dtype=np.int64)
        new_index[keep] = np.arange(m)
        pred = self.pred_idx[:n][keep]
        self.pred_idx[:m] = np.where(pred >= 0, new_index[np.maximum(pred, 0)], -1)
        self.gap[:m] = self.gap[:n][keep]
        self.pred_v[:m] = self.pred_v[:n][keep]
        self.n = m


# -- pure helpers --------------------------------------------------------------


def kinematics_update(v, a, dt):
    """Ballistic update with a hard stop at v=0: returns (v_new, distance).

    Uses trapezoidal (exact constant-acceleration) integration; when the
    speed would cross zero mid-step the vehicle stops there and the distance
    is the stopping distance v^2 / (2|a|), never negative.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    v_raw = v + a * dt
    stops = v_raw < 0.0
    safe_a = np.where(stops, a, -1.0)
    ds_stop = v * v / (-2.0 * safe_a)
    ds = np.where(stops, ds_stop, (v + np.maximum(v_raw, 0.0)) * 0.5 * dt)
    return np.maximum(v_raw, 0.0), ds


def lane_change_decide(world: World, due: np.ndarray) -> list[tuple[int, int]]:
    """Simplified incentive/safety lane-change decisions for the due vehicles.

    A move needs (safety) the prospective follower to keep its required
    deceleration under decel_max with gaps above the minimum, and (incentive)
    a weighted anticipated speed gain above the threshold, or a cooperative
    bonus when vacating lane 0 ahead of a queued merge. Ties keep the lane.
    Returns accepted (row, target_lane) moves.
    """
    cfg = world.cfg
    ctl = cfg.control
    sim = cfg.sim
    n = world.n
    lanes_total = cfg.network.edges[0].lanes
    L = ctl.vehicle_length

    order = np.lexsort((world.pos[:n], world.lane[:n]))
    lane_sorted = world.lane[order]
    pos_sorted = world.pos[order]
    lane_slices: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for lane in range(lanes_total):
        m = lane_sorted == lane
        lane_slices[lane] = (pos_sorted[m], order[m])

    c = len(due)
    v_e = world.v[due]
    pos_e = world.pos[due]
    lane_e = world.lane[due]
    s0_e = np.where(world.klass[due] == 1, ctl.cav.s0, ctl.hdv.s0)
    v0_e = world.v0[due]

    def neighbors(target_lanes):
        """Leader gap/speed and follower row/gap in each candidate's target lane."""
        lead_gap = np.full(c, np.inf)
        lead_v = np.zeros(c)
        fol_row = np.full(c, -1, dtype=np.int64)
        fol_gap = np.full(c, np.inf)
        for lane in range(lanes_total):
            m = np.flatnonzero(target_lanes == lane)
            if not len(m):
                continue
            pos_t, rows_t = lane_slices[lane]
            r = np.searchsorted(pos_t, pos_e[m], side="right")
            has = r < len(pos_t)
            if has.any():
                mm, rr = m[has], r[has]
                g = pos_t[rr] - L - pos_e[mm]
                ok = g <= sim.sensing_range
                lead_gap[mm[ok]] = g[ok]
                lead_v[mm[ok]] = world.v[rows_t[rr[ok]]]
            has = r > 0
            if has.any():
                mm, rr = m[has], r[has] - 1
                fol_row[mm] = rows_t[rr]
                fol_gap[mm] = pos_e[mm] - L - pos_t[rr]
        return lead_gap, lead_v, fol_row, fol_gap

    def anticipated(gaps, lead_vs):
        est = np.where(np.isfinite(gaps),
                       np.maximum(lead_vs, 0.0) + np.maximum(gaps - s0_e, 0.0) / 8.0,
                       v0_e)
        return np.minimum(v0_e, np.maximum(est, 0.0))

    # own-lane leader: the insertion point just past a vehicle's own position
    # is strictly ahead of it, so the same lookup works with self in the lane
    cur_gap, cur_v, _, _ = neighbors(lane_e)
    v_cur = anticipated(cur_gap, cur_v)

    ramp_wait = any(len(e.queue) > 0 for e in world._entries if e.name.startswith("ramp"))
    ramp_pos = world._ramp_positions[0] if world._ramp_positions else None

    # no target lane can beat the desired speed, so candidates whose best
    # possible gain cannot clear the threshold are dropped up front
    potential = sim.lc_strategic * (v0_e - v_cur)
    if ramp_wait and ramp_pos is not None:
        in_zone = ((lane_e == 0) & (pos_e >= ramp_pos - _COOP_ZONE_BACK)
                   & (pos_e <= ramp_pos + _COOP_ZONE_AHEAD))
        potential = np.where(in_zone, potential + sim.lc_cooperative * 2.0, potential)
    keep = potential > sim.lc_gain_threshold
    if not keep.any():
        return []
    due = due[keep]
    c = len(due)
    v_e, pos_e, lane_e = v_e[keep], pos_e[keep], lane_e[keep]
    s0_e, v0_e, v_cur = s0_e[keep], v0_e[keep], v_cur[keep]

    best_gain = np.full(c, -np.inf)
    best_lane = np.full(c, -1, dtype=np.int64)
    for direction in (+1, -1):
        targets = lane_e + direction
        valid = (targets >= 0) & (targets < lanes_total)
        lead_gap, lead_v, fol_row, fol_gap = neighbors(np.where(valid, targets, -1))

        finite_lead = np.isfinite(lead_gap)
        ego_brake = control.brake_to_avoid(v_e, lead_v, np.where(finite_lead, lead_gap, 1e9),
                                           s0_e, sim.guard_leader_decel, world.dt)
        safe = valid & (~finite_lead | ((lead_gap > s0_e) & (ego_brake < sim.guard_trigger)))

        has_fol = fol_row >= 0
        if has_fol.any():
            f = np.flatnonzero(has_fol)
            fr = fol_row[f]
            fol_cav = world.klass[fr] == 1
            s0_f = np.where(fol_cav, ctl.cav.s0, ctl.hdv.s0)
            decel_f = np.where(fol_cav, ctl.cav.decel_max, ctl.hdv.decel_max)
            cmd = np.empty(len(f))
            if fol_cav.any():
                k = fol_cav
                cmd[k] = control.acc_accel(world.v[fr[k]],
                                           LeaderObservation(fol_gap[f][k], v_e[f][k]),
                                           world.h_cur[fr[k]], ctl.cav)
            if (~fol_cav).any():
                k = ~fol_cav
                cmd[k] = control.idm_accel(world.v[fr[k]], world.v0[fr[k]],
                                           LeaderObservation(fol_gap[f][k], v_e[f][k]),
                                           ctl.hdv)
            fol_brake = control.brake_to_avoid(world.v[fr], v_e[f], fol_gap[f], s0_f,
                                               sim.guard_leader_decel, world.dt)
            forced = (v_e[f] < _FORCED_LC_SPEED) & (world.klass[due[f]] == 0)
            fol_ok = ((fol_gap[f] > s0_f) & ((cmd >= -decel_f) | forced)
                      & (fol_brake < sim.guard_trigger))
            bad = np.zeros(c, dtype=bool)
            bad[f[~fol_ok]] = True
            safe &= ~bad

        gains = sim.lc_strategic * (anticipated(lead_gap, lead_v) - v_cur)
        if ramp_wait and ramp_pos is not None and direction == +1:
            coop = ((lane_e == 0) & (pos_e >= ramp_pos - _COOP_ZONE_BACK)
                    & (pos_e <= ramp_pos + _COOP_ZONE_AHEAD))
            gains = np.where(coop, gains + sim.lc_cooperative * 2.0, gains)
        gains = np.where(safe, gains, -np.inf)
        better = gains > best_gain
        best_gain[better] = gains[better]
        best_lane[better] = targets[better]

    accept = best_gain > sim.lc_gain_threshold
    return [(int(due[k]), int(best_lane[k])) for k in np.flatnonzero(accept)]


def _safe_entry_speed(gap, lead_v, s0, b=3.0):
    """Spawn speed that can stop behind a stopping leader at mild braking."""
    if not np.isfinite(gap):
        return np.inf
    return math.sqrt(max(0.0, lead_v * lead_v + 2.0 * b * (gap - s0)))
