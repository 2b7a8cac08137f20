"""Longitudinal control laws for mixed CAV/HDV traffic.

Three car-following laws drive the vehicles:

* IDM for human-driven vehicles,
* a linear gap-regulation ACC law for connected vehicles on sensor data only,
* a constant-time-headway CACC law that filters the desired acceleration and
  adds the predecessor's commanded acceleration as feedforward (received over
  V2V beacons).

All laws are written with numpy operations so they accept either scalars or
aligned arrays; the engine calls them on whole vehicle populations at once.
Accelerations are in m/s^2, speeds in m/s, gaps in m (leader rear bumper to
ego front bumper), headways in s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np


class VehicleClass(IntEnum):
    HDV = 0
    CAV = 1


class Mode(IntEnum):
    IDM = 0
    ACC = 1
    CACC = 2


@dataclass(frozen=True)
class HdvParams:
    """IDM parameters for human-driven vehicles.

    v0_mean of None means the desired-speed base is the local speed limit;
    actual desired speeds are sampled per vehicle around that base.
    """

    v0_mean: float | None = None  # m/s, desired-speed base override
    speed_dev: float = 0.1        # fractional std dev of desired speed
    T: float = 1.5                # s, time headway
    s0: float = 2.5               # m, minimum gap
    a_max: float = 1.5            # m/s^2
    b_comf: float = 1.5           # m/s^2, comfortable deceleration
    decel_max: float = 7.5        # m/s^2, hard (non-emergency) braking bound
    emerg_decel: float = 9.0      # m/s^2
    delta: float = 4.0            # acceleration exponent

    def __post_init__(self):
        if not (self.T > 0 and self.s0 > 0 and self.a_max > 0 and self.b_comf > 0):
            raise ValueError("HDV headway, minimum gap and accelerations must be positive")
        if self.emerg_decel < self.decel_max:
            raise ValueError("emergency deceleration must be at least decel_max")
        if self.speed_dev < 0:
            raise ValueError("speed_dev must be nonnegative")


@dataclass(frozen=True)
class CavParams:
    """Controller and actuator parameters for connected vehicles."""

    h_cacc: float = 0.6           # s, headway behind a live-link CAV
    h_acc: float = 1.1            # s, headway behind an HDV
    h_degraded: float = 1.1       # s, headway behind a CAV with a dead link
    s0: float = 1.5               # m, minimum gap / ACC standstill spacing
    a_max: float = 2.9            # m/s^2
    decel_max: float = 7.5        # m/s^2
    emerg_decel: float = 9.0      # m/s^2
    k1_acc: float = 0.23          # 1/s^2, ACC spacing-error gain
    k2_acc: float = 0.35          # 1/s,   ACC speed-error gain
    kp: float = 0.2               # 1/s^2, CACC distance gain
    kd: float = 0.7               # 1/s,   CACC speed gain
    tau: float = 0.5              # s, actuator lag
    r_standstill: float = 1.5     # m, CACC standstill spacing
    k_cruise: float = 0.4         # 1/s, free-road speed-tracking gain
    speed_dev: float = 0.05       # fractional std dev of desired speed

    def __post_init__(self):
        positive = (self.h_cacc, self.h_acc, self.h_degraded, self.s0, self.a_max,
                    self.k1_acc, self.k2_acc, self.kp, self.kd, self.tau,
                    self.r_standstill, self.k_cruise)
        if not all(p > 0 for p in positive):
            raise ValueError("CAV gains, headways and lags must be strictly positive")
        if self.emerg_decel < self.decel_max:
            raise ValueError("emergency deceleration must be at least decel_max")


@dataclass(frozen=True)
class ControlConfig:
    hdv: HdvParams = field(default_factory=HdvParams)
    cav: CavParams = field(default_factory=CavParams)
    vehicle_length: float = 5.0   # m

    def __post_init__(self):
        if self.vehicle_length <= 0:
            raise ValueError("vehicle_length must be positive")


@dataclass(frozen=True)
class LeaderObservation:
    """What the ego vehicle knows about its predecessor.

    gap and leader_speed come from on-board sensing; accel_ff is the
    predecessor's commanded acceleration taken from the last fresh beacon and
    is only present in CACC mode. Fields may be floats or aligned arrays.
    """

    gap: object
    leader_speed: object
    accel_ff: object | None = None


@dataclass(frozen=True)
class ControlMode:
    mode: Mode
    target_headway: float


@dataclass(frozen=True)
class CaccState:
    """Internal CACC controller state.

    u is the filtered desired acceleration (the controller integrator);
    h_current is the smoothed active headway, which tracks the mode target.
    """

    u: float = 0.0
    h_current: float = 0.6


def _reject_nan(*values):
    for val in values:
        if val is None:
            continue
        if np.any(np.isnan(val)):
            raise ValueError("NaN input to controller")


def idm_accel(v, v0, obs: LeaderObservation | None, p: HdvParams):
    """IDM acceleration for a human driver.

    a = a_max * (1 - (v/v0)^delta - (s*/gap)^2) with the desired gap
    s* = s0 + max(0, v*T + v*dv / (2*sqrt(a_max*b_comf))).  ``obs=None``
    is the free-road case (no interaction term).  A nonpositive gap commands
    an emergency stop; the caller is responsible for recording the collision
    event.  Output is clamped to [-emerg_decel, a_max].
    """
    _reject_nan(v, v0, None if obs is None else obs.gap,
                None if obs is None else obs.leader_speed)
    free = 1.0 - (np.asarray(v) / v0) ** p.delta
    if obs is None:
        accel = p.a_max * free
    else:
        dv = v - np.asarray(obs.leader_speed)
        s_star = p.s0 + np.maximum(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        gap = np.asarray(obs.gap)
        safe_gap = np.where(gap > 0, gap, 1.0)  # placeholder, masked below
        accel = p.a_max * (free - (s_star / safe_gap) ** 2)
        accel = np.where(gap > 0, accel, -p.emerg_decel)
    return np.clip(accel, -p.emerg_decel, p.a_max)


def acc_accel(v, obs: LeaderObservation, h, p: CavParams):
    """Linear ACC law: a = k1*e + k2*de with e = gap - s0 - h*v.

    Requires a leader; free-road connected vehicles use :func:`cruise_accel`
    instead. Output is clamped to [-emerg_decel, a_max].
    """
    _reject_nan(v, obs.gap, obs.leader_speed)
    gap = np.asarray(obs.gap)
    e = gap - p.s0 - np.asarray(h) * v
    e_dot = np.asarray(obs.leader_speed) - v
    accel = p.k1_acc * e + p.k2_acc * e_dot
    accel = np.where(gap > 0, accel, -p.emerg_decel)
    return np.clip(accel, -p.emerg_decel, p.a_max)


def cruise_accel(v, v0, p: CavParams):
    """Free-road speed tracking for a connected vehicle without a leader."""
    return np.clip(p.k_cruise * (np.asarray(v0) - v), -p.emerg_decel, p.a_max)


def cacc_step(state: CaccState, v, a_actual, obs: LeaderObservation, h, dt, p: CavParams):
    """One explicit-Euler step of the constant-time-headway CACC law.

    The filtered desired acceleration u evolves as

        h * du/dt = -u + kp*e + kd*de + u_ff

    with spacing error e = gap - (r + h*v) and its derivative
    de = leader_speed - v - h*a_actual; u_ff is the predecessor's commanded
    acceleration from the latest beacon. Returns the clamped command and the
    updated state. The feedforward must be present; the mode manager degrades
    to ACC before it can go stale.
    """
    if obs.accel_ff is None:
        raise ValueError("CACC requires beacon feedforward; mode manager must degrade first")
    _reject_nan(v, a_actual, obs.gap, obs.leader_speed, obs.accel_ff)
    gap = np.asarray(obs.gap)
    h = np.asarray(h)
    e = gap - (p.r_standstill + h * v)
    e_dot = np.asarray(obs.leader_speed) - v - h * np.asarray(a_actual)
    u_dot = (-state.u + p.kp * e + p.kd * e_dot + np.asarray(obs.accel_ff)) / h
    u_new = np.clip(state.u + dt * u_dot, -p.emerg_decel, p.a_max)
    u_new = np.where(gap > 0, u_new, -p.emerg_decel)
    command = u_new
    if np.ndim(u_new) == 0:
        new_state = replace(state, u=float(u_new))
    else:
        new_state = replace(state, u=u_new)
    return command, new_state


def actuator_step(a, u_cmd, tau, dt, a_min=-9.0, a_max=2.9):
    """First-order actuator lag: da/dt = (u_cmd - a)/tau, explicit Euler.

    Models engine/brake response delay between the commanded and realized
    acceleration. The result is clamped to [a_min, a_max].
    """
    if not (tau > 0 and dt > 0):
        raise ValueError("tau and dt must be positive")
    return np.clip(a + dt * (np.asarray(u_cmd) - a) / tau, a_min, a_max)


def select_mode(ego_class: VehicleClass,
                pred_class: VehicleClass | None,
                link_alive: bool,
                cfg: ControlConfig | None = None) -> ControlMode:
    """Map vehicle class, predecessor class and link liveness to a control mode.

    HDVs always drive IDM at the human headway. A connected vehicle runs CACC
    at the short headway only behind another connected vehicle with a live
    beacon link; behind an HDV, behind a dead link, or with no predecessor in
    sensing range it falls back to ACC (the no-predecessor case cruises
    free-road under the ACC mode).
    """
    cfg = cfg if cfg is not None else _DEFAULT_CONFIG
    if ego_class == VehicleClass.HDV:
        return ControlMode(Mode.IDM, cfg.hdv.T)
    if pred_class == VehicleClass.CAV:
        if link_alive:
            return ControlMode(Mode.CACC, cfg.cav.h_cacc)
        return ControlMode(Mode.ACC, cfg.cav.h_degraded)
    return ControlMode(Mode.ACC, cfg.cav.h_acc)


def headway_blend(h_current, h_target, rate, dt):
    """Relax the active headway toward the mode target.

    Moves by rate*dt times the remaining difference per step (capped so the
    target is never overshot) and snaps exactly onto the target once within
    1e-6 s, so mode switches do not produce command discontinuities.
    """
    frac = min(rate * dt, 1.0)
    h_new = h_current + frac * (np.asarray(h_target) - h_current)
    return np.where(np.abs(h_new - h_target) <= 1e-6, h_target, h_new)


def brake_to_avoid(v, leader_speed, gap, s0, leader_decel=7.5, reaction=0.1):
    """Deceleration needed to stop behind a worst-case braking leader.

    Assumes the leader brakes to a stop at ``leader_decel`` while the ego
    travels ``reaction * v`` before braking takes hold, and asks for the
    constant deceleration that stops the ego ``s0`` short of the leader's
    rest position. Returns 0 where no braking is needed and +inf where no
    finite deceleration avoids contact. Used by the engine as an emergency
    supervisor on top of the nominal laws: the linear ACC/CACC laws alone do
    not handle approaches to stopped traffic.
    """
    v = np.asarray(v, dtype=float)
    leader_speed = np.asarray(leader_speed, dtype=float)
    gap = np.asarray(gap, dtype=float)
    available = gap - s0 - reaction * v + leader_speed ** 2 / (2.0 * leader_decel)
    with np.errstate(divide="ignore", invalid="ignore"):
        req = np.where(available > 0, v ** 2 / (2.0 * np.maximum(available, 1e-9)), np.inf)
    return np.where(v > 0, req, 0.0)


_DEFAULT_CONFIG = ControlConfig()
