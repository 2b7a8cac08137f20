"""V2V beaconing: periodic broadcast, lossy channel, link liveness.

Connected vehicles broadcast a small state beacon at a fixed cadence. The
channel abstracts the radio stack to a range cutoff plus an independent
Bernoulli drop per (message, receiver) pair. Each vehicle tracks the
freshness of its predecessor link; a stale link degrades CACC to ACC.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

EMIT_TOL = 1e-9  # absorbs float accumulation in the 10 Hz schedule


@dataclass(frozen=True)
class BeaconMsg:
    """Broadcast payload: sender state at emission time (~200 bytes on air)."""

    sender_id: int
    t_sent: float    # s
    position: float  # m, longitudinal network frame
    lane: int
    speed: float     # m/s
    accel: float     # m/s^2, commanded by default (see ChannelConfig)

    def __post_init__(self):
        if self.t_sent < 0:
            raise ValueError("t_sent must be nonnegative")
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")


@dataclass(frozen=True)
class ChannelConfig:
    per: float = 0.0               # packet error rate in [0, 1]
    range_m: float = 500.0         # m, reception cutoff
    beacon_period: float = 0.1     # s (10 Hz)
    timeout: float = 0.5           # s, link considered dead beyond this
    accel_source: str = "commanded"  # "commanded" or "actual" beacon accel field

    def __post_init__(self):
        if not 0.0 <= self.per <= 1.0:
            raise ValueError("per must be in [0, 1]")
        if self.range_m <= 0 or self.beacon_period <= 0 or self.timeout <= 0:
            raise ValueError("range_m, beacon_period and timeout must be positive")
        if self.accel_source not in ("commanded", "actual"):
            raise ValueError("accel_source must be 'commanded' or 'actual'")


@dataclass(frozen=True)
class LinkState:
    """Freshness record for the predecessor beacon link.

    Reset (fresh instance) whenever the predecessor changes. t_last_rx and
    last_beacon are both absent until the first reception.
    """

    pred_id: int | None = None
    t_last_rx: float | None = None
    last_beacon: BeaconMsg | None = None

    def __post_init__(self):
        if (self.t_last_rx is None) != (self.last_beacon is None):
            raise ValueError("t_last_rx and last_beacon must be present together")


def beacon_due(t: float, last_emit: float | None, period: float) -> bool:
    """True when the next periodic beacon should go out at time t."""
    if last_emit is None:
        return True
    return t - last_emit >= period - EMIT_TOL


def channel_deliver(msg: BeaconMsg, rx_position: float, cfg: ChannelConfig, rng) -> bool:
    """Decide reception of one beacon at one receiver.

    Deterministically false beyond the range cutoff; otherwise one Bernoulli
    draw succeeds with probability 1 - per. The caller owns the seeded rng, so
    a fixed seed reproduces the exact delivery sequence.
    """
    if abs(rx_position - msg.position) > cfg.range_m:
        return False
    return rng.random() >= cfg.per


def link_on_rx(link: LinkState, msg: BeaconMsg, t: float) -> LinkState:
    """Record a received predecessor beacon; beacons from others are ignored."""
    if link.pred_id is None or msg.sender_id != link.pred_id:
        return link
    return replace(link, t_last_rx=t, last_beacon=msg)


def link_alive(link: LinkState, t: float, timeout: float) -> bool:
    """True while the last predecessor beacon is younger than the timeout."""
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    return link.t_last_rx is not None and t - link.t_last_rx <= timeout


def deliver_mask(tx_positions, rx_positions, cfg: ChannelConfig, rng) -> np.ndarray:
    """Vectorized channel decisions for aligned transmitter/receiver arrays.

    Semantics match :func:`channel_deliver` applied pairwise: out-of-range
    pairs are false without consuming randomness; in-range pairs each take one
    independent draw, in array order.
    """
    tx_positions = np.asarray(tx_positions, dtype=float)
    rx_positions = np.asarray(rx_positions, dtype=float)
    in_range = np.abs(rx_positions - tx_positions) <= cfg.range_m
    delivered = np.zeros(tx_positions.shape, dtype=bool)
    n_in = int(np.count_nonzero(in_range))
    if n_in:
        delivered[in_range] = rng.random(n_in) >= cfg.per
    return delivered
