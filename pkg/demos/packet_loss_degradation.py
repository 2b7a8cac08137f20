"""Platoon behavior as the V2V channel degrades.

One 10-vehicle platoon per packet-error rate. Followers hold CACC only
while beacons keep arriving; after 0.5 s of silence a follower falls back
to ACC and opens its gap from the 0.6 s to the 1.1 s policy. The table
shows how connectivity, spacing, and disturbance damping all degrade as
the loss rate rises.

Columns:
- CACC share: fraction of follower time spent in CACC over the run.
- mean gap: average follower gap at the end (equilibrium cruising).
- amp ratio: max follower-to-follower amplitude ratio under a ±2 m/s
  leader pulse (>1 means the string amplifies the disturbance).

Note the amp ratio is worst at intermediate loss, not at per=1: followers
that keep flipping between CACC and ACC re-target their spacing mid-pulse,
and those mode-switch transients amplify more than a steady ACC string.

Run:  python3 demos/packet_loss_degradation.py
"""

import numpy as np

from cavsim.control import Mode
from cavsim.platoon import (platoon_world, run_platoon, sine_speed_tracker,
                            speed_amplitudes)

N = 10
V_BASE = 25.0
SETTLE = 90.0
PULSE = 40.0


def run_case(per: float):
    w = platoon_world(n_vehicles=N, v_base=V_BASE, per=per,
                      duration=SETTLE + PULSE + 1.0, seed=3)
    hist = run_platoon(w, SETTLE, record=("v", "gap"))
    cacc_share = float(np.mean(hist["mode"][:, 1:] == Mode.CACC))
    mean_gap = float(np.mean(hist["gap"][-1, 1:]))

    lead = w.vehicles[0].id
    pulse = sine_speed_tracker(V_BASE, amplitude=2.0, period=10.0, cycles=1.0)
    t0 = w.t
    w.set_accel_override(lead, lambda t, s: pulse(t - t0, s))
    resp = run_platoon(w, PULSE, record=("v",))
    amp = speed_amplitudes(resp["v"], V_BASE)
    ratio = float(np.max(amp[2:] / np.maximum(amp[1:-1], 1e-12)))
    return cacc_share, mean_gap, ratio, w.collision_count


if __name__ == "__main__":
    cav = platoon_world(n_vehicles=2, v_base=V_BASE).cfg.control.cav
    print(f"{N}-vehicle platoon at {V_BASE} m/s; CACC policy gap "
          f"{cav.r_standstill + cav.h_cacc * V_BASE:.1f} m, "
          f"ACC policy gap {cav.r_standstill + cav.h_degraded * V_BASE:.1f} m\n")
    print(f"{'per':>5} {'CACC share':>11} {'mean gap (m)':>13} {'amp ratio':>10} {'collisions':>11}")
    for per in (0.0, 0.3, 0.7, 0.9, 1.0):
        share, gap, ratio, coll = run_case(per)
        print(f"{per:>5.1f} {share:>11.2f} {gap:>13.1f} {ratio:>10.3f} {coll:>11d}")
