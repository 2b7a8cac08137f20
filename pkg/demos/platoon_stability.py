"""String stability of a 10-vehicle platoon under a leader speed pulse.

The leader tracks one ±2 m/s sine cycle; each follower's peak speed
deviation is recorded. A string-stable stack keeps the amplitude
non-increasing down the platoon. Three configurations are compared:

- CACC (per=0): beacon feedforward, 0.6 s headway; amplitudes shrink fast.
- ACC (per=1, default gains): no connectivity, 1.1 s headway, still damped.
- ACC with a deliberately weak closing-speed gain: amplitudes GROW down
  the string, the classic string-instability failure that motivates
  feedforward in the first place.

Run:  python3 demos/platoon_stability.py
"""

from dataclasses import replace

import numpy as np

from cavsim.platoon import (platoon_world, run_platoon, sine_speed_tracker,
                            speed_amplitudes)

N = 10
V_BASE = 25.0
SETTLE = 60.0   # s: let degraded platoons reach their new equilibrium first
PULSE = 30.0    # s: one 10 s sine cycle plus decay time


def measure(world, label):
    lead = world.vehicles[0].id
    world.run(until=SETTLE)
    pulse = sine_speed_tracker(V_BASE, amplitude=2.0, period=10.0, cycles=1.0)
    t0 = world.t
    world.set_accel_override(lead, lambda t, s: pulse(t - t0, s))
    hist = run_platoon(world, PULSE, record=("v",))
    amp = speed_amplitudes(hist["v"], V_BASE)
    ratios = amp[2:] / amp[1:-1]
    # 1.02 absorbs discretization, as in the stability acceptance bound
    verdict = ("string stable" if ratios.max() <= 1.02
               else "amplifying: string UNSTABLE")
    print(f"{label}")
    print("   amplitude (m/s): " + " ".join(f"{a:5.2f}" for a in amp))
    print(f"   follower-to-follower ratios: max {ratios.max():.3f} ({verdict})")
    print()
    return amp


def weak_gain_world():
    w = platoon_world(n_vehicles=N, v_base=V_BASE, per=1.0, duration=SETTLE + PULSE + 1)
    cav = replace(w.cfg.control.cav, k2_acc=0.07)
    w.cfg = replace(w.cfg, control=replace(w.cfg.control, cav=cav))
    return w


if __name__ == "__main__":
    print(f"{N}-vehicle platoon, leader pulse +-2 m/s around {V_BASE} m/s\n")
    measure(platoon_world(n_vehicles=N, v_base=V_BASE, per=0.0,
                          duration=SETTLE + PULSE + 1), "CACC, live links (per=0)")
    measure(platoon_world(n_vehicles=N, v_base=V_BASE, per=1.0,
                          duration=SETTLE + PULSE + 1), "ACC fallback (per=1), default gains")
    measure(weak_gain_world(), "ACC fallback, weak closing-speed gain k2=0.07")
