"""Car-following behavior of the three longitudinal controllers.

Three short single-lane experiments, printed as tables:

1. IDM equilibrium: a human driver settles behind a constant-speed leader;
   the settled gap matches the desired-gap closed form at zero closing speed.
2. Approach and stop: an IDM vehicle closes on a stopped leader from far
   away and comes to rest near the standstill gap, without overshoot.
3. Spacing policies: CAV followers regulate toward r + h*v, with the
   headway set by the active mode (CACC 0.6 s vs ACC 1.1 s).

Run:  python3 demos/car_following.py
"""

from cavsim import (ChannelConfig, DemandSpec, Edge, RoadNetwork,
                    ScenarioConfig, VehicleClass, World)


def make_lane(per: float = 1.0, limit: float = 33.0, length: float = 5000.0,
              seed: int = 7) -> World:
    net = RoadNetwork((Edge("lane", length, 1, limit),))
    cfg = ScenarioConfig(
        network=net, demand=DemandSpec(), channel=ChannelConfig(per=per),
        duration=600.0, warmup=0.0, seed=seed,
    )
    return World(cfg)


def hold_speed(v_ref: float, gain: float = 1.5):
    def fn(t, state):
        return gain * (v_ref - state.v)
    return fn


def gap_between(world: World, lead_id: int, ego_id: int) -> float:
    return (world.vehicle(lead_id).pos - world.cfg.control.vehicle_length
            - world.vehicle(ego_id).pos)


def idm_equilibrium():
    print("1. IDM equilibrium gap behind a steady leader")
    print(f"   {'leader v (m/s)':>16} {'settled gap (m)':>16} {'closed form (m)':>16}")
    for v_lead in (10.0, 20.0, 30.0):
        w = make_lane(length=12000.0)
        hdv = w.cfg.control.hdv
        lead = w.add_vehicle(VehicleClass.HDV, 0, 1000.0, v_lead, v0=v_lead)
        w.set_accel_override(lead, hold_speed(v_lead))
        v0 = v_lead + 8.0
        ego = w.add_vehicle(VehicleClass.HDV, 0, 880.0, v_lead, v0=v0)
        w.run(until=150.0)
        # zero-accel, zero-closing-speed IDM: gap = (s0 + v*T)/sqrt(1-(v/v0)^4)
        s_eq = (hdv.s0 + v_lead * hdv.T) / (1.0 - (v_lead / v0) ** 4) ** 0.5
        print(f"   {v_lead:>16.1f} {gap_between(w, lead, ego):>16.2f} {s_eq:>16.2f}")
    print()


def approach_and_stop():
    print("2. IDM approach to a stopped leader (start 200 m back at 25 m/s)")
    w = make_lane()
    lead = w.add_vehicle(VehicleClass.HDV, 0, 2000.0, 0.0, v0=25.0)
    w.set_accel_override(lead, lambda t, s: 0.0)
    ego = w.add_vehicle(VehicleClass.HDV, 0, 1800.0, 25.0, v0=25.0)
    print(f"   {'t (s)':>8} {'gap (m)':>10} {'v (m/s)':>9} {'a (m/s^2)':>10}")
    for t_mark in (0.0, 4.0, 8.0, 12.0, 20.0, 40.0):
        if t_mark > 0:
            w.run(until=t_mark)
        s = w.vehicle(ego)
        print(f"   {w.t:>8.1f} {gap_between(w, lead, ego):>10.2f}"
              f" {s.v:>9.2f} {s.a:>10.2f}")
    print(f"   standstill gap s0 = {w.cfg.control.hdv.s0} m;"
          f" collisions = {w.collision_count}")
    print()


def spacing_policies():
    print("3. CAV spacing policies (leader held at 20 m/s)")
    print(f"   {'mode':>6} {'headway (s)':>12} {'settled gap (m)':>16} {'r + h*v (m)':>13}")
    for per, label in ((0.0, "CACC"), (1.0, "ACC")):
        w = make_lane(per=per, length=12000.0)
        cav = w.cfg.control.cav
        lead = w.add_vehicle(VehicleClass.CAV, 0, 1000.0, 20.0, v0=20.0)
        w.set_accel_override(lead, hold_speed(20.0))
        ego = w.add_vehicle(VehicleClass.CAV, 0, 940.0, 20.0, v0=30.0)
        w.run(until=150.0)
        h = cav.h_cacc if label == "CACC" else cav.h_degraded
        print(f"   {label:>6} {h:>12.1f} {gap_between(w, lead, ego):>16.2f}"
              f" {cav.r_standstill + h * 20.0:>13.2f}")
    print()


if __name__ == "__main__":
    idm_equilibrium()
    approach_and_stop()
    spacing_policies()
