"""Congestion formation on the default corridor (all-human baseline).

Runs the calibrated study scenario at MPR 0 and prints how the on-ramp
bottleneck builds: a per-edge congestion-index table over 5-minute blocks,
the whole-run per-edge profile, and the network summary. The ramp joins at
3.5 km, so the queue appears on e2/e3 and spills upstream while the edges
past the merge stay close to free flow.

Takes about a minute of wall time (1800 s of simulated traffic).

Run:  python3 demos/corridor_congestion.py
"""

from collections import defaultdict

from cavsim import default_scenario, run_scenario, travel_rate


def free_flow_rate(edge) -> float:
    """min/km at the speed limit."""
    return (edge.length / edge.speed_limit / 60.0) / (edge.length / 1000.0)


def main():
    cfg = default_scenario(seed=11)
    print("Baseline corridor run (MPR 0, calibrated demand)")
    print(f"  inflow {cfg.demand.inflow:.0f} veh/h at the head, "
          f"{cfg.demand.ramp_inflow:.0f} veh/h on the ramp, "
          f"{cfg.duration - cfg.warmup:.0f} s measured after "
          f"{cfg.warmup:.0f} s warmup\n")
    result = run_scenario(cfg)

    edges = {e.id: e for e in cfg.network.edges}
    order = [e.id for e in cfg.network.edges]

    # per-edge RCI over 5-minute blocks, from the 60 s metric bins
    block: dict[tuple[int, str], list[float]] = defaultdict(lambda: [0.0, 0.0])
    for rec in result.bins:
        b = int((rec.t0 - cfg.warmup) // 300.0)
        cell = block[(b, rec.edge_id)]
        cell[0] += rec.total_time
        cell[1] += rec.total_distance
    n_blocks = int((cfg.duration - cfg.warmup) // 300.0)

    print("Edge congestion index by 5-minute block (rows: minutes after warmup)")
    print("   block " + "".join(f"{eid:>7}" for eid in order))
    for b in range(n_blocks):
        row = f"  {b * 5:>3}-{(b + 1) * 5:<3}"
        for eid in order:
            t_s, d_m = block[(b, eid)]
            if d_m <= 0.0:
                row += f"{'-':>7}"
                continue
            tr = (t_s / 60.0) / (d_m / 1000.0)
            ff = free_flow_rate(edges[eid])
            row += f"{(tr - ff) / ff:>7.2f}"
        print(row)

    print("\nWhole-run per-edge profile")
    print(f"   {'edge':>5} {'travel rate':>12} {'rci':>7} {'traversals':>11}")
    for rec in result.edge_totals:
        tr = travel_rate(rec)
        ff = free_flow_rate(edges[rec.edge_id])
        rci_e = "-" if tr is None else f"{(tr - ff) / ff:7.2f}"
        tr_s = "-" if tr is None else f"{tr:12.3f}"
        print(f"   {rec.edge_id:>5} {tr_s:>12} {rci_e:>7} {rec.traversals:>11}")

    s = result.summary
    print(f"\nNetwork: travel rate {s.travel_rate:.4f} min/km, RCI {s.rci:.4f}, "
          f"collisions {s.collisions}, completed {s.vehicles_completed}, "
          f"still queued at entries {result.queued_at_end}")


if __name__ == "__main__":
    main()
