"""Independent metrics oracle: rebuild edge aggregates from a trajectory log.

Reads only the per-step CSV rows plus the network geometry and re-derives
per-(edge, bin) time, distance and traversal totals, splitting steps across
edge boundaries pro-rated by distance. Shares no code with the engine's
accumulator, so agreement validates the metrics pipeline end to end.
"""

import csv
from collections import defaultdict


def replay_trajectories(path, network, warmup, duration, dt, bin_width=60.0):
    """Returns {(bin index, edge id): [time s, distance m, traversals]}."""
    offsets = {e.id: float(off) for e, off in zip(network.edges, network.offsets)}
    lengths = {e.id: e.length for e in network.edges}
    order = [e.id for e in network.edges]
    index = {eid: k for k, eid in enumerate(order)}
    bounds = [offsets[eid] + lengths[eid] for eid in order]
    total_len = bounds[-1]
    n_bins = max(1, int(-(-(duration - warmup) // bin_width)))

    def bin_of(t):
        if t < warmup or t >= duration:
            return None
        return min(int((t - warmup) / bin_width), n_bins - 1)

    rows_by_vehicle = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows_by_vehicle[int(row["id"])].append(
                (float(row["t"]), row["edge"], float(row["s"])))

    cells = defaultdict(lambda: [0.0, 0.0, 0])

    def add(t_start, eid, time, dist, completed=False):
        b = bin_of(t_start)
        if b is None:
            return
        cell = cells[(b, eid)]
        cell[0] += time
        cell[1] += dist
        cell[2] += int(completed)

    for rows in rows_by_vehicle.values():
        rows.sort(key=lambda r: r[0])
        for (t0, e0, s0), (t1, e1, s1) in zip(rows, rows[1:]):
            p0 = offsets[e0] + s0
            p1 = offsets[e1] + s1
            moved = p1 - p0
            is_exit = t1 - t0 < dt * (1.0 - 1e-9)
            # exit rows carry a fractional timestamp; full steps span dt exactly
            step_time = (t1 - t0) if is_exit else dt
            if moved <= 0.0:
                add(t0, e0, step_time, 0.0)
                continue
            cur, eidx, t_used = p0, index[e0], 0.0
            while eidx < len(order) - 1 and bounds[eidx] <= p1:
                part = bounds[eidx] - cur
                tpart = step_time * part / moved
                add(t0, order[eidx], tpart, part, completed=True)
                t_used += tpart
                cur = bounds[eidx]
                eidx += 1
            final_edge_done = p1 >= total_len - 1e-9
            add(t0, order[eidx], step_time - t_used, p1 - cur,
                completed=final_edge_done)
    return cells


def replay_network_rate(cells):
    """Pooled network travel rate (min/km) over all bins and edges."""
    total_time = sum(c[0] for c in cells.values())
    total_dist = sum(c[1] for c in cells.values())
    return (total_time / 60.0) / (total_dist / 1000.0)
