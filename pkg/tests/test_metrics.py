"""Tests for edge-interval aggregation and the congestion index.

Travel-rate arithmetic is checked against hand-computed closed forms; the
accumulator is checked against a scalar reference implementation fed the
same contribution stream.
"""

import numpy as np
import pytest

from cavsim.metrics import (EdgeRecord, MetricsAccumulator, RunSummary,
                            merge_records, network_summary, rci,
                            record_traversal, travel_rate)
from cavsim.network import Edge, RoadNetwork

NET = RoadNetwork((Edge("a", 1000.0, 2, 25.0), Edge("b", 2000.0, 2, 20.0)))


class TestTravelRate:
    def test_unit_conversion(self):
        # 1 km in 60 s is 1 min/km
        rec = EdgeRecord("a", 0.0, 60.0, 0, total_time=60.0, total_distance=1000.0)
        assert travel_rate(rec) == pytest.approx(1.0)

    def test_pooled_not_averaged(self):
        # pooling weights by distance: (100+50)s over (2000+500)m
        rec = EdgeRecord("a", 0.0, 60.0, 0, 0.0, 0.0)
        rec = record_traversal(rec, 100.0, 2000.0)
        rec = record_traversal(rec, 50.0, 500.0)
        assert travel_rate(rec) == pytest.approx((150.0 / 60.0) / 2.5)

    def test_empty_is_none(self):
        assert travel_rate(EdgeRecord("a", 0.0, 60.0)) is None

    def test_traversal_counter(self):
        rec = EdgeRecord("a", 0.0, 60.0)
        rec = record_traversal(rec, 10.0, 200.0, completed=False)
        rec = record_traversal(rec, 40.0, 1000.0, completed=True)
        assert rec.traversals == 1

    def test_negative_contribution_rejected(self):
        with pytest.raises(ValueError):
            record_traversal(EdgeRecord("a", 0.0, 60.0), -1.0, 10.0)


class TestRci:
    def test_free_flow_is_zero(self):
        assert rci(0.6, 0.6) == pytest.approx(0.0)

    def test_double_rate_is_one(self):
        assert rci(1.2, 0.6) == pytest.approx(1.0)

    def test_faster_than_free_flow_negative(self):
        assert rci(0.54, 0.6) == pytest.approx(-0.1)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            rci(1.0, 0.0)


class TestMerge:
    def test_union_of_intervals_and_sums(self):
        a = EdgeRecord("a", 0.0, 60.0, 1, 30.0, 700.0)
        b = EdgeRecord("a", 60.0, 120.0, 2, 40.0, 900.0)
        m = merge_records(a, b)
        assert (m.t0, m.t1) == (0.0, 120.0)
        assert m.traversals == 3
        assert m.total_time == pytest.approx(70.0)
        assert m.total_distance == pytest.approx(1600.0)

    def test_mismatched_edges_rejected(self):
        with pytest.raises(ValueError):
            merge_records(EdgeRecord("a", 0.0, 1.0), EdgeRecord("b", 0.0, 1.0))


class TestNetworkSummary:
    def test_closed_form(self):
        # 3 km network: ff rate = (1000/25 + 2000/20)/60 / 3 = 0.7778 min/km
        recs = [
            EdgeRecord("a", 300.0, 360.0, 5, total_time=120.0, total_distance=1000.0),
            EdgeRecord("b", 300.0, 360.0, 5, total_time=400.0, total_distance=2000.0),
        ]
        s = network_summary(recs, NET, mpr=20.0, per=0.0, collisions=0,
                            vehicles_completed=5)
        tr = ((120.0 + 400.0) / 60.0) / 3.0
        tr_ff = NET.free_flow_travel_rate()
        assert s.travel_rate == pytest.approx(tr)
        assert s.rci == pytest.approx((tr - tr_ff) / tr_ff)
        assert s.per == 0.0 and s.mpr == 20.0

    def test_empty_run_rejected(self):
        with pytest.raises(ValueError):
            network_summary([EdgeRecord("a", 0.0, 60.0)], NET, mpr=0.0, per=None,
                            collisions=0, vehicles_completed=0)

    def test_free_flow_rate_length_weighted(self):
        # equals total free-flow time over total length, not a mean of rates
        expect = ((1000.0 / 25.0 + 2000.0 / 20.0) / 60.0) / 3.0
        assert NET.free_flow_travel_rate() == pytest.approx(expect)


class ScalarReference:
    """Dict-based mirror of MetricsAccumulator for cross-checking."""

    def __init__(self, warmup, duration, width, n_edges):
        self.cells = {}
        self.warmup, self.duration, self.width = warmup, duration, width
        self.n_bins = max(1, int(np.ceil((duration - warmup) / width)))

    def add(self, t, e, time, dist, completed=False):
        if t < self.warmup or t >= self.duration:
            return
        b = min(int((t - self.warmup) / self.width), self.n_bins - 1)
        cell = self.cells.setdefault((b, e), [0.0, 0.0, 0])
        cell[0] += time
        cell[1] += dist
        cell[2] += int(completed)


class TestAccumulator:
    def test_bin_of_boundaries(self):
        acc = MetricsAccumulator(NET, warmup=300.0, duration=1800.0, bin_width=60.0)
        assert acc.bin_of(299.999) is None
        assert acc.bin_of(300.0) == 0
        assert acc.bin_of(359.999) == 0
        assert acc.bin_of(360.0) == 1
        assert acc.bin_of(1799.999) == acc.n_bins - 1
        assert acc.bin_of(1800.0) is None

    def test_ragged_final_bin(self):
        acc = MetricsAccumulator(NET, warmup=0.0, duration=90.0, bin_width=60.0)
        assert acc.n_bins == 2
        recs = acc.bin_records()
        assert recs[-1].t1 == pytest.approx(90.0)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(17)
        acc = MetricsAccumulator(NET, warmup=60.0, duration=600.0, bin_width=60.0)
        ref = ScalarReference(60.0, 600.0, 60.0, 2)
        for _ in range(400):
            t = float(rng.uniform(0.0, 650.0))
            k = int(rng.integers(1, 5))
            edges = rng.integers(0, 2, size=k)
            times = rng.uniform(0.0, 0.1, size=k)
            dists = rng.uniform(0.0, 3.0, size=k)
            acc.add_array(t, edges, times, dists)
            for e, ti, di in zip(edges, times, dists):
                ref.add(t, int(e), float(ti), float(di))
            if rng.random() < 0.3:
                e = int(rng.integers(0, 2))
                acc.add(t, e, 0.5, 10.0, completed=True)
                ref.add(t, e, 0.5, 10.0, completed=True)
        got = {}
        for b in range(acc.n_bins):
            for e in range(2):
                rec = acc.bin_records()[b * 2 + e]
                if rec.total_time or rec.total_distance or rec.traversals:
                    got[(b, e)] = [rec.total_time, rec.total_distance, rec.traversals]
        for key, (ti, di, tr) in ref.cells.items():
            assert got[key][0] == pytest.approx(ti, rel=1e-12)
            assert got[key][1] == pytest.approx(di, rel=1e-12)
            assert got[key][2] == tr
        assert set(got) == set(ref.cells)

    def test_edge_totals_match_bin_sums(self):
        acc = MetricsAccumulator(NET, warmup=0.0, duration=300.0)
        rng = np.random.default_rng(3)
        for _ in range(200):
            acc.add(float(rng.uniform(0, 300)), int(rng.integers(0, 2)),
                    float(rng.uniform(0, 1)), float(rng.uniform(0, 30)),
                    completed=bool(rng.random() < 0.2))
        totals = acc.edge_totals()
        bins = acc.bin_records()
        for e, tot in enumerate(totals):
            per_bin = [r for r in bins if r.edge_id == tot.edge_id]
            assert tot.total_time == pytest.approx(sum(r.total_time for r in per_bin))
            assert tot.total_distance == pytest.approx(sum(r.total_distance for r in per_bin))
            assert tot.traversals == sum(r.traversals for r in per_bin)

    def test_duplicate_edge_indices_accumulate(self):
        # np.add.at semantics: repeated indices must not overwrite
        acc = MetricsAccumulator(NET, warmup=0.0, duration=60.0)
        acc.add_array(0.0, np.array([0, 0, 1]), np.array([1.0, 2.0, 4.0]),
                      np.array([10.0, 20.0, 40.0]))
        recs = acc.edge_totals()
        assert recs[0].total_time == pytest.approx(3.0)
        assert recs[0].total_distance == pytest.approx(30.0)
        assert recs[1].total_time == pytest.approx(4.0)


class TestRunSummaryShape:
    def test_baseline_per_is_none(self):
        s = RunSummary(mpr=0.0, per=None, travel_rate=0.7, rci=0.1,
                       collisions=0, vehicles_completed=10)
        assert s.per is None
