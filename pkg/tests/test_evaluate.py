import csv

import numpy as np
import pytest

from disttopo.evaluate import (
    EvalReport,
    distribution_stats,
    evaluate,
    fixed_windows,
    gt_queries,
    rank1,
    retrieval,
    write_report,
)
from disttopo.pipeline import PipelineResult, edge_windows, fixed_edge_windows
from disttopo.scale import CorrespondenceSet
from disttopo.sim import GroundTruth
from disttopo.topology import DIST, TIME, Histogram, TopologyGraph

from .helpers import fake_views


class TestRank1:
    truth = GroundTruth(pairs=[(0, 1, 1, 1, 5.0), (0, 2, 1, 2, 6.0), (1, 3, 2, 3, 4.0)])
    views = fake_views({0: [1, 2], 1: [1, 2, 3], 2: [3]})

    def test_all_correct(self):
        sets = [CorrespondenceSet(0, 1, [(0, 0, 0.9), (1, 1, 0.8)]), CorrespondenceSet(1, 2, [(2, 0, 0.9)])]
        assert rank1(sets, self.views, self.truth) == (3, 3, 100.0)

    def test_empty(self):
        assert rank1([], self.views, self.truth) == (0, 3, 0.0)

    def test_wrong_identity_not_counted(self):
        sets = [CorrespondenceSet(0, 1, [(0, 1, 0.9), (1, 0, 0.8)])]
        assert rank1(sets, self.views, self.truth)[0] == 0

    def test_reverse_orientation_counts(self):
        sets = [CorrespondenceSet(2, 1, [(0, 2, 0.9)])]
        assert rank1(sets, self.views, self.truth)[0] == 1

    def test_reported_arithmetic(self):
        assert 100.0 * 1990 / 2664 == pytest.approx(74.7, abs=0.05)


class TestRetrieval:
    def test_all_inclusive_window(self, desk_world, desk_result):
        q = gt_queries(desk_world[2], desk_result.views)
        wins = fixed_windows(desk_result, -1e6, 1e6, links=sorted(desk_result.g_dist.edges))
        rate, weighted, per_link = retrieval(q, wins)
        assert rate == 100.0 and weighted == 100.0

    def test_zero_width_window(self, desk_world, desk_result):
        q = gt_queries(desk_world[2], desk_result.views)
        wins = fixed_windows(desk_result, 12.345, 12.345)
        assert retrieval(q, wins)[0] == 0.0

    def test_missing_link_counts_zero(self, desk_world, desk_result):
        q = gt_queries(desk_world[2], desk_result.views)
        wins = fixed_windows(desk_result, -1e6, 1e6, links=[(0, 1)])
        rate, _, per_link = retrieval(q, wins)
        assert per_link[(0, 1)] == 100.0
        assert rate == pytest.approx(100.0 / len(per_link))

    def test_curves_monotone(self, desk_report):
        for rows in desk_report.retrieval_curve.values():
            rates = [r["rate"] for r in rows]
            assert rates == sorted(rates)
            ranges = [r["range_s"] for r in rows]
            assert ranges == sorted(ranges)

    def test_rank1_bounded_by_retrieval(self, desk_world, desk_result):
        truth = desk_world[2]
        q = gt_queries(truth, desk_result.views)
        for kind, sets in desk_result.final.items():
            tp, _, _ = rank1(sets, desk_result.views, truth)
            _, weighted, _ = retrieval(q, desk_result.final_windows[kind])
            assert tp <= weighted * len(q) / 100.0 + 1e-9

    def test_fixed_window_misses_slow_walkers(self, desk_world, desk_result):
        truth = desk_world[2]
        q = gt_queries(truth, desk_result.views)
        slow = [x for x in q if x.dt > 60.0 and truth.person_speeds[desk_result.views[x.src].tracklets[x.src_idx].person_id] < 1.0]
        assert slow
        fixed = fixed_windows(desk_result, 20.0, 60.0)
        adaptive = {key: edge_windows(DIST, desk_result.views[key[0]], desk_result.views[key[1]],
                                      desk_result.g_dist, desk_result.g_time, 0.95, 120.0)
                    for key in desk_result.g_dist.edges}
        recovered = 0
        for x in slow:
            assert retrieval([x], fixed)[0] == 0.0
            recovered += retrieval([x], adaptive)[0] == 100.0
        assert recovered >= 1


class TestDistributionStats:
    def test_point_mass(self):
        g = TopologyGraph([0, 1], DIST, {(0, 1): Histogram(0, 1, DIST, 2.0, (40.0, 50.0),
                                                           np.array([0, 0, 1.0, 0, 0]), 3)})
        s = distribution_stats(g)[(0, 1)]
        assert s["mean"] == 45.0 and s["std"] == 0.0

    def test_uniform(self):
        n = 150
        g = TopologyGraph([0, 1], DIST, {(0, 1): Histogram(0, 1, DIST, 0.1, (40.0, 55.0), np.full(n, 1 / n), n)})
        s = distribution_stats(g)[(0, 1)]
        assert s["mean"] == pytest.approx(47.5)
        assert s["std"] == pytest.approx(4.33, abs=0.01)

    def test_distance_tighter_than_time(self, desk_report):
        for row in desk_report.per_link_stats:
            assert row["dist_cv"] < row["time_cv"]


class TestReport:
    def test_invariants(self, desk_report):
        r = desk_report
        assert isinstance(r, EvalReport)
        assert 0.0 <= r.rank1_percent <= 100.0
        assert r.tp <= r.t_gt
        assert r.primary_kind == DIST
        assert r.rank1_final[DIST]["rank1"] > r.rank1_final[TIME]["rank1"]

    def test_csv_files(self, tmp_path, desk_report):
        paths = write_report(desk_report, tmp_path)
        with open(paths["retrieval_curve.csv"]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["range_s", "rate_time", "rate_dist"]
        assert len(rows) == 1 + len(desk_report.retrieval_curve[DIST])
        with open(paths["link_stats.csv"]) as fh:
            assert len(list(csv.DictReader(fh))) == 4
        with open(paths["rank1.csv"]) as fh:
            settings = {r["setting"] for r in csv.DictReader(fh)}
        assert settings == {"initial", "final", "equal_range"}

    def test_empty_topology_gives_zeros(self, desk_world, desk_result):
        r = desk_result
        empty = PipelineResult(r.config, r.cams_initial, r.cams_aligned, r.views, r.initial, [], None,
                               TopologyGraph(r.g_dist.vertices, DIST), TopologyGraph(r.g_time.vertices, TIME),
                               final={DIST: [], TIME: []})
        rep = evaluate(empty, desk_world[2], [5.0, 20.0])
        for rows in rep.retrieval_curve.values():
            assert [x["rate"] for x in rows] == [0.0, 0.0]
        assert rep.rank1_percent == 0.0

    def test_fixed_edge_windows_shape(self, desk_result):
        v = desk_result.views
        w = fixed_edge_windows(v[0], v[1], 20.0, 60.0)
        assert len(w.lo_a) == len(v[0]) and len(w.lo_b) == len(v[1])
        assert np.all(w.widths() == 40.0)
