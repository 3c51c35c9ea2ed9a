"""Estimator behavior: oracle coverage, exact merge semantics, fits, the
decomposition consistency test."""

import math
from fractions import Fraction

import numpy as np
import pytest

import blockwalk as bw
from blockwalk import Environment, Partition
from blockwalk.errors import ConfigurationError
from blockwalk.estimators import mean_estimate, wilson_interval

P11 = Partition((1, 1))
P22 = Partition((2, 2))


class TestWilson:
    def test_interval_basics(self):
        lo, hi = wilson_interval(25, 100)
        assert 0 < lo < 0.25 < hi < 1

    def test_extremes_stay_in_unit_interval(self):
        assert wilson_interval(0, 10)[0] == 0.0
        assert wilson_interval(10, 10)[1] == 1.0
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_coverage_on_known_instance(self):
        # window probability at n=1 for the (2,2) walk is exactly 1/4
        covered = 0
        for seed in range(100):
            r = bw.estimate_return_window(P22, None, 1, 2000, seed)
            if r.estimate.ci_lo <= 0.25 <= r.estimate.ci_hi:
                covered += 1
        assert covered >= 93


class TestReturnWindow:
    def test_covers_oracle_quarter(self):
        r = bw.estimate_return_window(P22, None, 1, 100000, 7)
        assert r.estimate.ci_lo <= 0.25 <= r.estimate.ci_hi

    def test_covers_oracle_half(self):
        r = bw.estimate_return_window(P11, None, 1, 100000, 7)
        assert r.estimate.ci_lo <= 0.5 <= r.estimate.ci_hi

    def test_window_zero_certain(self):
        r = bw.estimate_return_window(P22, None, 0, 100, 1)
        assert r.estimate.point == 1.0 and r.successes == 100

    def test_rejects_zero_replicas(self):
        with pytest.raises(ConfigurationError):
            bw.estimate_return_window(P22, None, 1, 0, 1)

    def test_covers_exact_value_at_larger_n(self):
        exact = float(bw.exact_return_window(P11, 4))
        r = bw.estimate_return_window(P11, None, 4, 100000, 11)
        assert r.estimate.ci_lo <= exact <= r.estimate.ci_hi


class TestRangeStats:
    def test_precondition_n2(self):
        with pytest.raises(ConfigurationError):
            bw.estimate_range_stats(P11, 1, 100, 1)

    def test_two_step_mean(self):
        r = bw.estimate_range_stats(P11, 2, 40000, 13)
        assert r.min_range >= 2 and r.max_range <= 3
        mean = r.sum_range / r.replicas
        assert abs(mean - 2.5) < 4 * 0.5 / math.sqrt(r.replicas)

    def test_no_violations_at_moderate_scale(self):
        r = bw.estimate_range_stats(P22, 10000, 300, 17, bound_constant=10.0)
        assert r.upper_violations == 0 and r.lower_violations == 0

    def test_ratio_decreasing_in_n(self):
        pts = [bw.estimate_range_stats(P22, n, 400, 19, grid_index=g).ratio_estimate.point
               for g, n in enumerate((2 ** 10, 2 ** 14))]
        assert pts[1] < pts[0]


class TestReturnsToOrigin:
    def test_histogram_is_consistent(self):
        r = bw.estimate_returns_to_origin(P22, 512, 2000, 23)
        assert sum(r.histogram.values()) == 2000
        assert sum(k * v for k, v in r.histogram.items()) == r.sum_returns
        assert r.sum_late <= r.sum_returns

    def test_returns_only_at_even_times(self):
        out = bw.new_walk(P22, seed=101).run(4096, record_returns=True)
        assert all(t % 2 == 0 for t in out.return_times)

    def test_srw_contrast_grows_while_staged_walk_plateaus(self):
        srw_small = bw.estimate_returns_srw(2 ** 10, 600, 29)
        srw_big = bw.estimate_returns_srw(2 ** 14, 600, 29, grid_index=1)
        assert srw_big.mean_estimate.point > srw_small.mean_estimate.point
        m_small = bw.estimate_returns_to_origin(P22, 2 ** 10, 600, 29)
        m_big = bw.estimate_returns_to_origin(P22, 2 ** 14, 600, 29, grid_index=1)
        gap_srw = srw_big.mean_estimate.point - srw_small.mean_estimate.point
        gap_m = m_big.mean_estimate.point - m_small.mean_estimate.point
        assert gap_m < gap_srw


class TestShapeRatio:
    def test_trapped_line_ratio_zero(self):
        r = bw.estimate_shape_ratio(256, 200, 31, environment=Environment.line({0: 0}))
        assert r.h_zero_replicas == 0
        assert r.ratio_estimate.point == 0.0 and r.sum_ratio == 0

    def test_tiny_horizon_degenerate(self):
        # two steps always move x only, so the y-extent is identically zero
        r = bw.estimate_shape_ratio(2, 500, 37)
        assert r.h_zero_replicas == 500
        assert math.isnan(r.ratio_estimate.point)

    def test_requires_11_partition(self):
        with pytest.raises(ConfigurationError):
            bw.estimate_shape_ratio(16, 10, 1, partition=P22)

    def test_ratio_positive_at_moderate_n(self):
        r = bw.estimate_shape_ratio(1024, 300, 41)
        assert r.h_zero_replicas == 0
        assert 0 < r.ratio_estimate.point < 5


class TestEvaluateStrategy:
    def test_leaderboard_ranked(self):
        scores = bw.rank_strategies(
            [bw.AlwaysCoordinate(1), bw.RoundRobin(), bw.UniformCoordinate()],
            2, 1024, 300, 43)
        pts = [s.mean_estimate.point for s in scores]
        assert pts == sorted(pts, reverse=True)
        assert {s.strategy for s in scores} == {"always-1", "round-robin",
                                                "uniform-random"}

    def test_uniform_strategy_is_srw(self):
        score = bw.evaluate_strategy(bw.UniformCoordinate(), 2, 2 ** 10, 2000, 47)
        srw = bw.range_size_srw(2 ** 10, 2000, 47)
        se = math.hypot(score.mean_estimate.stderr, srw.estimate.stderr)
        assert abs(score.mean_estimate.point - srw.estimate.point) < 4 * se


class TestFitScaling:
    @staticmethod
    def _model(n, c):
        return c * (math.log(math.log(n)) / math.log(n)) ** 2

    def test_exact_recovery(self):
        grid = [(n, self._model(n, 3.0)) for n in (2 ** 8, 2 ** 12, 2 ** 16, 2 ** 20)]
        fit = bw.fit_scaling(grid)
        assert abs(fit.constant - 3.0) < 1e-9
        assert fit.good and fit.rel_residual < 1e-12

    def test_noisy_recovery_within_ten_percent(self):
        rng = np.random.default_rng(7)
        grid = [(n, self._model(n, 2.0) * (1 + 0.05 * rng.standard_normal()))
                for n in (2 ** 6, 2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14, 2 ** 16)]
        fit = bw.fit_scaling(grid)
        assert abs(fit.constant - 2.0) / 2.0 < 0.10

    def test_constant_grid_flagged_as_misfit(self):
        fit = bw.fit_scaling([(n, 0.3) for n in (2 ** 4, 2 ** 8, 2 ** 12, 2 ** 16,
                                                 2 ** 20)])
        assert not fit.good

    def test_degenerate_grids_rejected(self):
        with pytest.raises(ConfigurationError):
            bw.fit_scaling([(64, 0.1), (128, 0.05)])
        with pytest.raises(ConfigurationError):
            bw.fit_scaling([(64, 0.1), (64, 0.05), (128, 0.02)])
        with pytest.raises(ConfigurationError):
            bw.fit_scaling([(8, 0.1), (64, 0.05), (128, 0.02)])


class TestDecomposition:
    def test_null_holds_at_moderate_scale(self):
        r = bw.decomposition_consistency_test(P22, 1000, 20000, 53)
        assert r.p_value > 0.01

    def test_inverted_rule_rejected(self):
        r = bw.decomposition_consistency_test(P22, 1000, 20000, 53,
                                              invert_reconstruction=True)
        assert r.p_value < 1e-6

    def test_requires_two_blocks(self):
        with pytest.raises(ConfigurationError):
            bw.decomposition_consistency_test(Partition((2, 1, 1)), 10, 100, 1)

    def test_works_for_11(self):
        r = bw.decomposition_consistency_test(P11, 256, 20000, 59)
        assert r.p_value > 0.001


class TestMergeExactness:
    def test_split_halves_merge_bit_exact(self):
        whole = bw.estimate_return_window(P22, None, 8, 4000, 61)
        a = bw.estimate_return_window(P22, None, 8, 4000, 61, replica_range=(0, 1500))
        b = bw.estimate_return_window(P22, None, 8, 4000, 61, replica_range=(1500, 4000))
        assert a.successes + b.successes == whole.successes
        merged = bw.estimators.bernoulli_estimate(
            a.successes + b.successes, a.replicas + b.replicas, 61,
            whole.estimate.digest)
        assert merged == whole.estimate

    def test_range_stats_sums_merge(self):
        whole = bw.estimate_range_stats(P22, 64, 3000, 67)
        parts = [bw.estimate_range_stats(P22, 64, 3000, 67, replica_range=rr)
                 for rr in ((0, 1000), (1000, 2750), (2750, 3000))]
        assert sum(p.sum_range for p in parts) == whole.sum_range
        assert sum(p.sum_range_sq for p in parts) == whole.sum_range_sq
        assert max(p.max_range for p in parts) == whole.max_range
        assert min(p.min_range for p in parts) == whole.min_range

    def test_workers_do_not_change_results(self):
        a = bw.estimate_returns_to_origin(P22, 256, 3000, 71, workers=1)
        b = bw.estimate_returns_to_origin(P22, 256, 3000, 71, workers=5)
        assert a == b

    def test_mean_estimate_exactness(self):
        # fractions in, deterministic floats out
        e1 = mean_estimate(Fraction(7, 2), Fraction(49, 2), 7, 1)
        e2 = mean_estimate(Fraction(7, 2), Fraction(49, 2), 7, 1)
        assert e1 == e2
        assert e1.point == float(Fraction(1, 2))
