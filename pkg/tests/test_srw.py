"""2D SRW reference module: exact bookkeeping and estimator calibration."""

import math
from fractions import Fraction

import numpy as np
import pytest

import blockwalk as bw
from blockwalk.errors import ConfigurationError
from helpers import hitting_prob_exact, iter_srw2d_paths, tau_annulus_pmf

Z = 4.0  # generous sigma multiple for fixed-seed statistical checks


class TestTrajectory:
    def test_shape_start_and_steps(self):
        traj = bw.run_srw2d(7, 500)
        assert traj.shape == (501, 2)
        assert tuple(traj[0]) == (0, 0)
        assert (np.abs(np.diff(traj, axis=0)).sum(axis=1) == 1).all()

    def test_custom_start(self):
        traj = bw.run_srw2d(7, 10, start=(3, -2))
        assert tuple(traj[0]) == (3, -2)

    def test_reproducible(self):
        assert np.array_equal(bw.run_srw2d(3, 100), bw.run_srw2d(3, 100))
        assert not np.array_equal(bw.run_srw2d(3, 100), bw.run_srw2d(4, 100))

    def test_increment_frequencies(self):
        traj = bw.run_srw2d(11, 1_000_000)
        diffs = np.diff(traj, axis=0)
        for vec in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            frac = np.count_nonzero((diffs == vec).all(axis=1)) / len(diffs)
            assert abs(frac - 0.25) < Z * math.sqrt(0.25 * 0.75 / len(diffs))

    def test_return_probability_at_two(self):
        exact = sum(w for w, t in iter_srw2d_paths(2) if t[-1] == (0, 0))
        assert exact == Fraction(1, 4)
        hits = sum(tuple(bw.run_srw2d(s, 2)[-1]) == (0, 0) for s in range(20000))
        assert abs(hits / 20000 - 0.25) < Z * math.sqrt(0.25 * 0.75 / 20000)

    def test_mean_squared_displacement_at_three(self):
        exact = sum(w * (t[-1][0] ** 2 + t[-1][1] ** 2) for w, t in iter_srw2d_paths(3))
        assert exact == 3
        vals = [float(np.sum(bw.run_srw2d(s, 3)[-1] ** 2)) for s in range(20000)]
        assert abs(np.mean(vals) - 3.0) < Z * np.std(vals) / math.sqrt(len(vals))


class TestLocalTime:
    def test_time_zero(self):
        prof = bw.max_local_time(bw.run_srw2d(1, 0))
        assert prof.maximum == 1 and prof.argmax == (0, 0)

    def test_counts_sum_to_path_length(self):
        traj = bw.run_srw2d(5, 777)
        prof = bw.max_local_time(traj)
        assert sum(prof.counts.values()) == 778
        assert prof.counts[prof.argmax] == prof.maximum

    def test_mean_max_local_time_at_two(self):
        # N*_2 = 2 iff U_2 = U_0, else 1
        exact = sum(w * max(len([s for s in t if s == site]) for site in set(t))
                    for w, t in iter_srw2d_paths(2))
        assert exact == Fraction(5, 4)
        vals = [bw.max_local_time(bw.run_srw2d(s, 2)).maximum for s in range(20000)]
        assert abs(np.mean(vals) - 1.25) < Z * np.std(vals) / math.sqrt(len(vals))

    def test_kernel_estimator_matches_naive_pass(self):
        # the compiled per-replica loop against independent trajectory passes
        n = 256
        r = bw.estimate_max_local_time(n, 2000, 13)
        vals = [bw.max_local_time(bw.run_srw2d(1000 + s, n)).maximum
                for s in range(500)]
        se = math.hypot(r.estimate.stderr, np.std(vals) / math.sqrt(len(vals)))
        assert abs(float(np.mean(vals)) - r.estimate.point) < Z * se

    def test_median_max_local_time_nondecreasing(self):
        medians = []
        for g, n in enumerate((64, 256, 1024, 4096)):
            r = bw.estimate_max_local_time(n, 200, 21, grid_index=g)
            medians.append(r.estimate.point)
        assert all(b >= a for a, b in zip(medians, medians[1:]))


class TestTauAnnulus:
    def test_first_step_enters_unit_annulus(self):
        assert bw.tau_annulus(bw.run_srw2d(9, 50), 0) == 1

    def test_none_when_never_reached(self):
        traj = np.array([[0, 0], [1, 0], [0, 0], [-1, 0], [0, 0]])
        assert bw.tau_annulus(traj, 5) is None

    def test_synthetic_crossing(self):
        traj = np.array([[0, 0], [0, 1], [0, 2], [0, 3]])
        assert bw.tau_annulus(traj, 2) == 3
        assert bw.tau_annulus(traj, 1.5) == 2  # annulus (1.5, 2.5] means norm 2

    def test_distribution_matches_dp_oracle(self):
        depth = 12
        pmf = tau_annulus_pmf(3, depth)  # r = 2: annulus (2, 3] is sup-norm 3
        summary = bw.estimate_tau_annulus(2, depth, 40000, 17)
        p_exact = float(sum(pmf.values()))
        e = summary.reach_estimate
        assert e.ci_lo <= p_exact <= e.ci_hi
        mean_exact = float(sum(k * p for k, p in pmf.items()) / sum(pmf.values()))
        m = summary.mean_tau_estimate
        assert m.ci_lo - 0.1 <= mean_exact <= m.ci_hi + 0.1


class TestHittingBeforeAnnulus:
    def test_start_at_origin_rejected(self):
        with pytest.raises(ConfigurationError):
            bw.estimate_hitting_before_annulus((0, 0), 8, 10, 1)

    def test_matches_linear_solve_oracle(self):
        for start, outer in (((1, 0), 4), ((2, 1), 6), ((3, 3), 8)):
            exact = hitting_prob_exact(start, outer + 1)
            r = bw.estimate_hitting_before_annulus(start, outer, 20000, 23)
            assert r.horizon_misses == 0
            assert r.estimate.ci_lo - 0.01 <= exact <= r.estimate.ci_hi + 0.01, (start, outer)

    def test_antipodal_starts_within_ci(self):
        a = bw.estimate_hitting_before_annulus((3, 1), 9, 20000, 29)
        b = bw.estimate_hitting_before_annulus((-3, -1), 9, 20000, 31)
        se = math.hypot(a.estimate.stderr, b.estimate.stderr)
        assert abs(a.estimate.point - b.estimate.point) < Z * se

    def test_scaling_ratio_bounded_on_grid(self):
        ratios = []
        for g, r0 in enumerate((4, 8, 16)):
            R = r0 * math.log(r0) ** 4
            r = bw.estimate_hitting_before_annulus((r0, 0), R, 400, 37, grid_index=g)
            ratios.append(r.estimate.point * math.log(r0) / math.log(math.log(r0)))
        assert all(np.isfinite(v) and v > 0 for v in ratios)
        assert max(ratios) / min(ratios) < 4.0


class TestReturnWindowSrw:
    def test_window_from_zero_is_certain(self):
        r = bw.estimate_return_window_srw(0, 100, 50, 1)
        assert r.estimate.point == 1.0

    def test_nonincreasing_in_window_start(self):
        pts = []
        for g, t in enumerate((1, 64, 256, 512)):
            r = bw.estimate_return_window_srw(t, 256, 20000, 41, grid_index=g)
            pts.append((t, r))
        for (_, a), (_, b) in zip(pts, pts[1:]):
            assert b.estimate.point <= a.estimate.point + Z * math.hypot(
                a.estimate.stderr, b.estimate.stderr)

    def test_precondition(self):
        with pytest.raises(ConfigurationError):
            bw.estimate_return_window_srw(999, 100, 10, 1)


class TestRangeSize:
    def test_one_step_range_exact(self):
        r = bw.range_size_srw(1, 200, 3)
        assert r.estimate.point == 2.0 and r.estimate.stderr == 0.0

    def test_two_step_mean(self):
        r = bw.range_size_srw(2, 40000, 7)
        assert r.estimate.ci_lo <= 2.75 <= r.estimate.ci_hi

    def test_scaled_range_slowly_varying(self):
        vals = []
        for g, n in enumerate((2 ** 10, 2 ** 12, 2 ** 14)):
            r = bw.range_size_srw(n, 300, 11, grid_index=g)
            vals.append(r.estimate.point * math.log(n) / n)
        assert max(vals) / min(vals) < 1.5


class TestEstimatorMachinery:
    def test_ci_shrinks_with_replicas(self):
        widths = []
        for reps in (500, 1000, 2000, 4000):
            r = bw.estimate_return_window_srw(16, 16, reps, 55)
            widths.append(r.estimate.ci_hi - r.estimate.ci_lo)
        for a, b in zip(widths, widths[1:]):
            assert b < a
            assert 0.5 < b / a < 0.95  # roughly 1/sqrt(2) per doubling

    def test_returns_srw_counts(self):
        r = bw.estimate_returns_srw(2048, 400, 61)
        assert r.sum_returns == sum(k * v for k, v in r.histogram.items())
        assert sum(r.histogram.values()) == 400
        assert r.mean_estimate.point > 1.0  # recurrent walk keeps returning
