"""Step engine semantics: visit staging, environments, recordings, bookkeeping."""

from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

import blockwalk as bw
from blockwalk import Environment, Partition, StepLaw
from blockwalk.errors import ConfigurationError, CoordinateOverflowError
from blockwalk.estimators import mc_final_positions, mc_two_law_positions
from blockwalk.lattice import COORD_LIMIT
from helpers import extent, iter_walk_paths, range_of, srw1d_expected_range

P11 = Partition((1, 1))
P22 = Partition((2, 2))


class TestNewWalk:
    def test_initial_state(self):
        s = bw.new_walk(P22, seed=3)
        assert s.position == (0, 0, 0, 0)
        assert s.time == 0 and s.range_size == 1 and s.fresh_steps == 0
        assert s.visit_count((0, 0, 0, 0)) == 1

    def test_environment_adds_to_origin_count(self):
        s = bw.new_walk(P11, Environment.line({0: 0}), seed=1)
        assert s.visit_count((0, 0)) == 2  # one pre-visit plus the arrival
        assert s.range_size == 1

    def test_environment_site_not_in_range(self):
        env = Environment.finite({(1, 0, 0, 0): 1})
        s = bw.new_walk(P22, env, seed=1)
        assert s.range_size == 1
        assert s.visit_count((1, 0, 0, 0)) == 1
        assert s.walk_visit_count((1, 0, 0, 0)) == 0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            bw.new_walk(P22, Environment.finite({(1, 0): 1}))


class TestComponentForVisit:
    def test_first_visit_moves_first_block(self):
        assert bw.component_for_visit(1, P22) == 1

    def test_later_visits_move_last_block(self):
        assert bw.component_for_visit(3, P22) == 2

    def test_multi_block_staging(self):
        assert bw.component_for_visit(2, Partition((2, 1, 1))) == 2

    def test_zero_count_is_logic_error(self):
        with pytest.raises(ValueError):
            bw.component_for_visit(0, P22)


class TestStepDistribution:
    def test_fresh_step_uniform_over_first_block(self):
        pos = mc_final_positions(P22, None, 1, 20000, 17)
        counts = Counter(tuple(p) for p in pos)
        assert set(counts) == {(1, 0, 0, 0), (-1, 0, 0, 0), (0, 1, 0, 0), (0, -1, 0, 0)}
        assert chisquare(list(counts.values())).pvalue > 1e-4

    def test_revisited_step_uniform_over_last_block(self):
        env = Environment.finite({(0, 0, 0, 0): 1})  # origin pre-visited
        pos = mc_final_positions(P22, env, 1, 20000, 18)
        counts = Counter(tuple(p) for p in pos)
        assert set(counts) == {(0, 0, 1, 0), (0, 0, -1, 0), (0, 0, 0, 1), (0, 0, 0, -1)}
        assert chisquare(list(counts.values())).pvalue > 1e-4

    def test_trapped_on_pre_visited_line(self):
        s = bw.new_walk(P11, Environment.line({0: 0}), seed=42)
        s.run(2000)
        assert s.position[0] == 0
        assert s.bounding_box()[0] == (0, 0)
        assert s.bounding_box()[1] != (0, 0)

    def test_pre_visited_plane_freezes_first_two_coords(self):
        s = bw.new_walk(P22, Environment.line({0: 0, 1: 0}), seed=7)
        s.run(2000)
        assert s.position[0] == 0 and s.position[1] == 0
        assert s.range_size > 1


class TestRun:
    def test_zero_steps_is_identity(self):
        s = bw.new_walk(P22, seed=5)
        before = (s.position, s.time, s.range_size, s.fresh_steps)
        s.run(0)
        assert (s.position, s.time, s.range_size, s.fresh_steps) == before

    @pytest.mark.parametrize("seed", range(8))
    def test_first_step_is_always_fresh(self, seed):
        s = bw.new_walk(P11, seed=seed)
        s.run(1)
        assert s.range_size == 2

    def test_mean_range_at_two_steps(self):
        # independent oracle: enumerate all weighted paths
        exact = sum(w * range_of(t) for w, t in iter_walk_paths((2, 2), 2))
        assert exact == Fraction(11, 4)
        r = bw.estimate_range_stats(P22, 2, 40000, 91)
        mean = r.sum_range / r.replicas
        se = 3 * 0.5 / np.sqrt(r.replicas)
        assert abs(mean - 2.75) < 4 * se

    def test_reproducible_trajectories(self):
        a = bw.new_walk(P22, seed=123).run(500, window=(0, 500))
        b = bw.new_walk(P22, seed=123).run(500, window=(0, 500))
        c = bw.new_walk(P22, seed=124).run(500, window=(0, 500))
        assert np.array_equal(a.trajectory, b.trajectory)
        assert not np.array_equal(a.trajectory, c.trajectory)

    def test_chained_runs_equal_single_run(self):
        a = bw.new_walk(P22, seed=3)
        a.run(250)
        a.run(250)
        b = bw.new_walk(P22, seed=3)
        b.run(500)
        assert a.position == b.position
        assert a.range_size == b.range_size
        assert a.visits == b.visits


class TestTrajectoryInvariants:
    """Exact per-step checks on a recorded trajectory, multi-block included."""

    @pytest.mark.parametrize("dims,env", [
        ((2, 2), None),
        ((1, 1), None),
        ((2, 1, 1), None),
        ((1, 1), Environment.finite({(0, 1): 2, (1, 0): 1})),
    ])
    def test_recorded_run_bookkeeping(self, dims, env):
        part = Partition(dims)
        env = env or Environment.empty()
        n = 3000
        s = bw.new_walk(part, env, seed=11)
        out = s.run(n, window=(0, n), record_fresh=True, record_returns=True)
        traj = out.trajectory
        assert traj.shape == (n + 1, part.d)
        # L1 increments of exactly 1
        diffs = np.abs(np.diff(traj, axis=0))
        assert (diffs.sum(axis=1) == 1).all()
        # replay the component rule independently
        visits = {tuple(traj[0]): 1}
        fresh_expected = []
        range_sizes = [1]
        for k in range(n):
            here = tuple(traj[k])
            total = visits[here] + env.pre_count_at(here)
            block = min(total, part.m)
            axis = int(np.nonzero(diffs[k])[0][0])
            assert part.block_of_axis(axis) == block, f"step {k}"
            if total == 1:
                fresh_expected.append(k)
            nxt = tuple(traj[k + 1])
            visits[nxt] = visits.get(nxt, 0) + 1
            range_sizes.append(len(visits))
        # recordings match the replay
        assert list(out.fresh_times) == fresh_expected
        origin = (0,) * part.d
        expected_returns = [k for k in range(1, n + 1) if tuple(traj[k]) == origin]
        assert list(out.return_times) == expected_returns
        # counters and the visit map match the replay
        assert s.range_size == range_sizes[-1]
        assert s.fresh_steps == len(fresh_expected)
        assert s.visits == visits
        assert sum(visits.values()) == n + 1
        # range is nondecreasing with unit jumps
        steps = np.diff(np.array(range_sizes))
        assert set(steps.tolist()) <= {0, 1}
        # bounding box equals trajectory extents
        assert s.bounding_box() == tuple(
            (int(traj[:, j].min()), int(traj[:, j].max())) for j in range(part.d))

    def test_block_projection_increments_are_uniform(self):
        n = 20000
        out = bw.new_walk(P22, seed=29).run(n, window=(0, n))
        traj = out.trajectory
        diffs = np.diff(traj, axis=0)
        for block, axes in ((0, (0, 1)), (1, (2, 3))):
            mask = np.abs(diffs[:, axes]).sum(axis=1) == 1
            sub = diffs[mask][:, axes]
            counts = Counter((int(a), int(b)) for a, b in sub)
            assert set(counts) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
            assert chisquare(list(counts.values())).pvalue > 1e-4


class TestTwoLawWalk:
    def test_identical_laws_make_plain_srw(self):
        law = StepLaw.nearest_neighbor(4)
        pos = mc_two_law_positions(law, law, 2, 40000, 31)
        # SRW on Z^4: P[S_2 = 0] = 1/8
        frac0 = np.count_nonzero((pos == 0).all(axis=1)) / len(pos)
        assert abs(frac0 - 0.125) < 4 * np.sqrt(0.125 * 0.875 / len(pos))

    def test_long_jump_law_support(self):
        mu1 = StepLaw.uniform([(2, 0), (-2, 0)])
        mu2 = StepLaw.uniform([(0, 1), (0, -1)])
        pos = mc_two_law_positions(mu1, mu2, 1, 4000, 37)
        counts = Counter(tuple(p) for p in pos)
        assert set(counts) == {(2, 0), (-2, 0)}
        assert chisquare(list(counts.values())).pvalue > 1e-4

    def test_block_laws_reproduce_staged_walk(self):
        mu1 = StepLaw.uniform([(1, 0, 0, 0), (-1, 0, 0, 0), (0, 1, 0, 0), (0, -1, 0, 0)])
        mu2 = StepLaw.uniform([(0, 0, 1, 0), (0, 0, -1, 0), (0, 0, 0, 1), (0, 0, 0, -1)])
        pos = mc_two_law_positions(mu1, mu2, 3, 100000, 41)
        exact = bw.exact_distribution(P22, 3)
        tv = float(exact.tv_from_counts(bw.counts_from_positions(pos)))
        assert tv < 0.02

    def test_dimension_mismatch(self):
        s = bw.new_walk(P22, seed=1)
        with pytest.raises(ConfigurationError):
            s.step_general(StepLaw.nearest_neighbor(2), StepLaw.nearest_neighbor(2))

    def test_single_step_bookkeeping(self):
        law = StepLaw.nearest_neighbor(4)
        s = bw.new_walk(P22, seed=8)
        s.step_general(law, law)
        assert s.time == 1 and s.range_size == 2 and s.fresh_steps == 1


class TestControlledWalk:
    def test_strategy_index_out_of_range(self):
        s = bw.new_walk(P11, seed=1)
        with pytest.raises(ConfigurationError):
            s.step_controlled(bw.AlwaysCoordinate(3))

    def test_zero_steps_range_one(self):
        score = bw.evaluate_strategy(bw.AlwaysCoordinate(1), 2, 0, 50, 3)
        assert score.mean_estimate.point == 1.0

    def test_always_first_matches_1d_srw_range(self):
        n = 2048
        score = bw.evaluate_strategy(bw.AlwaysCoordinate(1), 2, n, 3000, 19)
        oracle_mean, oracle_se = srw1d_expected_range(
            n, 3000, np.random.default_rng(5))
        se = np.hypot(score.mean_estimate.stderr, oracle_se)
        assert abs(score.mean_estimate.point - oracle_mean) < 4 * se

    def test_round_robin_range_scale_bounded(self):
        ratios = []
        for g, n in enumerate([2 ** 10, 2 ** 12, 2 ** 14, 2 ** 16]):
            score = bw.evaluate_strategy(bw.RoundRobin(), 2, n, 300, 23, grid_index=g)
            ratios.append(score.mean_estimate.point / (n / np.log(n)))
        assert max(ratios) / min(ratios) < 2.0

    def test_custom_python_strategy_runs(self):
        class PreferUnvisited(bw.Strategy):
            name = "prefer-unvisited"

            def choose(self, view):
                x = view.position
                for axis in range(view.d):
                    probe = list(x)
                    probe[axis] += 1
                    if view.visit_count(probe) == 0:
                        return axis + 1
                return view.time % view.d + 1

        score = bw.evaluate_strategy(PreferUnvisited(), 2, 64, 30, 3)
        assert score.mean_estimate.point > 1
        s = bw.new_walk(P11, seed=2)
        s.step_controlled(PreferUnvisited())
        assert s.time == 1

    def test_kernel_and_python_paths_agree_for_fixed_axis(self):
        # same forced axis, same walk stream: trajectories must coincide
        a = bw.new_walk(P11, seed=55)
        a.run_controlled(200, bw.AlwaysCoordinate(1))
        b = bw.new_walk(P11, seed=55)
        for _ in range(200):
            b.step_controlled(bw.AlwaysCoordinate(1))
        assert a.position == b.position and a.range_size == b.range_size


class TestBoundingBox:
    def test_time_zero_extents(self):
        s = bw.new_walk(P22, seed=1)
        assert s.bounding_box() == ((0, 0),) * 4

    def test_trapped_line_x_extent_zero(self):
        s = bw.new_walk(P11, Environment.line({0: 0}), seed=9)
        s.run(500)
        assert s.bounding_box()[0] == (0, 0)

    def test_mean_x_extent_three_steps(self):
        # exact oracle over the 8 weighted paths of the (1,1) walk at n=3
        exact = sum(w * extent(t, 0) for w, t in iter_walk_paths((1, 1), 3))
        assert exact == Fraction(7, 4)
        widths = []
        for seed in range(4000):
            s = bw.new_walk(P11, seed=seed)
            s.run(3)
            lo, hi = s.bounding_box()[0]
            widths.append(hi - lo)
        mean = np.mean(widths)
        assert abs(mean - 1.75) < 4 * np.std(widths) / np.sqrt(len(widths))


class TestOverflow:
    def test_two_law_step_overflow_raises(self):
        mu = StepLaw.uniform([(10, 10), (-10, -10)])
        s = bw.new_walk(P11, seed=1)
        s._pos[0] = COORD_LIMIT - 5
        s._pos[1] = -(COORD_LIMIT - 5)
        # either sign overflows one coordinate; never wraps silently
        with pytest.raises(CoordinateOverflowError):
            s.run_general(1, mu, mu)

    def test_forced_axis_overflow_raises(self):
        s = bw.new_walk(P11, seed=1)
        s._pos[0] = COORD_LIMIT
        with pytest.raises(CoordinateOverflowError):
            # from the boundary, some step in a long forced run must cross it
            s.run_controlled(400, bw.AlwaysCoordinate(1))


class TestClone:
    def test_clone_diverges_independently(self):
        s = bw.new_walk(P22, seed=77)
        s.run(100)
        c = s.clone()
        assert c.position == s.position
        s.run(50)
        assert c.time == 100 and s.time == 150
        c.run(50)
        assert c.position == s.position  # same stream state at the fork
