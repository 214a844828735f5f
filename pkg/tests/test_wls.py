import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwbnlos.wls import (MEASUREMENT, RESIDUAL, PositionEstimate, SolverConfig, WlsProblem,
                         grid_search_oracle, objective, residuals_and_jacobian, solve,
                         solve_trajectory, weights_from_probabilities)

ANCHORS = [(0, 0), (10, 0), (0, 10)]
EXACT = [5.0, math.sqrt(65), math.sqrt(45)]


def problem(ranges=EXACT, weights=(1, 1, 1), guess=(1, 1), anchors=ANCHORS, bounds=None):
    return WlsProblem(anchors, ranges, weights, guess, bounds)


def term_sum(x, p, mode):
    total = 0.0
    for (ax, ay), d, b in zip(p.anchors, p.ranges, p.weights):
        dist = math.hypot(x[0] - ax, x[1] - ay)
        total += b * (d - dist) ** 2 if mode == RESIDUAL else (b * d - dist) ** 2
    return total


def random_problem(g, n=5, size=20.0):
    anchors = g.uniform(0, size, (n, 2))
    truth = g.uniform(2, size - 2, 2)
    d = np.hypot(*(anchors - truth).T)
    nlos = g.uniform(size=n) < 0.4
    ranges = d + g.normal(0, 0.05, n) + nlos * g.uniform(0.2, 2.5, n)
    weights = g.uniform(0.05, 1, n)
    return WlsProblem(anchors, np.maximum(ranges, 0), weights, truth + g.normal(0, 0.5, 2)), truth


class TestObjective:
    def test_zero_at_truth(self):
        assert objective((3, 4), problem()) == pytest.approx(0, abs=1e-24)

    def test_weighted_bias(self):
        p = problem(ranges=[7.0, EXACT[1], EXACT[2]], weights=[0.05, 1, 1])
        assert objective((3, 4), p) == pytest.approx(0.2, abs=1e-12)

    def test_term_by_term(self, rng):
        for mode in (RESIDUAL, MEASUREMENT):
            for _ in range(20):
                p, _ = random_problem(rng)
                x = rng.uniform(-5, 25, 2)
                assert objective(x, p, mode) == pytest.approx(term_sum(x, p, mode), rel=1e-12, abs=1e-12)

    def test_at_anchor_is_finite(self):
        assert math.isfinite(objective((0, 0), problem()))


class TestJacobian:
    def test_unit_direction(self):
        p = WlsProblem([(0, 0)], [5.0], [1.0], (0, 0))
        r, J = residuals_and_jacobian((3, 4), p)
        assert r[0] == pytest.approx(0, abs=1e-15)
        np.testing.assert_allclose(J[0], [-0.6, -0.8])

    def test_sqrt_weight(self):
        p1 = WlsProblem([(0, 0)], [6.0], [1.0], (0, 0))
        p2 = WlsProblem([(0, 0)], [6.0], [0.25], (0, 0))
        assert residuals_and_jacobian((3, 4), p2)[0][0] == pytest.approx(0.5 * residuals_and_jacobian((3, 4), p1)[0][0])

    def test_anchor_coincident_row_is_zero(self):
        r, J = residuals_and_jacobian((0, 0), problem())
        np.testing.assert_array_equal(J[0], [0, 0])
        assert np.all(np.isfinite(r))

    def test_finite_differences(self, rng):
        h = 1e-6
        worst = 0.0
        for mode in (RESIDUAL, MEASUREMENT):
            for _ in range(50):
                p, _ = random_problem(rng)
                x = rng.uniform(0, 20, 2)
                if np.min(np.hypot(*(p.anchors - x).T)) < 0.1:
                    continue
                _, J = residuals_and_jacobian(x, p, mode)
                for k in range(2):
                    e = np.zeros(2)
                    e[k] = h
                    num = (residuals_and_jacobian(x + e, p, mode)[0] - residuals_and_jacobian(x - e, p, mode)[0]) / (2 * h)
                    worst = max(worst, np.max(np.abs(num - J[:, k]) / np.maximum(np.abs(J[:, k]), 1e-8)))
        assert worst < 1e-6


class TestSolve:
    def test_exact_fix(self):
        est = solve(problem())
        assert np.hypot(*(est.position - (3, 4))) < 1e-6
        assert est.converged

    def test_downweighted_outlier_near_truth(self):
        # anchor index 1 is (10, 0)
        p = problem(ranges=[EXACT[0], 7.0, EXACT[2]], weights=[1, 0.05, 1])
        est = solve(p)
        best, best_val = grid_search_oracle(p, (0, 0, 12, 12), 0.01)
        assert np.hypot(*(est.position - (3, 4))) < 0.15
        assert np.hypot(*(best - (3, 4))) < 0.15
        assert est.cost <= best_val
        assert np.hypot(*(est.position - best)) < 0.02

    def test_uniform_weights_do_not_move_argmin(self):
        p1 = problem(ranges=[5.3, 8.2, 6.5])
        p2 = problem(ranges=[5.3, 8.2, 6.5], weights=[0.7] * 3)
        np.testing.assert_allclose(solve(p1).position, solve(p2).position, atol=1e-9)

    def test_under_determined(self):
        with pytest.raises(ValueError, match="under-determined"):
            solve(WlsProblem([(0, 0), (1, 0)], [1, 1], [1, 1], (0, 0)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            problem(guess=(np.nan, 0))
        with pytest.raises(ValueError):
            problem(ranges=[np.inf, 1, 1])

    def test_cost_monotone_and_below_start(self, rng):
        for _ in range(30):
            p, _ = random_problem(rng)
            est = solve(p)
            h = est.cost_history
            assert all(b <= a for a, b in zip(h, h[1:]))
            assert est.cost <= objective(p.initial_guess, p)
            assert est.cost >= 0

    def test_converged_implies_small_gradient(self, rng):
        cfg = SolverConfig()
        for _ in range(30):
            p, _ = random_problem(rng)
            est = solve(p, cfg)
            if est.converged:
                r, J = residuals_and_jacobian(est.position, p)
                assert np.max(np.abs(J.T @ r)) / p.weights.sum() < cfg.gradient_tol

    def test_bounds_respected(self):
        p = problem(ranges=[5, math.sqrt(65), math.sqrt(45)], guess=(1, 1), bounds=(0, 0, 2, 2))
        est = solve(p)
        assert 0 <= est.position[0] <= 2 and 0 <= est.position[1] <= 2
        assert est.cost <= objective((1, 1), p)

    def test_measurement_mode(self):
        p = problem(weights=[0.9, 1, 1])
        est = solve(p, SolverConfig(weighting_mode=MEASUREMENT))
        best, val = grid_search_oracle(p, (0, 0, 12, 12), 0.01, MEASUREMENT)
        assert est.cost <= val
        assert np.hypot(*(est.position - best)) < 0.02

    def test_permutation_invariance(self, rng):
        for _ in range(20):
            p, _ = random_problem(rng)
            perm = rng.permutation(5)
            q = WlsProblem(p.anchors[perm], p.ranges[perm], p.weights[perm], p.initial_guess)
            np.testing.assert_allclose(solve(p).position, solve(q).position, atol=1e-12, rtol=0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 100), st.integers(0, 10_000))
    def test_uniform_weight_scaling_property(self, k, seed):
        p, _ = random_problem(np.random.default_rng(seed))
        q = WlsProblem(p.anchors, p.ranges, p.weights * k, p.initial_guess)
        np.testing.assert_allclose(solve(p).position, solve(q).position, atol=1e-9, rtol=0)

    def test_zero_residual_from_any_nearby_guess(self, rng):
        anchors = np.array([[0, 0], [12, 0], [6, 12]], dtype=float)
        for _ in range(50):
            truth = rng.uniform(3, 9, 2)
            d = np.hypot(*(anchors - truth).T)
            ang = rng.uniform(0, 2 * np.pi)
            guess = truth + rng.uniform(0, 5) * np.array([np.cos(ang), np.sin(ang)])
            est = solve(WlsProblem(anchors, d, np.ones(3), guess, (0, 0, 12, 12)))
            assert np.hypot(*(est.position - truth)) < 1e-6


class TestGridOracle:
    def test_exact_on_grid(self):
        best, val = grid_search_oracle(problem(), (0, 0, 12, 12), 0.1)
        np.testing.assert_allclose(best, (3.0, 4.0), atol=1e-12)
        assert val == pytest.approx(0, abs=1e-20)

    def test_uniform_scaling_same_point(self):
        p1 = problem(ranges=[5.3, 8.2, 6.5])
        p2 = problem(ranges=[5.3, 8.2, 6.5], weights=[0.5] * 3)
        assert np.array_equal(grid_search_oracle(p1, (0, 0, 12, 12), 0.05)[0],
                              grid_search_oracle(p2, (0, 0, 12, 12), 0.05)[0])

    def test_tie_break_smallest_x_then_y(self):
        # symmetric about x = 5 and y = 5: four equal minima
        anchors = [(5, 0), (5, 10), (0, 5), (10, 5)]
        p = WlsProblem(anchors, [3, 3, 3, 3], [1, 1, 1, 1], (5, 5))
        best, _ = grid_search_oracle(p, (0, 0, 10, 10), 1.0)
        vals = {(x, y): objective((x, y), p) for x in range(11) for y in range(11)}
        m = min(vals.values())
        assert tuple(best) == min(k for k, v in vals.items() if v == m)

    def test_matches_objective(self, rng):
        p, _ = random_problem(rng)
        best, val = grid_search_oracle(p, (0, 0, 20, 20), 0.25)
        assert val == pytest.approx(objective(best, p), rel=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            grid_search_oracle(problem(), (0, 0, 1, 1), 0)
        with pytest.raises(ValueError):
            grid_search_oracle(problem(), (1, 0, 0, 1), 0.1)

    def test_solver_beats_oracle_on_random_instances(self, rng):
        for _ in range(10):
            p, _ = random_problem(rng)
            _, val = grid_search_oracle(p, (0, 0, 20, 20), 0.01)
            assert solve(p).cost <= val


class TestTrajectory:
    def test_single_exact(self):
        est = solve_trajectory([problem(guess=(0, 0))], (9, 9))
        assert np.hypot(*(est[0].position - (3, 4))) < 1e-6

    def test_static_fixed_point(self):
        ests = solve_trajectory([problem()] * 10, (2, 2))
        for e in ests[1:]:
            np.testing.assert_array_equal(e.position, ests[0].position)

    def test_moving_noise_free(self):
        anchors = np.array([[0, 0], [20, 0], [20, 20], [0, 20], [10, 21]], dtype=float)
        truths = [np.array([2 + 0.5 * k, 5 + 0.2 * k]) for k in range(30)]
        probs = [WlsProblem(anchors, np.hypot(*(anchors - t).T), np.ones(5), (0, 0), (0, 0, 20, 21))
                 for t in truths]
        ests = solve_trajectory(probs, truths[0])
        for e, t in zip(ests, truths):
            assert np.hypot(*(e.position - t)) < 1e-4
        for k in (0, 15, 29):
            best, _ = grid_search_oracle(probs[k], (0, 0, 20, 21), 0.1)
            assert np.hypot(*(ests[k].position - best)) < 0.1

    def test_warm_start_chain(self):
        seen = []
        import uwbnlos.wls as wls
        orig = wls.solve

        def spy(p, cfg):
            seen.append(p.initial_guess.copy())
            return orig(p, cfg)

        wls.solve = spy
        try:
            ests = solve_trajectory([problem(), problem(ranges=[5.2, 8.0, 6.8])], (1, 2))
        finally:
            wls.solve = orig
        np.testing.assert_array_equal(seen[0], (1, 2))
        np.testing.assert_array_equal(seen[1], ests[0].position)

    def test_underdetermined_carries_forward(self):
        short = WlsProblem([(0, 0), (10, 0)], [5, 5], [1, 1], (0, 0))
        ests = solve_trajectory([problem(), short, None], (1, 1))
        np.testing.assert_array_equal(ests[1].position, ests[0].position)
        assert not ests[1].converged and not ests[2].converged
        np.testing.assert_array_equal(ests[2].position, ests[0].position)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            solve_trajectory([], (0, 0))


class TestWeights:
    def test_pass_through_and_floor(self):
        np.testing.assert_array_equal(weights_from_probabilities([0.9, 0.001], 0.05), [0.9, 0.05])

    def test_nwls_is_unweighted(self):
        p = problem(ranges=[5.3, 8.2, 6.5])
        unweighted = sum((d - math.hypot(3.1 - ax, 4.2 - ay)) ** 2 for (ax, ay), d in zip(ANCHORS, p.ranges))
        assert objective((3.1, 4.2), p) == pytest.approx(unweighted, rel=1e-15)

    @given(st.lists(st.floats(1e-9, 1 - 1e-9), min_size=1, max_size=20))
    def test_never_below_floor(self, ps):
        w = weights_from_probabilities(ps, 0.05)
        assert np.all(w >= 0.05) and np.all(w <= 1)
