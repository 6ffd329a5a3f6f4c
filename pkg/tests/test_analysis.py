import csv
import math

import numpy as np
import pytest

from salera.agnostic import mean_t, var_t
from salera.analysis import (
    CostCurve,
    MomentEstimate,
    argmin_J,
    cost_J,
    cost_T,
    cost_U,
    cost_curve,
    finite_diff_grad,
    gradient_check,
    moment_grid,
    monte_carlo_rt,
    write_cost_csv,
    write_moment_csv,
    zeta_grid,
)
from salera.nets import DenseNet
from salera.vectors import make_rng


class TestMonteCarloRt:
    def test_zero_steps_degenerate(self):
        est = monte_carlo_rt(0.1, 5, 0, n_reps=200, rng=make_rng(0))
        assert est.mean_est == 0.0
        assert est.var_est == 0.0

    def test_one_step_is_deterministic_up_to_rounding(self):
        # after one step the squared norm is alpha^2 exactly; the sampled
        # replicas only differ by unit-normalization rounding noise
        est = monte_carlo_rt(0.1, 10, 1, n_reps=500, rng=make_rng(1))
        assert est.mean_est == pytest.approx(0.01, rel=1e-12)
        assert est.var_est <= 1e-30

    def test_matches_closed_forms(self):
        est = monte_carlo_rt(0.1, 10, 2, n_reps=10_000, rng=make_rng(2))
        assert abs(est.mean_est - mean_t(0.1, 2)) <= 4.0 * est.stderr_mean
        assert abs(est.var_est / var_t(0.1, 10, 2) - 1.0) <= 0.10

    def test_fields_and_reproducibility(self):
        a = monte_carlo_rt(0.25, 4, 7, n_reps=300, rng=make_rng(5))
        b = monte_carlo_rt(0.25, 4, 7, n_reps=300, rng=make_rng(5))
        assert isinstance(a, MomentEstimate)
        assert (a.alpha, a.d, a.t, a.n_reps) == (0.25, 4, 7, 300)
        assert (a.mean_est, a.var_est, a.stderr_mean) == (b.mean_est, b.var_est, b.stderr_mean)
        assert a.stderr_mean > 0.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            monte_carlo_rt(0.0, 5, 2, 200, make_rng(0))
        with pytest.raises(ValueError):
            monte_carlo_rt(0.1, 0, 2, 200, make_rng(0))
        with pytest.raises(ValueError):
            monte_carlo_rt(0.1, 5, -1, 200, make_rng(0))
        with pytest.raises(ValueError):
            monte_carlo_rt(0.1, 5, 2, 99, make_rng(0))


class TestMomentGrid:
    def test_covers_product_and_pairs_oracles(self):
        rows = moment_grid((0.1, 0.25), (4, 8), (2, 3), n_reps=200, seed=0)
        assert len(rows) == 8
        combos = {(est.alpha, est.d, est.t) for est, _, _ in rows}
        assert combos == {(a, d, t) for a in (0.1, 0.25) for d in (4, 8) for t in (2, 3)}
        for est, mean_c, var_c in rows:
            assert mean_c == mean_t(est.alpha, est.t)
            assert var_c == var_t(est.alpha, est.d, est.t)

    def test_deterministic_in_seed(self):
        a = moment_grid((0.1,), (4,), (3,), n_reps=200, seed=9)
        b = moment_grid((0.1,), (4,), (3,), n_reps=200, seed=9)
        assert a[0][0].mean_est == b[0][0].mean_est

    def test_csv_round_trip(self, tmp_path):
        rows = moment_grid((0.1,), (4,), (2, 3), n_reps=200, seed=1)
        path = tmp_path / "moments.csv"
        write_moment_csv(rows, path)
        with open(path, newline="") as fh:
            records = list(csv.DictReader(fh))
        assert len(records) == 2
        first = records[0]
        est = rows[0][0]
        assert float(first["mean_est"]) == est.mean_est
        assert float(first["var_est"]) == est.var_est
        assert int(first["n_reps"]) == 200


class TestFiniteDiff:
    def test_exact_on_quadratic(self):
        def f(theta):
            return theta[0] ** 2 + 3.0 * theta[1]

        grad = finite_diff_grad(f, np.array([1.5, -0.5]))
        assert grad[0] == pytest.approx(3.0, abs=1e-8)
        assert grad[1] == pytest.approx(3.0, abs=1e-8)

    def test_gradient_check_small_networks(self):
        for sizes in ((12, 10), (9, 8, 6, 5)):
            for seed in (0, 1, 2):
                rel_err = gradient_check(DenseNet(sizes), make_rng(seed))
                assert rel_err < 1e-6


class TestCostModel:
    def test_detection_cost_pinned(self):
        assert cost_T(0.1) == pytest.approx(1.9314718055994529, rel=1e-15)
        assert cost_T(0.1) == pytest.approx((math.log(2.0) - 0.5) / 0.1, rel=1e-15)
        with pytest.raises(ValueError):
            cost_T(0.0)

    def test_overshoot_cost(self):
        assert cost_U(2.0, 0.1) == 0.0  # dividing by 2 lands exactly at the edge
        assert cost_U(4.0, 0.1) == pytest.approx(0.7671320486001367, rel=1e-12)
        assert cost_U(4.0, 0.05) == pytest.approx(2.0 * cost_U(4.0, 0.1), rel=1e-12)
        with pytest.raises(ValueError):
            cost_U(1.9, 0.1)

    def test_total_cost_pinned_values(self):
        assert cost_J(2.0, 0.01) == pytest.approx(0.20757413096883492, rel=1e-12)
        assert cost_J(4.0, 0.01) == pytest.approx(0.16154933053107956, rel=1e-12)
        assert cost_J(4.0, 0.01) < cost_J(2.0, 0.01)

    def test_total_cost_domain(self):
        with pytest.raises(ValueError):
            cost_J(1.0, 0.01)
        with pytest.raises(ValueError):
            cost_J(2.0, 0.0)
        with pytest.raises(ValueError):
            cost_J(2.0, -1.0)

    def test_grid(self):
        grid = zeta_grid()
        assert grid[0] == pytest.approx(1.05)
        assert grid[-1] == pytest.approx(20.0)
        assert len(grid) == 1896
        assert np.allclose(np.diff(grid), 0.01, atol=1e-12)

    def test_argmin_location(self):
        for c_const in (1e-3, 1e-2, 1e-1):
            zeta_star, j_star = argmin_J(c_const)
            assert 3.0 < zeta_star < 5.0
            assert j_star <= cost_J(2.0, c_const)
            # refinement never does worse than the raw grid
            grid = zeta_grid()
            assert j_star <= min(cost_J(z, c_const) for z in grid) + 1e-15

    def test_argmin_moves_right_as_divisions_get_pricier(self):
        stars = [argmin_J(c)[0] for c in (1e-3, 1e-2, 1e-1)]
        assert stars[0] < stars[1] < stars[2]


class TestCostCurve:
    def test_curve_fields(self):
        curve = cost_curve(0.01)
        assert isinstance(curve, CostCurve)
        assert curve.c_const == 0.01
        assert len(curve.zetas) == len(curve.values) == 1896
        # the refined minimum sits at or just below the best grid value
        assert min(curve.values) - 1e-4 < curve.j_star <= min(curve.values) + 1e-15
        assert 3.0 < curve.zeta_star < 5.0

    def test_csv_round_trip(self, tmp_path):
        curve = cost_curve(0.01)
        path = tmp_path / "zeta.csv"
        write_cost_csv(curve, path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header == ["zeta", "J"]
        assert len(rows) == 1896
        assert float(rows[0][0]) == curve.zetas[0]
        assert float(rows[7][1]) == curve.values[7]
