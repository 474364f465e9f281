import math

import numpy as np
import pytest

from builtin_examples import CURVE_VALUES, KNOTS
from factor_lang import build_factor_set_1d
from hvrfif_1d import (
    apply_F,
    build_system_1d,
    chaos_game_1d,
    contraction_report_1d,
    data_interpolant,
    hidden_bounding_box,
    make_grid_1d,
    make_L,
    rb_apply,
    solve_fixed_point_1d,
    theta_bound,
)
from models import MapSystemError, SampledField1D
from partition import connection_matrix_1d


def _brute_force_config_one(points=8193, sweeps=5000):
    """Plain operator iteration for the constant factors (1) with zero hidden data"""
    xs = np.array(KNOTS)
    ys = np.array(CURVE_VALUES)
    s = [0.3, 0.85, 0.8, 0.5]
    domains = [(0, 2), (0, 2), (2, 4), (2, 4)]
    grid = np.linspace(0.0, 1.0, points)
    region = np.minimum((grid * 4).astype(int), 3)
    u = np.empty_like(grid)
    g_u = np.empty_like(grid)
    h_x = np.empty_like(grid)
    factor = np.empty_like(grid)
    for i, (a, e) in enumerate(domains):
        idx = region == i
        d0, d1 = xs[a], xs[e]
        r0, r1 = xs[i], xs[i + 1]
        u[idx] = d0 + (grid[idx] - r0) * (d1 - d0) / (r1 - r0)
        g_u[idx] = np.interp(u[idx], [d0, d1], [ys[a], ys[e]])
        h_x[idx] = np.interp(grid[idx], [r0, r1], [ys[i], ys[i + 1]])
        factor[idx] = s[i]
    knots = np.searchsorted(grid, xs)
    f = np.interp(grid, xs, ys)
    for _ in range(sweeps):
        f = factor * (np.interp(u, grid, f) - g_u) + h_x
        f[knots] = ys
    return grid, f


class TestAffineMaps:
    def test_preserving_orientation(self):
        L = make_L((0.0, 0.5), (0.25, 0.5), 1)
        assert (L.a, L.b) == pytest.approx((0.5, 0.25))

    def test_reversing_orientation(self):
        L = make_L((0.0, 0.5), (0.25, 0.5), -1)
        assert (L.a, L.b) == pytest.approx((-0.5, 0.5))
        assert L(0.0) == pytest.approx(0.5)

    def test_expanding_map_rejected(self):
        with pytest.raises(MapSystemError, match="not a contraction"):
            make_L((0.0, 0.25), (0.0, 0.5))


class TestMapSystem:
    def test_zero_factors_reduce_to_region_lines(self, curve_system):
        sys = curve_system("1d-zero")
        out = apply_F(sys, 0, 0.25, [123.0, -7.0])
        np.testing.assert_allclose(out, [25.0, 0.0], atol=1e-12)

    def test_endpoint_condition(self, curve_system, curve_dataset):
        sys = curve_system("1d-config-1")
        np.testing.assert_allclose(sys.apply_F(0, 0.0, curve_dataset.ybar(0)), curve_dataset.ybar(0), atol=1e-12)
        np.testing.assert_allclose(sys.apply_F(0, 0.5, curve_dataset.ybar(2)), [30.0, 0.0], atol=1e-12)

    def test_hand_evaluated_point(self, curve_system):
        sys = curve_system("1d-config-1")
        # g(0.3) = 14, L(0.3) = 0.4, h(0.4) = 18, s = 0.85
        np.testing.assert_allclose(sys.apply_F(1, 0.3, [0.0, 0.0]), [6.1, 0.0], atol=1e-12)
        np.testing.assert_allclose(sys.q(1, 0.3), [6.1, 0.0], atol=1e-12)

    def test_point_outside_domain(self, curve_system):
        sys = curve_system("1d-config-1")
        with pytest.raises(MapSystemError, match="outside the domain"):
            sys.apply_F(2, 0.25, [0.0, 0.0])

    def test_W_lands_in_region(self, curve_system):
        sys = curve_system("1d-mild")
        x, _ = sys.W(3, np.linspace(0.5, 1.0, 11), np.zeros((11, 2)))
        assert np.all((x >= 0.75) & (x <= 1.0))

    def test_reversed_orientation_still_interpolates(self, curve_dataset):
        from partition import build_partition_1d

        partition = build_partition_1d(curve_dataset, [[0, 2], [2, 4]], [1, 1, 2, 2], [-1, 1, 1, -1])
        factors = build_factor_set_1d(curve_dataset.xs, {
            "s": [0.3] * 4, "s_prime": [0.1] * 4, "s_tilde": [0.2] * 4, "s_tilde_prime": [0.1] * 4,
        })
        sys = build_system_1d(curve_dataset, partition, factors)
        field = solve_fixed_point_1d(sys, grid_points=1025, tol=1e-10)
        assert field.converged
        np.testing.assert_allclose(field(curve_dataset.xs), curve_dataset.values, atol=1e-12)

    def test_uncertified_system_still_builds(self, curve_system, capsys):
        sys = curve_system("1d-config-3")
        assert sys.factors.offending()
        assert "uncertified" in capsys.readouterr().out


class TestOperator:
    def test_knots_pinned_for_any_input(self, curve_system, curve_dataset):
        sys = curve_system("1d-config-1")
        grid = make_grid_1d(curve_dataset.xs, 257)
        rng = np.random.default_rng(3)
        h = SampledField1D(grid=grid, values=rng.normal(size=(len(grid), 2)) * 100)
        out = rb_apply(sys, h)
        np.testing.assert_array_equal(out(curve_dataset.xs), curve_dataset.values)

    def test_zero_factors_give_linear_interpolant(self, curve_system, curve_dataset):
        sys = curve_system("1d-zero")
        grid = make_grid_1d(curve_dataset.xs, 257)
        h = SampledField1D(grid=grid, values=np.full((len(grid), 2), 5.0))
        out = rb_apply(sys, h)
        np.testing.assert_allclose(out.values, data_interpolant(curve_dataset, grid).values, atol=1e-12)

    def test_grid_contains_knots(self):
        grid = make_grid_1d([0.0, 0.3, 0.7, 1.0], 11)
        assert set([0.0, 0.3, 0.7, 1.0]) <= set(grid.tolist())
        assert np.all(np.diff(grid) > 0)

    def test_grid_too_small(self):
        with pytest.raises(ValueError, match="at least 10"):
            make_grid_1d(KNOTS, 9)


class TestSolver:
    def test_zero_factors(self, curve_system, curve_dataset):
        field = solve_fixed_point_1d(curve_system("1d-zero"), grid_points=4097, tol=1e-10)
        assert field.converged
        assert field.iterations <= 2
        expected = np.interp(field.grid, curve_dataset.xs, curve_dataset.ys)
        assert np.max(np.abs(field.values[:, 0] - expected)) <= 1e-12
        assert field(0.125)[0] == pytest.approx(25.0)

    def test_config_one_interpolates(self, curve_system):
        field = solve_fixed_point_1d(curve_system("1d-config-1"), grid_points=4097, tol=1e-10, max_iter=5000)
        assert field.converged
        np.testing.assert_array_equal(field(np.array(KNOTS))[:, 0], CURVE_VALUES)
        # preimage of 0.375 is the knot 0.25: 0.85 * (30 - 15) + 20
        assert field(0.375)[0] == pytest.approx(32.75, abs=1e-9)

    def test_config_one_matches_brute_force(self, curve_system):
        field = solve_fixed_point_1d(curve_system("1d-config-1"), grid_points=4097, tol=1e-10, max_iter=5000)
        grid, oracle = _brute_force_config_one()
        # even nodes of the 8193-point grid are nodes of the solver grid
        for node in (832, 3072, 4864, 6656, 8000):
            assert field(grid[node])[0] == pytest.approx(oracle[node], abs=1e-6)

    def test_projections(self, curve_system):
        field = solve_fixed_point_1d(curve_system("1d-mild"), grid_points=257)
        grid, f1 = field.hvrfif()
        _, f2 = field.hidden()
        assert len(grid) == len(f1) == len(f2)
        assert np.any(f2 != 0)

    def test_non_convergence_flagged(self, curve_system):
        field = solve_fixed_point_1d(curve_system("1d-config-1"), grid_points=257, tol=1e-12, max_iter=3)
        assert not field.converged
        assert field.iterations == 3

    def test_invalid_tolerance(self, curve_system):
        with pytest.raises(ValueError, match="tol"):
            solve_fixed_point_1d(curve_system("1d-zero"), tol=0.0)


class TestContractionReport:
    def test_config_one(self, curve_system):
        report = contraction_report_1d(curve_system("1d-config-1"))
        assert report.S_bar == pytest.approx(0.99)
        assert report.L_L == pytest.approx(0.5)
        assert report.L_S == 0.0
        assert report.certified

    def test_zero_factors(self, curve_system):
        report = contraction_report_1d(curve_system("1d-zero"))
        assert report.S_bar == 0.0
        assert report.certified
        assert report.theta() == pytest.approx(report.theta_max / 2)

    def test_config_three_uncertified(self, curve_system):
        report = contraction_report_1d(curve_system("1d-config-3"))
        assert 1.98 <= report.S_bar <= 2.0
        assert not report.certified
        assert not report.factor_sups_ok
        assert report.L_S > 0

    def test_serialises_without_infinities(self, curve_system):
        report = contraction_report_1d(curve_system("1d-zero"))
        assert '"bounds_mode":"estimated"' in report.model_dump_json()

    def test_theta_bound(self):
        assert theta_bound(0.5, 0.0, 10.0, 0.0) == math.inf
        assert theta_bound(0.5, 1.0, 2.0, 3.0) == pytest.approx(0.1)

    def test_bounding_box(self):
        lo, hi = hidden_bounding_box(np.array([[10.0, 0.0], [50.0, 0.0]]), 0.5)
        np.testing.assert_allclose(lo, [-10.0, -0.5])
        np.testing.assert_allclose(hi, [70.0, 0.5])


class TestChaosGame:
    def test_points_stay_in_interval(self, curve_system, partition_f1):
        sys = curve_system("1d-config-1")
        cloud = chaos_game_1d(sys, connection_matrix_1d(partition_f1), n_points=5000, burn_in=100, seed=1)
        assert cloud.points.shape == (4900, 3)
        assert np.all((cloud.points[:, 0] >= 0.0) & (cloud.points[:, 0] <= 1.0))

    def test_same_seed_same_cloud(self, curve_system, partition_f1):
        sys = curve_system("1d-config-1")
        M = connection_matrix_1d(partition_f1)
        a = chaos_game_1d(sys, M, n_points=2000, burn_in=10, seed=7)
        b = chaos_game_1d(sys, M, n_points=2000, burn_in=10, seed=7)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.regions, b.regions)

    def test_burn_in_must_leave_points(self, curve_system, partition_f1):
        with pytest.raises(ValueError, match="burn_in"):
            chaos_game_1d(curve_system("1d-zero"), connection_matrix_1d(partition_f1), n_points=10, burn_in=10)

    def test_mild_cloud_lies_on_solved_graph(self, curve_system, partition_f1):
        sys = curve_system("1d-mild")
        field = solve_fixed_point_1d(sys, grid_points=4097, tol=1e-10)
        cloud = chaos_game_1d(sys, connection_matrix_1d(partition_f1), n_points=200000, burn_in=1000, seed=0)
        gap = np.max(np.abs(cloud.points[:, 1] - field(cloud.points[:, 0])[:, 0]))
        assert gap <= 0.05 * (max(CURVE_VALUES) - min(CURVE_VALUES))
