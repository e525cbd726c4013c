import math

import numpy as np
import pytest

from wentzell.geometry import (
    GeometryError,
    GridSizeError,
    NonPositiveRadiusError,
    MetricFamily,
    breathing,
    build_grid,
    static_flat,
    tabulated,
    weights_at,
)


def test_grid_spacings():
    g = build_grid(3, 4)
    assert g.dx == 0.5
    assert g.dtheta == pytest.approx(math.pi / 2, abs=0)
    assert g.shape == (3, 4)


def test_grid_counts():
    g = build_grid(11, 16)
    assert g.size == 176
    assert g.n_boundary == 32
    assert sorted(g.boundary_index() // 16) == [0] * 16 + [10] * 16


@pytest.mark.parametrize("n_x, n_theta", [(2, 4), (3, 3), (0, 8)])
def test_grid_too_small(n_x, n_theta):
    with pytest.raises(GridSizeError):
        build_grid(n_x, n_theta)


def test_theta_is_periodic():
    g = build_grid(5, 8)
    assert g.wrap(8) == 0 and g.wrap(-1) == 7
    assert g.theta[-1] + g.dtheta == pytest.approx(2 * math.pi)


def test_unit_cylinder_area():
    g = build_grid(7, 12)
    w = weights_at(0.3, g, static_flat())
    assert abs(w.bulk_area - 2 * math.pi) <= 1e-12
    for length in w.boundary_lengths:
        assert abs(length - 2 * math.pi) <= 1e-12


def test_linear_radius_area_is_three_pi():
    # r = 1 + t x at t = 1; the half-cell rule is exact on linear profiles
    m = MetricFamily(r=lambda t, x: 1.0 + t * x, t_max=1.0)
    for n in (3, 9, 33):
        w = weights_at(1.0, build_grid(n, 8), m)
        assert abs(w.bulk_area - 3 * math.pi) <= 1e-12


def test_area_converges_second_order():
    m = MetricFamily(r=lambda t, x: np.exp(x), t_max=1.0)
    exact = 2 * math.pi * (math.e - 1)
    errs = [abs(weights_at(0, build_grid(n + 1, 8), m).bulk_area - exact) for n in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(rates - 2) < 0.05)


def test_weights_positive_and_boundary_half_cells():
    g = build_grid(6, 8)
    w = weights_at(0.25, g, breathing(0.3))
    assert np.all(w.w_bulk > 0) and np.all(w.w_boundary > 0)
    r0 = breathing(0.3).radius(0.25, np.array([0.0]))[0]
    assert np.allclose(w.w_bulk[0], r0 * g.dx / 2 * g.dtheta)


def test_nonpositive_radius():
    m = MetricFamily(r=lambda t, x: 0.5 - x, t_max=1.0)
    with pytest.raises(NonPositiveRadiusError):
        weights_at(0.0, build_grid(5, 4), m)


def test_time_outside_horizon():
    with pytest.raises(GeometryError):
        weights_at(2.0, build_grid(5, 4), static_flat(t_max=1.0))


def test_weights_lipschitz_in_time():
    m = breathing(0.3, omega=2 * math.pi)
    g = build_grid(9, 8)
    bound = max(np.max(np.abs(m.radius_t(t, g.x))) for t in np.linspace(0, 1, 50))
    for t in np.linspace(0.0, 0.9, 10):
        h = 1e-3
        dw = np.abs(weights_at(t + h, g, m).w_bulk - weights_at(t, g, m).w_bulk) / h
        cell = np.outer(g.cell_widths * g.dtheta, np.ones(g.n_theta))
        assert np.all(dw <= bound * cell * (1 + 1e-6) + 1e-12)


def test_finite_difference_derivatives_match_analytic():
    m = breathing(0.3, omega=3.0)
    fd = MetricFamily(r=m.r, t_max=1.0)
    x = np.linspace(0, 1, 7)
    assert np.allclose(fd.radius_t(0.4, x), m.radius_t(0.4, x), atol=1e-8)
    assert np.allclose(fd.radius_x(0.4, x), m.radius_x(0.4, x), atol=1e-8)


def test_tabulated_reproduces_cubic_samples():
    ts = np.linspace(0, 1, 6)
    xs = np.linspace(0, 1, 5)
    vals = 1.0 + 0.2 * np.outer(ts, xs)
    m = tabulated(ts, xs, vals)
    assert m.radius(0.37, np.array([0.5]))[0] == pytest.approx(1.0 + 0.2 * 0.37 * 0.5, abs=1e-12)
    assert m.radius_x(0.5, np.array([0.3]))[0] == pytest.approx(0.1, abs=1e-10)
    assert not m.frozen


def test_tabulated_rejects_bad_shape():
    with pytest.raises(GeometryError):
        tabulated([0, 1, 2, 3], [0, 1, 2, 3], np.ones((3, 4)))


def test_breathing_zero_amplitude_is_frozen():
    assert breathing(0.0).frozen
    assert not breathing(0.1).frozen
