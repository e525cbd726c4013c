import math

import numpy as np
import pytest

from wentzell.geometry import build_grid, static_flat, weights_at
from wentzell.nonlinearity import (
    ZERO,
    NonFiniteError,
    NonlinearTerm,
    critical_exponents,
    evaluate,
    from_registry,
    lipschitz_constant,
    modulated,
    nodal_radius,
    power,
    validate_growth,
)
from wentzell.operators import StateVector, norm, random_state


def test_critical_exponents():
    assert critical_exponents(2) == (math.inf, math.inf)
    assert critical_exponents(3) == (6.0, math.inf)
    assert critical_exponents(4) == (4.0, 6.0)


def test_growth_examples():
    assert validate_growth(3, 5, n=2).ok
    rep = validate_growth(4, 1, n=3)
    assert not rep.ok and "C/2 = 3" in rep.violations[0]
    assert not validate_growth(0.5, 1, n=2).ok
    assert "alpha" in validate_growth(0.5, 1, n=5).violations[0]


def test_evaluate_examples(grid8):
    assert np.all(evaluate(power(3), 0, StateVector.zeros(grid8), grid8).u == 0)
    X = StateVector.constant(grid8, 2.0)
    assert np.allclose(evaluate(power(3), 0, X, grid8).u, 8.0)
    Y = StateVector.constant(grid8, -2.0)
    out = evaluate(power(2), 0, Y, grid8)
    assert np.allclose(out.u, -4.0) and np.allclose(out.v, -4.0)


def test_evaluate_boundary_uses_its_own_exponent(grid8):
    term = power(2, P=1.0, beta=3, P_b=0.5)
    out = evaluate(term, 0, StateVector.constant(grid8, 2.0), grid8)
    assert np.allclose(out.u, 4.0) and np.allclose(out.v, 4.0)


def test_growth_bound_nodewise(grid8, rng):
    X = random_state(grid8, rng) * 5
    out = evaluate(power(3, P=-1.5), 0, X, grid8)
    assert np.all(np.abs(out.u) <= 1.5 * (1 + np.abs(X.u) ** 3))


def test_overflow_raises(grid8):
    with pytest.raises(NonFiniteError):
        evaluate(power(5), 0, StateVector.constant(grid8, 1e200), grid8)


def test_time_continuity(grid8, rng):
    term = power(3, P=modulated(1.0, 0.5, 7.0))
    X = random_state(grid8, rng)
    mods = [np.max(np.abs(evaluate(term, 0.3 + h, X, grid8).u - evaluate(term, 0.3, X, grid8).u))
            for h in (1e-2, 1e-3, 1e-4)]
    assert mods[0] > mods[1] > mods[2]


def test_lipschitz_examples(grid8, flat):
    assert lipschitz_constant(power(1), 1.0, 7.0, grid8, flat) == 1.0
    assert lipschitz_constant(ZERO, 1.0, 7.0, grid8, flat) == 0.0
    rho = math.sqrt(weights_at(0, grid8, flat).mass.min())  # makes rho_node = 1
    assert nodal_radius(rho, grid8, flat) == pytest.approx(1.0, rel=1e-14)
    assert lipschitz_constant(power(2), 0.5, rho, grid8, flat) == pytest.approx(4.0, rel=1e-14)


@pytest.mark.parametrize("term", [power(2), power(3, P=-1.0), power(2, beta=4, P_b=2.0)])
def test_lipschitz_certificate(term, grid8, flat, rng):
    rho = 0.8
    L = lipschitz_constant(term, 0.5, rho, grid8, flat)
    w = weights_at(0, grid8, flat)
    for _ in range(1000):
        X, Y = random_state(grid8, rng), random_state(grid8, rng)
        X = X * (rho * rng.uniform() / norm(X, w))
        Y = Y * (rho * rng.uniform() / norm(Y, w))
        d = norm(evaluate(term, 0, X, grid8) - evaluate(term, 0, Y, grid8), w)
        assert d <= L * norm(X - Y, w) * (1 + 1e-12)


def test_custom_lipschitz_is_upper_estimate(grid8, flat, rng):
    term = from_registry("saturating")
    L = lipschitz_constant(term, 0.5, 1.0, grid8, flat)
    assert 1.0 <= L <= 2.5  # true constant is 1; safety factor 2
    w = weights_at(0, grid8, flat)
    for _ in range(200):
        X, Y = random_state(grid8, rng) * 0.1, random_state(grid8, rng) * 0.1
        assert norm(evaluate(term, 0, X, grid8) - evaluate(term, 0, Y, grid8), w) <= L * norm(X - Y, w)


def test_vanishing_at_zero(grid8):
    assert power(3).vanishes_at_zero(grid8)
    assert from_registry("sine").vanishes_at_zero(grid8)
    assert not from_registry("forced-cubic").vanishes_at_zero(grid8)


def test_invalid_terms():
    with pytest.raises(ValueError):
        power(0.5)
    with pytest.raises(ValueError):
        NonlinearTerm(kind="custom")
    with pytest.raises(KeyError):
        from_registry("nope")


def test_gauge_covariance(grid8, rng):
    X = random_state(grid8, rng)
    phase = np.exp(0.7j)
    a = evaluate(power(3), 0, X * phase, grid8)
    b = evaluate(power(3), 0, X, grid8) * phase
    assert np.allclose(a.u, b.u, atol=1e-13)
