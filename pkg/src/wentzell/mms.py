"""Manufactured smooth solutions for convergence studies.

The exact solution ``u(t, x, theta) = a(t) phi(x, theta)`` (with ``v`` its trace)
is prescribed, and the forcing pair is whatever makes it solve the coupled
system on the warped cylinder::

    F1 = u_t - kappa (u_xx + (r_x / r) u_x + u_thth / r^2)
    F2 = v_t - kappa (v_thth / r^2 - d_nu u)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import linear_evolve
from .geometry import Grid, MetricFamily, build_grid, weights_at
from .operators import StateVector, assemble_wentzell_operator, norm


def _phi(x, th):
    return np.cos(np.pi * x) + x**2 * np.cos(th) + x * np.sin(2 * th)


def _phi_x(x, th):
    return -np.pi * np.sin(np.pi * x) + 2 * x * np.cos(th) + np.sin(2 * th)


def _phi_xx(x, th):
    return -np.pi**2 * np.cos(np.pi * x) + 2 * np.cos(th)


def _phi_thth(x, th):
    return -x**2 * np.cos(th) - 4 * x * np.sin(2 * th)


@dataclass(frozen=True)
class ManufacturedSolution:
    metric: MetricFamily
    kappa: complex = 1.0
    decay: float = 1.0
    freq: float = 3.0

    def amplitude(self, t: float) -> complex:
        return np.exp(-self.decay * t) * (1.0 + 0.5j * np.sin(self.freq * t))

    def amplitude_t(self, t: float) -> complex:
        a = np.exp(-self.decay * t)
        return -self.decay * self.amplitude(t) + a * 0.5j * self.freq * np.cos(self.freq * t)

    def exact(self, t: float, grid: Grid) -> StateVector:
        X, TH = grid.mesh()
        return StateVector.from_bulk(self.amplitude(t) * _phi(X, TH))

    def laplacian(self, t: float, x, th):
        r = self.metric.radius(t, x)
        rx = self.metric.radius_x(t, x)
        return _phi_xx(x, th) + rx / r * _phi_x(x, th) + _phi_thth(x, th) / r**2

    def forcing(self, grid: Grid):
        X, TH = grid.mesh()
        xb = np.array([[0.0], [1.0]])
        thb = grid.theta[None, :]
        outward = np.array([[-1.0], [1.0]])
        k = complex(self.kappa)

        def F(t: float) -> StateVector:
            a, at = self.amplitude(t), self.amplitude_t(t)
            f1 = at * _phi(X, TH) - k * a * self.laplacian(t, X, TH)
            rb = self.metric.radius(t, xb)
            lap_b = _phi_thth(xb, thb) / rb**2
            f2 = at * _phi(xb, thb) - k * a * (lap_b - outward * _phi_x(xb, thb))
            return StateVector(f1, f2)

        return F

    def discrete_forcing(self, grid: Grid):
        """Forcing for which the nodal samples of the exact solution solve the semi-discrete system.

        Removes spatial truncation error entirely, so the remaining error is
        pure time-stepping error.
        """
        X, TH = grid.mesh()
        phi = _phi(X, TH)
        k = complex(self.kappa)

        def F(t: float) -> StateVector:
            op = assemble_wentzell_operator(t, grid, self.metric)
            return StateVector.from_bulk(self.amplitude_t(t) * phi - k * self.amplitude(t) * op.apply(phi))

        return F


def solve_manufactured(sol: ManufacturedSolution, grid: Grid, dt: float, T: float,
                       discrete: bool = False) -> StateVector:
    X0 = sol.exact(0.0, grid)
    F = sol.discrete_forcing(grid) if discrete else sol.forcing(grid)
    traj = linear_evolve(sol.kappa, X0, F, T, dt, grid, sol.metric)
    if traj.status != "completed":
        raise RuntimeError(f"manufactured run failed: {traj.reason}")
    return traj.final


def grid_for(n: int) -> Grid:
    """Grid with ``dx = 1/n`` and ``dtheta = 2 pi / n`` (both halve as ``n`` doubles)."""
    return build_grid(n + 1, n)


def spatial_errors(sol: ManufacturedSolution, ns, dt: float = 1e-3, T: float = 0.2) -> np.ndarray:
    """Relative ``U``-norm error at ``T`` against the exact solution on each grid."""
    errs = []
    for n in ns:
        g = grid_for(n)
        w = weights_at(T, g, sol.metric)
        exact = sol.exact(T, g)
        errs.append(norm(solve_manufactured(sol, g, dt, T) - exact, w) / norm(exact, w))
    return np.array(errs)


def temporal_errors(sol: ManufacturedSolution, dts, n: int = 16, T: float = 0.5) -> np.ndarray:
    """Relative error at ``T`` under the discretely consistent forcing (time error only)."""
    g = grid_for(n)
    w = weights_at(T, g, sol.metric)
    exact = sol.exact(T, g)
    return np.array([norm(solve_manufactured(sol, g, dt, T, discrete=True) - exact, w) / norm(exact, w)
                     for dt in dts])


def fit_order(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    if len(h) < 2 or np.any(err <= 0):
        raise ValueError("order fit needs at least two positive errors")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])
