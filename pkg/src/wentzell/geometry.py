"""Cylinder grid, time-dependent warped metric and quadrature weights.

The manifold is ``M = [0, 1] x S^1`` with metric ``dx^2 + r(t, x)^2 dtheta^2``.
Nodes sit at ``x_i = i * dx`` (``i = 0 .. n_x - 1``) and ``theta_j = j * dtheta``;
rows ``i = 0`` and ``i = n_x - 1`` are the two boundary circles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

RadiusFn = Callable[[float, np.ndarray], np.ndarray]

_FD_STEP = 1e-6


class GeometryError(ValueError):
    """Invalid grid or metric."""


class GridSizeError(GeometryError):
    pass


class NonPositiveRadiusError(GeometryError):
    pass


@dataclass(frozen=True)
class Grid:
    n_x: int
    n_theta: int

    def __post_init__(self) -> None:
        if self.n_x < 3 or self.n_theta < 4:
            raise GridSizeError(
                f"grid needs n_x >= 3 and n_theta >= 4, got ({self.n_x}, {self.n_theta})"
            )

    @property
    def dx(self) -> float:
        return 1.0 / (self.n_x - 1)

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_theta)

    @property
    def size(self) -> int:
        return self.n_x * self.n_theta

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x)

    @property
    def theta(self) -> np.ndarray:
        return self.dtheta * np.arange(self.n_theta)

    @property
    def x_faces(self) -> np.ndarray:
        """Axial midpoints between consecutive node rows."""
        x = self.x
        return 0.5 * (x[1:] + x[:-1])

    @property
    def cell_widths(self) -> np.ndarray:
        """Axial control-volume widths, halved on the two boundary rows."""
        w = np.full(self.n_x, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    @property
    def boundary_rows(self) -> tuple[int, int]:
        return (0, self.n_x - 1)

    @property
    def n_boundary(self) -> int:
        return 2 * self.n_theta

    def boundary_index(self) -> np.ndarray:
        """Flat (row-major) indices of the boundary nodes, circle x=0 first."""
        j = np.arange(self.n_theta)
        return np.concatenate([j, (self.n_x - 1) * self.n_theta + j])

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.theta, indexing="ij")

    def wrap(self, j: int) -> int:
        return j % self.n_theta


def build_grid(n_x: int, n_theta: int) -> Grid:
    return Grid(int(n_x), int(n_theta))


@dataclass(frozen=True)
class MetricFamily:
    """Warped-product metric ``dx^2 + r(t, x)^2 dtheta^2`` on ``[0, t_max]``.

    ``r`` must accept a scalar time and an array of axial coordinates.
    Partial derivatives are central-differenced when not supplied.
    """

    r: RadiusFn
    t_max: float
    dr_dt: RadiusFn | None = None
    dr_dx: RadiusFn | None = None
    name: str = "custom"
    frozen: bool = False
    params: dict = field(default_factory=dict)

    def radius(self, t: float, x) -> np.ndarray:
        return np.asarray(self.r(float(t), np.asarray(x, dtype=float)), dtype=float)

    def radius_t(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dr_dt is not None:
            return np.asarray(self.dr_dt(float(t), x), dtype=float)
        h = _FD_STEP
        return (self.radius(t + h, x) - self.radius(t - h, x)) / (2 * h)

    def radius_x(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dr_dx is not None:
            return np.asarray(self.dr_dx(float(t), x), dtype=float)
        h = _FD_STEP
        return (self.radius(t, x + h) - self.radius(t, x - h)) / (2 * h)

    def check_time(self, t: float) -> None:
        if t < -1e-14 or t > self.t_max * (1 + 1e-12) + 1e-14:
            raise GeometryError(f"time {t} outside metric horizon [0, {self.t_max}]")


def static_flat(t_max: float = 1.0, radius: float = 1.0) -> MetricFamily:
    c = float(radius)
    return MetricFamily(
        r=lambda t, x: np.full_like(x, c, dtype=float),
        dr_dt=lambda t, x: np.zeros_like(x, dtype=float),
        dr_dx=lambda t, x: np.zeros_like(x, dtype=float),
        t_max=float(t_max),
        name="static-flat",
        frozen=True,
        params={"radius": c},
    )


def breathing(amplitude: float = 0.2, omega: float = 2 * np.pi, t_max: float = 1.0) -> MetricFamily:
    """``r(t, x) = 1 + a sin(omega t) x``."""
    a, w = float(amplitude), float(omega)
    return MetricFamily(
        r=lambda t, x: 1.0 + a * np.sin(w * t) * x,
        dr_dt=lambda t, x: a * w * np.cos(w * t) * x,
        dr_dx=lambda t, x: np.full_like(x, a * np.sin(w * t), dtype=float),
        t_max=float(t_max),
        name="breathing",
        frozen=(a == 0.0),
        params={"amplitude": a, "omega": w},
    )


def tabulated(times, xs, values, t_max: float | None = None) -> MetricFamily:
    """Radius samples ``values[k, i] = r(times[k], xs[i])`` with bicubic interpolation."""
    from scipy.interpolate import RectBivariateSpline

    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (times.size, xs.size):
        raise GeometryError("radius table shape must be (len(times), len(xs))")
    if times.size < 4 or xs.size < 4:
        raise GeometryError("cubic interpolation needs at least 4 samples per axis")
    spline = RectBivariateSpline(times, xs, values, kx=3, ky=3)

    def r(t, x):
        return spline(t, np.ravel(x), grid=True).reshape(np.shape(x))

    def dr_dt(t, x):
        return spline(t, np.ravel(x), dx=1, grid=True).reshape(np.shape(x))

    def dr_dx(t, x):
        return spline(t, np.ravel(x), dy=1, grid=True).reshape(np.shape(x))

    return MetricFamily(
        r=r,
        dr_dt=dr_dt,
        dr_dx=dr_dx,
        t_max=float(times[-1] if t_max is None else t_max),
        name="table",
        frozen=bool(np.allclose(values, values[:1])),
    )


@dataclass(frozen=True)
class QuadratureWeights:
    """Nodal weights for ``dmu_g`` on the cylinder and ``dmu_h`` on its boundary."""

    w_bulk: np.ndarray
    w_boundary: np.ndarray
    t: float

    @property
    def mass(self) -> np.ndarray:
        """Weight of a compatible state's nodal value: bulk plus boundary measure."""
        m = self.w_bulk.copy()
        m[0] += self.w_boundary[0]
        m[-1] += self.w_boundary[1]
        return m

    @property
    def bulk_area(self) -> float:
        return float(self.w_bulk.sum())

    @property
    def boundary_lengths(self) -> tuple[float, float]:
        return float(self.w_boundary[0].sum()), float(self.w_boundary[1].sum())


def radii(t: float, grid: Grid, metric: MetricFamily) -> np.ndarray:
    metric.check_time(t)
    r = metric.radius(t, grid.x)
    if np.any(~np.isfinite(r)) or np.any(r <= 0.0):
        bad = float(np.min(r))
        raise NonPositiveRadiusError(f"radius {bad} <= 0 at t={t}")
    return r


def weights_at(t: float, grid: Grid, metric: MetricFamily) -> QuadratureWeights:
    r = radii(t, grid, metric)
    w_bulk = np.outer(r * grid.cell_widths, np.full(grid.n_theta, grid.dtheta))
    w_boundary = np.outer(r[[0, -1]], np.full(grid.n_theta, grid.dtheta))
    for w in (w_bulk, w_boundary):
        w.setflags(write=False)
    return QuadratureWeights(w_bulk=w_bulk, w_boundary=w_boundary, t=float(t))
