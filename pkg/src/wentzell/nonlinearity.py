"""Nodewise nonlinearities ``(N, N_b)`` with growth checks and Lipschitz bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .geometry import Grid, MetricFamily, weights_at
from .operators import StateVector, norm

# coef(t, x, theta) with x, theta broadcastable arrays
Coefficient = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
# custom pointwise map f(t, x, theta, y) -> complex array
PointMap = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

_BOUNDARY_X = np.array([[0.0], [1.0]])
_LIPSCHITZ_SAFETY = 2.0


class NonFiniteError(FloatingPointError):
    """Nonlinear image overflowed; upstream treats this as approaching blow-up."""


def critical_exponents(n: int) -> tuple[float, float]:
    """Sobolev critical exponents of ``H^1(M)`` and ``H^1(boundary)`` in dimension ``n``."""
    if n < 2:
        raise ValueError("manifold dimension must be >= 2")
    c_m = math.inf if n == 2 else 2 * n / (n - 2)
    c_b = math.inf if n <= 3 else (2 * n - 2) / (n - 3)
    return c_m, c_b


@dataclass
class GrowthReport:
    alpha: float
    beta: float
    n: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_growth(alpha: float, beta: float, n: int = 2) -> GrowthReport:
    c_m, c_b = critical_exponents(n)
    rep = GrowthReport(alpha, beta, n)
    for name, e, c in (("alpha", alpha, c_m), ("beta", beta, c_b)):
        if not e >= 1:
            rep.violations.append(f"{name} = {e} < 1")
        elif e > c / 2:
            rep.violations.append(f"{name} = {e} > C/2 = {c / 2:g} (n = {n})")
    return rep


def constant(c: float) -> Coefficient:
    c = float(c)
    return lambda t, x, theta: np.full(np.broadcast(x, theta).shape, c)


def modulated(c: float, amplitude: float, omega: float) -> Coefficient:
    """``c (1 + amplitude sin(omega t))``, uniform in space."""
    c, a, w = float(c), float(amplitude), float(omega)
    return lambda t, x, theta: np.full(np.broadcast(x, theta).shape, c * (1 + a * np.sin(w * t)))


@dataclass
class NonlinearTerm:
    """Power law ``P |y|^(alpha-1) y`` (bulk) / ``P_b |y|^(beta-1) y`` (boundary), or custom maps.

    Complex arguments use the gauge-covariant extension ``|y|^(alpha-1) y``.
    """

    kind: str = "power"
    alpha: float = 1.0
    beta: float = 1.0
    P: Coefficient | None = None
    P_b: Coefficient | None = None
    bulk: PointMap | None = None
    boundary: PointMap | None = None
    C: float | None = None
    C_b: float | None = None
    K: float | None = None
    K_b: float | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("power", "custom", "zero"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "power":
            if not (self.alpha >= 1 and self.beta >= 1):
                raise ValueError(f"exponents must be >= 1, got ({self.alpha}, {self.beta})")
            self.P = self.P or constant(0.0)
            self.P_b = self.P_b or constant(0.0)
        if self.kind == "custom" and (self.bulk is None or self.boundary is None):
            raise ValueError("custom nonlinearity needs both bulk and boundary maps")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def coefficient_sup(self, grid: Grid, t0: float, t1: float, samples: int = 9) -> tuple[float, float]:
        """``sup |P|`` and ``sup |P_b|`` over nodes and sampled times in ``[t0, t1]``."""
        X, TH = grid.mesh()
        sp_, sb = 0.0, 0.0
        for t in np.linspace(t0, t1, samples):
            sp_ = max(sp_, float(np.max(np.abs(self.P(t, X, TH)))))
            sb = max(sb, float(np.max(np.abs(self.P_b(t, _BOUNDARY_X, grid.theta[None, :])))))
        return sp_, sb

    def vanishes_at_zero(self, grid: Grid, t: float = 0.0) -> bool:
        if self.kind in ("power", "zero"):
            return True
        F0 = evaluate(self, t, StateVector.zeros(grid), grid)
        return bool(np.all(F0.u == 0) and np.all(F0.v == 0))


ZERO = NonlinearTerm(kind="zero", name="zero")


def power(alpha: float, P: float | Coefficient = 1.0, beta: float | None = None,
          P_b: float | Coefficient | None = None, name: str = "") -> NonlinearTerm:
    beta = alpha if beta is None else beta
    P_b = P if P_b is None else P_b
    as_coef = lambda c: c if callable(c) else constant(c)  # noqa: E731
    return NonlinearTerm(kind="power", alpha=float(alpha), beta=float(beta),
                         P=as_coef(P), P_b=as_coef(P_b), name=name or f"power{alpha:g}")


def evaluate(term: NonlinearTerm, t: float, X: StateVector, grid: Grid) -> StateVector:
    """``(N(t, p, u(p)), N_b(t, q, v(q)))`` nodewise."""
    if term.kind == "zero":
        return StateVector(np.zeros_like(X.u), np.zeros_like(X.v))
    Xm, TH = grid.mesh()
    thb = grid.theta[None, :]
    if term.kind == "power":
        with np.errstate(over="ignore", invalid="ignore"):
            fu = kernels.power_law(X.u, term.P(t, Xm, TH), term.alpha)
            fv = kernels.power_law(X.v, term.P_b(t, _BOUNDARY_X, thb), term.beta)
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            fu = np.asarray(term.bulk(t, Xm, TH, X.u), dtype=complex)
            fv = np.asarray(term.boundary(t, _BOUNDARY_X, thb, X.v), dtype=complex)
    out = StateVector(fu, fv)
    if not out.is_finite():
        raise NonFiniteError(f"non-finite nonlinear image at t={t}")
    return out


def nodal_radius(rho: float, grid: Grid, metric: MetricFamily, t0: float = 0.0, tau: float = 0.0,
                 samples: int = 5) -> float:
    """Largest nodal modulus of a compatible state with ``||X||_U <= rho`` on ``[t0, t0 + tau]``."""
    t1 = min(t0 + tau, metric.t_max)
    wmin = min(float(weights_at(t, grid, metric).mass.min())
               for t in np.linspace(t0, t1, samples if t1 > t0 else 1))
    return rho / math.sqrt(wmin)


def lipschitz_constant(
    term: NonlinearTerm,
    tau: float,
    rho: float,
    grid: Grid,
    metric: MetricFamily,
    t0: float = 0.0,
    rng: np.random.Generator | None = None,
    samples: int = 200,
) -> float:
    """Lipschitz bound of ``X -> F(t, X)`` in the ``U`` norm on the ball of radius ``2 rho``.

    Power type: ``max_k sup|P_k| * e_k * (2 rho_node)^(e_k - 1)`` over bulk/boundary,
    with ``rho_node`` from :func:`nodal_radius`. Custom maps: the largest sampled
    difference quotient, doubled.
    """
    if not (tau > 0 and rho > 0):
        raise ValueError("tau and rho must be positive")
    if term.kind == "zero":
        return 0.0
    t1 = min(t0 + tau, metric.t_max)
    rn = 2.0 * nodal_radius(rho, grid, metric, t0, tau)
    if term.kind == "power":
        sp_, sb = term.coefficient_sup(grid, t0, t1)
        return max(sp_ * term.alpha * rn ** (term.alpha - 1.0),
                   sb * term.beta * rn ** (term.beta - 1.0))
    return _empirical_lipschitz(term, t0, t1, rho, grid, metric, rng, samples)


def _empirical_lipschitz(term, t0, t1, rho, grid, metric, rng, samples) -> float:
    rng = np.random.default_rng(0) if rng is None else rng
    radius = 2.0 * rho
    best = 0.0
    for k in range(samples):
        t = float(rng.uniform(t0, t1)) if t1 > t0 else t0
        w = weights_at(t, grid, metric)
        if k % 2 == 0:
            pair = []
            for _ in range(2):
                u = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
                X = StateVector.from_bulk(u)
                pair.append(X * (radius * rng.uniform() ** 0.5 / norm(X, w)))
            X, Y = pair
        else:
            # concentrated pairs reach the largest nodal values allowed by the ball
            i, j = rng.integers(grid.n_x), rng.integers(grid.n_theta)
            amp = radius / math.sqrt(w.mass[i, j])
            a, b = rng.uniform(-1, 1, 2) * amp
            u1, u2 = np.zeros(grid.shape, complex), np.zeros(grid.shape, complex)
            u1[i, j], u2[i, j] = a, b
            X, Y = StateVector.from_bulk(u1), StateVector.from_bulk(u2)
        d = norm(X - Y, w)
        if d == 0.0:
            continue
        q = norm(evaluate(term, t, X, grid) - evaluate(term, t, Y, grid), w) / d
        best = max(best, q)
    return _LIPSCHITZ_SAFETY * best


# --- named custom maps ----------------------------------------------------------

REGISTRY: dict[str, Callable[[], NonlinearTerm]] = {}


def register(name: str):
    def deco(fn):
        REGISTRY[name] = fn
        return fn
    return deco


@register("saturating")
def _saturating() -> NonlinearTerm:
    f = lambda t, x, th, y: y / (1.0 + np.abs(y) ** 2)  # noqa: E731
    return NonlinearTerm(kind="custom", bulk=f, boundary=f, alpha=1.0, beta=1.0,
                         C=1.0, C_b=1.0, K=1.0, K_b=1.0, name="saturating")


@register("sine")
def _sine() -> NonlinearTerm:
    f = lambda t, x, th, y: np.sin(y.real) + 0j  # noqa: E731
    return NonlinearTerm(kind="custom", bulk=f, boundary=f, alpha=1.0, beta=1.0,
                         C=1.0, C_b=1.0, K=1.0, K_b=1.0, name="sine")


@register("forced-cubic")
def _forced_cubic() -> NonlinearTerm:
    """``-|y|^2 y + 0.1``: nonzero at the origin (acts partly as a forcing)."""
    f = lambda t, x, th, y: -np.abs(y) ** 2 * y + 0.1  # noqa: E731
    return NonlinearTerm(kind="custom", bulk=f, boundary=f, alpha=3.0, beta=3.0, name="forced-cubic")


def from_registry(name: str) -> NonlinearTerm:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"no nonlinearity named {name!r}; known: {sorted(REGISTRY)}") from None
