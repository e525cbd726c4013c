"""Time integration of ``dX/dt = kappa A(t) X + F(t, X)``.

Linear steps are Crank-Nicolson (Cayley) with ``A`` frozen at the step midpoint.
Mild solutions of the semilinear problem are obtained by Picard iteration of
the Duhamel map on windows whose length comes from the contraction estimate,
and windows are glued until the horizon or a blow-up threshold is reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import ShiftedFactorization
from .geometry import Grid, MetricFamily, QuadratureWeights, weights_at
from .nonlinearity import ZERO, NonFiniteError, NonlinearTerm, evaluate, lipschitz_constant
from .operators import StateVector, WentzellOperator, assemble_wentzell_operator, dof_norm

Forcing = Callable[[float], StateVector]

ORACLE_LIMIT = 2048
_CACHE_LIMIT = 4096
# roots of 1 - z/2 + z^2/12, the denominator of the (2,2) Pade approximant of exp
_PADE4_ROOTS = (3.0 + math.sqrt(3.0) * 1j, 3.0 - math.sqrt(3.0) * 1j)
SCHEMES = ("cn", "pade4")


class EvolutionError(RuntimeError):
    pass


class NoContractionError(EvolutionError):
    pass


class PicardIterationError(EvolutionError):
    pass


class IncomparableIntervalError(EvolutionError):
    pass


@dataclass
class SolverConfig:
    kappa: complex = 1.0
    dt: float = 1e-2
    T: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    rho: float = 1.0
    blowup_threshold: float = 1e8
    M0: float = 1.0
    dt_min: float = 1e-12
    contraction_margin: float = 0.05

    def __post_init__(self) -> None:
        self.kappa = complex(self.kappa)
        if self.kappa not in (1, 1j):
            raise ValueError(f"kappa must be 1 or 1j, got {self.kappa}")
        for name in ("dt", "T", "picard_tol", "blowup_threshold", "M0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Window:
    t_start: float
    t_end: float
    tau: float
    lipschitz: float
    rho: float
    iterations: int
    rates: list[float]
    contraction_bound: float
    max_norm: float

    @property
    def max_rate(self) -> float:
        return max(self.rates, default=0.0)

    @property
    def certified(self) -> bool:
        return self.max_rate <= self.contraction_bound


@dataclass
class Trajectory:
    """Time series of states with norm diagnostics.

    ``norms_ref`` use the ``t = 0`` weights, ``norms_inst`` the weights at each
    recorded time; they coincide for a frozen metric.
    """

    grid: Grid
    kappa: complex
    times: list[float] = field(default_factory=list)
    states: list[StateVector] = field(default_factory=list)
    norms_ref: list[float] = field(default_factory=list)
    norms_inst: list[float] = field(default_factory=list)
    graph_norms: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    status: str = "completed"
    reason: str = ""
    blowup_bracket: tuple[float, float] | None = None
    windows: list[Window] = field(default_factory=list)
    forcing_norms: list[float] = field(default_factory=list)

    @property
    def picard_rates(self) -> list[float]:
        return [w.max_rate for w in self.windows]

    @property
    def final(self) -> StateVector:
        return self.states[-1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def max_norm(self) -> float:
        return max(self.norms_inst, default=0.0)


class Propagator:
    """Operators, weights and Crank-Nicolson factorizations along a metric family."""

    def __init__(self, grid: Grid, metric: MetricFamily, kappa):
        self.grid = grid
        self.metric = metric
        self.kappa = complex(kappa)
        self.frozen = bool(metric.frozen)
        self._ops: dict[float, WentzellOperator] = {}
        self._lu: dict[tuple, ShiftedFactorization] = {}
        self.w0 = weights_at(0.0, grid, metric)

    def _key(self, t: float) -> float:
        return 0.0 if self.frozen else round(float(t), 14)

    def operator(self, t: float) -> WentzellOperator:
        k = self._key(t)
        op = self._ops.get(k)
        if op is None:
            if len(self._ops) > _CACHE_LIMIT:
                self._ops.clear()
            op = self._ops[k] = assemble_wentzell_operator(k if self.frozen else t, self.grid, self.metric)
        return op

    def weights(self, t: float) -> QuadratureWeights:
        return self.operator(t).weights

    def _factor(self, t_mid: float, h: float) -> ShiftedFactorization:
        key = (self._key(t_mid), round(h, 15))
        lu = self._lu.get(key)
        if lu is None:
            if len(self._lu) > _CACHE_LIMIT:
                self._lu.clear()
            lu = self._lu[key] = ShiftedFactorization(self.operator(t_mid), self.kappa, 2.0 / h)
        return lu

    def step(self, t: float, h: float, x: np.ndarray, f: np.ndarray | None = None) -> np.ndarray:
        """One Cayley step from ``t`` to ``t + h``; ``f`` is the compatible forcing at the midpoint.

        Solves ``(I - kappa h/2 A) d = kappa h A x + h f`` for the increment
        ``d``, so kernel states are returned bit-for-bit.
        """
        tm = t + 0.5 * h
        op = self.operator(tm)
        rhs = -2.0 * self.kappa * op.apply_stiffness(x)
        if f is not None:
            rhs = rhs + 2.0 * op.mass * f
        if not np.any(rhs):
            return x.copy()
        d = self._factor(tm, h).solve_system(rhs)
        return x + d.reshape(x.shape)

    def step_pade4(self, h: float, x: np.ndarray) -> np.ndarray:
        """Unforced fourth-order step ``R(h kappa A) x`` with ``R`` the (2,2) Pade approximant.

        ``R(z) = prod_k (1 + z/z_k) / (1 - z/z_k)`` over the two complex roots, each
        factor applied in increment form; frozen metric only.
        """
        op = self.operator(0.0)
        key = ("pade4", round(h, 15))
        lus = self._lu.get(key)
        if lus is None:
            M = sp.diags(op.mass.ravel())
            lus = self._lu[key] = [
                (c, spla.splu(sp.csc_matrix(M + c * op.stiffness, dtype=complex)))
                for c in (h * self.kappa / z for z in _PADE4_ROOTS)
            ]
        y = np.asarray(x, dtype=complex)
        for c, lu in lus:
            rhs = -2.0 * c * op.apply_stiffness(y)
            if np.any(rhs):
                y = y + lu.solve(rhs.ravel()).reshape(y.shape)
        return y

    def project(self, F: StateVector, t: float) -> np.ndarray:
        return F.project(self.weights(t))

    def norm(self, x: np.ndarray, t: float) -> float:
        return dof_norm(x, self.weights(t).mass)

    def norm_ref(self, x: np.ndarray) -> float:
        return dof_norm(x, self.w0.mass)


def _record(traj: Trajectory, prop: Propagator, t: float, x: np.ndarray, iterations: int = 0) -> None:
    op = prop.operator(t)
    traj.times.append(float(t))
    traj.states.append(StateVector.from_bulk(x))
    traj.norms_ref.append(prop.norm_ref(x))
    traj.norms_inst.append(op.norm(x))
    traj.graph_norms.append(op.norm(op.apply(x)))
    traj.iterations.append(int(iterations))


def _compatible(X0: StateVector, grid: Grid, metric: MetricFamily, t: float = 0.0) -> np.ndarray:
    if X0.shape != grid.shape:
        raise ValueError(f"state shape {X0.shape} does not match grid {grid.shape}")
    if X0.is_compatible():
        return X0.u.copy()
    return X0.project(weights_at(t, grid, metric))


def linear_step(
    t: float,
    dt: float,
    X: StateVector,
    forcing: Forcing | None,
    kappa,
    grid: Grid,
    metric: MetricFamily,
    propagator: Propagator | None = None,
) -> StateVector:
    """Advance ``dX/dt = kappa A X + forcing`` by one Crank-Nicolson step."""
    prop = propagator or Propagator(grid, metric, kappa)
    f = None if forcing is None else prop.project(forcing(t + 0.5 * dt), t + 0.5 * dt)
    return StateVector.from_bulk(prop.step(t, dt, X.u.copy(), f))


def linear_evolve(
    kappa,
    X0: StateVector,
    forcing: Forcing | None,
    T: float,
    dt: float,
    grid: Grid,
    metric: MetricFamily,
    scheme: str = "cn",
) -> Trajectory:
    """Uniform stepping on ``[0, T]`` (last step shortened to land on ``T``).

    ``scheme="cn"`` is Crank-Nicolson with midpoint freezing; ``"pade4"`` is the
    fourth-order (2,2) Pade step, also unitary for ``kappa = i``, available for
    a frozen metric without forcing.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if scheme == "pade4" and (forcing is not None or not metric.frozen):
        raise ValueError("pade4 needs a frozen metric and no forcing")
    prop = Propagator(grid, metric, kappa)
    traj = Trajectory(grid=grid, kappa=complex(kappa))
    x = _compatible(X0, grid, metric)
    t = 0.0
    _record(traj, prop, t, x)
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    for k in range(n):
        h = min(dt, T - t) if k == n - 1 else dt
        f = None
        if forcing is not None:
            f = prop.project(forcing(t + 0.5 * h), t + 0.5 * h)
            traj.forcing_norms.append(prop.norm(f, t + 0.5 * h))
        try:
            x = prop.step_pade4(h, x) if scheme == "pade4" else prop.step(t, h, x, f)
        except Exception as exc:  # solver failure leaves a partial trajectory
            traj.status, traj.reason = "failed", f"step at t={t:g}: {exc}"
            return traj
        t = (k + 1) * dt if k < n - 1 else T
        _record(traj, prop, t, x)
    return traj


def existence_time(rho: float, L: float, T: float, M0: float = 1.0) -> float:
    """``min(T, 1 / (2 M0 L))``; the Duhamel map then contracts with factor ``tau M0 L <= 1/2``."""
    if not (T > 0 and M0 > 0 and L >= 0):
        raise ValueError("existence_time needs T, M0 > 0 and L >= 0")
    if L == 0:
        return float(T)
    return float(min(T, 1.0 / (2.0 * M0 * L)))


def _window_steps(tau: float, dt: float, remaining: float) -> tuple[float, int]:
    """Substep ``h`` and count ``n`` with ``n h <= tau`` (``n h = remaining`` when it fits)."""
    if remaining <= tau * (1 + 1e-12):
        n = max(1, int(math.ceil(remaining / dt - 1e-9)))
        return remaining / n, n
    if tau >= dt:
        return dt, int(math.floor(tau / dt + 1e-9))
    # dyadic refinement keeps the set of factorized step sizes small
    j = int(math.ceil(math.log2(dt / tau) - 1e-12))
    return dt / 2.0**j, 1


@dataclass
class _WindowResult:
    times: list[float]
    xs: list[np.ndarray]
    iterations: int
    rates: list[float]


def _duhamel(prop: Propagator, times, x0, F) -> list[np.ndarray]:
    """Trapezoidal Duhamel sum: ``Y_{k+1} = S_k (Y_k + h/2 F_k) + h/2 F_{k+1}``."""
    ys = [x0]
    y = x0
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        z = y + 0.5 * h * F[k] if F is not None else y
        y = prop.step(times[k], h, z)
        if F is not None:
            y = y + 0.5 * h * F[k + 1]
        ys.append(y)
    return ys


def _nonlinear_images(prop, term, times, xs, forcing):
    out = []
    for t, x in zip(times, xs):
        F = evaluate(term, t, StateVector.from_bulk(x), prop.grid) * prop.kappa
        if forcing is not None:
            F = F + forcing(t)
        out.append(prop.project(F, t))
    return out


def _picard_window(prop, term, forcing, x0, times, cfg: SolverConfig) -> _WindowResult:
    xs = _duhamel(prop, times, x0, None if forcing is None else
                  [prop.project(forcing(t), t) for t in times])
    rates: list[float] = []
    prev = None
    floor = 1e3 * np.finfo(float).eps * max(prop.norm(x0, times[0]), 1e-300)
    for it in range(1, cfg.picard_max_iter + 1):
        F = _nonlinear_images(prop, term, times, xs, forcing) if not term.is_zero else (
            None if forcing is None else [prop.project(forcing(t), t) for t in times])
        new = _duhamel(prop, times, x0, F)
        diff = max(prop.norm(a - b, t) for a, b, t in zip(new, xs, times))
        xs = new
        if prev is not None and prev > floor:
            rate = diff / prev
            rates.append(rate)
            if rate > 1.0 and diff > floor:
                raise NoContractionError(
                    f"Picard difference ratio {rate:.3f} > 1 on window starting {times[0]:g}")
        if diff <= cfg.picard_tol or not np.isfinite(diff):
            if not np.isfinite(diff):
                raise NonFiniteError("Picard iterate overflowed")
            return _WindowResult(list(times), xs, it, rates)
        prev = diff
    raise PicardIterationError(
        f"Picard iteration did not reach tol {cfg.picard_tol:g} in {cfg.picard_max_iter} iterations")


def picard_solve(
    X0: StateVector,
    config: SolverConfig,
    grid: Grid,
    metric: MetricFamily,
    term: NonlinearTerm = ZERO,
    forcing: Forcing | None = None,
    t0: float = 0.0,
    tau: float | None = None,
    propagator: Propagator | None = None,
) -> Trajectory:
    """Fixed point of the Duhamel map on ``[t0, t0 + tau]``.

    Without ``tau`` the window length is :func:`existence_time` with the
    Lipschitz bound over the remaining horizon and ``config.rho``.
    """
    prop = propagator or Propagator(grid, metric, config.kappa)
    x0 = _compatible(X0, grid, metric, t0)
    remaining = config.T - t0
    rho = config.rho
    if prop.norm(x0, t0) > rho * (1 + 1e-12):
        raise ValueError(f"initial norm {prop.norm(x0, t0):.6g} exceeds the ball radius {rho:g}")
    L = lipschitz_constant(term, remaining, rho, grid, metric, t0=t0) if not term.is_zero else 0.0
    if tau is None:
        tau = existence_time(rho, L, remaining, config.M0)
    h, n = _window_steps(tau, config.dt, remaining)
    times = [t0 + k * h for k in range(n + 1)]
    if n * h >= remaining * (1 - 1e-12):
        times[-1] = config.T
    bound = tau * config.M0 * L + config.contraction_margin
    res = _picard_window(prop, term, forcing, x0, times, config)
    traj = Trajectory(grid=grid, kappa=config.kappa)
    for k, (t, x) in enumerate(zip(res.times, res.xs)):
        _record(traj, prop, t, x, res.iterations if k else 0)
    traj.windows.append(Window(
        t_start=times[0], t_end=times[-1], tau=tau, lipschitz=L, rho=rho,
        iterations=res.iterations, rates=res.rates, contraction_bound=bound,
        max_norm=max(traj.norms_inst)))
    return traj


def _forcing_at_zero(prop, term, forcing, t) -> float:
    F = StateVector.zeros(prop.grid)
    if not term.is_zero and not term.vanishes_at_zero(prop.grid, t):
        F = F + evaluate(term, t, F, prop.grid) * prop.kappa
    if forcing is not None:
        F = F + forcing(t)
    return prop.norm(prop.project(F, t), t)


def maximal_solve(
    X0: StateVector,
    config: SolverConfig,
    grid: Grid,
    metric: MetricFamily,
    term: NonlinearTerm = ZERO,
    forcing: Forcing | None = None,
) -> Trajectory:
    """Glue Picard windows until ``T`` (completed) or the norm threshold (blew-up).

    Each window uses the current norm as the ball radius; a nonzero ``F(t, 0)``
    (or external forcing) enlarges it by ``||F(t, 0)|| * min(1, T - t)``.
    """
    prop = Propagator(grid, metric, config.kappa)
    x = _compatible(X0, grid, metric)
    traj = Trajectory(grid=grid, kappa=config.kappa)
    _record(traj, prop, 0.0, x)
    if traj.norms_inst[0] >= config.blowup_threshold:
        raise ValueError("blowup_threshold must exceed the initial norm")
    t = 0.0
    T = config.T
    while T - t > 1e-12 * max(1.0, T):
        remaining = T - t
        rho = max(prop.norm(x, t), 1e-12)
        rho += _forcing_at_zero(prop, term, forcing, t) * min(1.0, remaining)
        try:
            L = lipschitz_constant(term, remaining, rho, grid, metric, t0=t) if not term.is_zero else 0.0
        except Exception as exc:
            traj.status, traj.reason = "failed", f"lipschitz estimate: {exc}"
            return traj
        tau = existence_time(rho, L, remaining, config.M0)
        if tau < config.dt_min:
            traj.status, traj.reason = "failed", f"stagnation: window {tau:.3e} < dt_min at t={t:g}"
            return traj
        h, n = _window_steps(tau, config.dt, remaining)
        times = [t + k * h for k in range(n + 1)]
        if n * h >= remaining * (1 - 1e-12):
            times[-1] = T
        bound = tau * config.M0 * L + config.contraction_margin
        try:
            res = _picard_window(prop, term, forcing, x, times, config)
        except NonFiniteError:
            traj.status = "blew-up"
            traj.blowup_bracket = (times[0], times[-1])
            traj.reason = "non-finite iterate"
            return traj
        except (NoContractionError, PicardIterationError) as exc:
            traj.status, traj.reason = "failed", str(exc)
            return traj
        start = len(traj.times)
        for k in range(1, len(res.times)):
            _record(traj, prop, res.times[k], res.xs[k], res.iterations)
            if traj.norms_inst[-1] >= config.blowup_threshold:
                break
        traj.windows.append(Window(
            t_start=times[0], t_end=times[-1], tau=tau, lipschitz=L, rho=rho,
            iterations=res.iterations, rates=res.rates, contraction_bound=bound,
            max_norm=max(traj.norms_inst[start:])))
        if traj.norms_inst[-1] >= config.blowup_threshold:
            traj.status = "blew-up"
            traj.blowup_bracket = (times[0], times[-1])
            traj.reason = f"norm {traj.norms_inst[-1]:.3e} >= threshold {config.blowup_threshold:g}"
            return traj
        t = res.times[-1]
        x = res.xs[-1]
    return traj


def evolution_family_oracle(
    t: float, s: float, X: StateVector, kappa, grid: Grid, metric: MetricFamily
) -> StateVector:
    """``exp((t - s) kappa A(s)) X`` by dense eigendecomposition (test oracle)."""
    if grid.size > ORACLE_LIMIT:
        raise ValueError(f"oracle limited to {ORACLE_LIMIT} unknowns, grid has {grid.size}")
    op = assemble_wentzell_operator(s, grid, metric)
    m = op.mass.ravel()
    sq = np.sqrt(m)
    K = op.stiffness.toarray()
    S = -(K / sq[:, None]) / sq[None, :]
    S = 0.5 * (S + S.T)
    lam, V = sla.eigh(S)
    x = X.u.ravel() if X.is_compatible() else X.project(op.weights).ravel()
    y = V.T @ (sq * x)
    y = np.exp(complex(kappa) * (t - s) * lam) * y
    out = (V @ y) / sq
    return StateVector.from_bulk(out.reshape(grid.shape))
