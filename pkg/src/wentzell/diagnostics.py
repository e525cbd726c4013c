"""Certificates over assembled operators and computed trajectories."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .elliptic import solve_shifted
from .evolution import (
    IncomparableIntervalError,
    Propagator,
    SolverConfig,
    Trajectory,
    maximal_solve,
)
from .geometry import Grid, MetricFamily
from .nonlinearity import ZERO, NonlinearTerm
from .operators import (
    StateVector,
    assemble_wentzell_operator,
    green_identity_residual,
    norm,
    random_state,
)

OPERATOR_TOL = 1e-10


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    property: str
    relation: str = "<="

    @classmethod
    def upper(cls, name, value, threshold, prop) -> "Check":
        value = float(value)
        return cls(name, value, float(threshold), bool(value <= threshold), prop, "<=")

    @classmethod
    def lower(cls, name, value, threshold, prop) -> "Check":
        value = float(value)
        return cls(name, value, float(threshold), bool(value >= threshold), prop, ">=")

    @classmethod
    def info(cls, name, value, prop) -> "Check":
        return cls(name, float(value), math.inf, True, prop, "info")


@dataclass
class CertificateReport:
    checks: list[Check] = field(default_factory=list)
    trajectory_ref: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def extend(self, other: "CertificateReport") -> None:
        self.checks.extend(other.checks)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v

        return {
            "passed": self.passed,
            "trajectory_ref": self.trajectory_ref,
            "metadata": self.metadata,
            "checks": [{k: clean(v) for k, v in asdict(c).items()} for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str)


# --- operator-level certificates --------------------------------------------------


def operator_certificates(
    t: float,
    grid: Grid,
    metric: MetricFamily,
    seed: int = 0,
    samples: int = 100,
    rho_stencil=None,
    lam: float = 1.0,
) -> CertificateReport:
    """Symmetry, dissipativity, Green identity and resolvent symmetry of ``A(t)``."""
    rng = np.random.default_rng(seed)
    op = assemble_wentzell_operator(t, grid, metric, rho_stencil=rho_stencil, check=False)
    sym = diss = skew = green = 0.0
    for _ in range(samples):
        X, Y = random_state(grid, rng), random_state(grid, rng)
        nx, ny = op.norm(X.u), op.norm(Y.u)
        AX, AY = op.apply(X.u), op.apply(Y.u)
        sym = max(sym, abs(op.inner(X.u, AY) - op.inner(AX, Y.u)) / (nx * ny))
        diss = max(diss, op.inner(X.u, AX).real / nx**2)
        skew = max(skew, abs(op.inner(X.u, 1j * AX).real) / nx**2)
        green = max(green, green_identity_residual(t, X, Y, grid, metric)
                    / (norm(X, op.weights) * norm(Y, op.weights)))
    res = 0.0
    for _ in range(max(1, samples // 10)):
        F, G = random_state(grid, rng).u, random_state(grid, rng).u
        RF = -solve_shifted(op, 1, lam, F, tol=1e-12)
        RG = -solve_shifted(op, 1, lam, G, tol=1e-12)
        res = max(res, abs(op.inner(RF, G) - op.inner(F, RG)) / (op.norm(F) * op.norm(G)))
    rep = CertificateReport(metadata={
        "t": float(t), "grid": [grid.n_x, grid.n_theta], "metric": metric.name,
        "seed": seed, "samples": samples,
    })
    rep.checks += [
        Check.upper("symmetry", sym, OPERATOR_TOL, "A(t) self-adjoint in the weighted U product"),
        Check.upper("dissipativity", diss, OPERATOR_TOL, "Re(X, AX) <= 0"),
        Check.upper("skew_dissipativity", skew, OPERATOR_TOL, "Re(X, iAX) = 0"),
        Check.upper("green_identity", green, OPERATOR_TOL, "boundary-triple Green identity"),
        Check.upper("resolvent_symmetry", res, OPERATOR_TOL, "(lambda - A)^-1 self-adjoint"),
    ]
    return rep


# --- trajectory-level certificates ---------------------------------------------


def trajectory_certificates(
    traj: Trajectory,
    config: SolverConfig,
    metric: MetricFamily,
    term: NonlinearTerm = ZERO,
    forced: bool = False,
    expected_blowup: float | None = None,
    blowup_tolerance: float = 0.1,
) -> CertificateReport:
    """Regime-aware conservation, monotonicity, Duhamel, ball and contraction checks.

    Norm assertions apply only with a frozen metric; with a moving metric the
    drift rates of both norm series are reported instead.
    """
    rep = CertificateReport(trajectory_ref=traj.status, metadata={
        "kappa": str(traj.kappa), "status": traj.status, "steps": traj.n_steps,
        "metric": metric.name, "frozen_metric": bool(metric.frozen),
        "nonlinearity": term.name or term.kind,
    })
    n_inst = np.asarray(traj.norms_inst)
    n_ref = np.asarray(traj.norms_ref)
    times = np.asarray(traj.times)
    linear = term.is_zero
    if metric.frozen:
        if traj.kappa == 1j and not forced and linear and len(n_inst) > 1:
            drift = float(np.max(np.abs(n_inst / n_inst[0] - 1.0))) if n_inst[0] > 0 else 0.0
            rep.checks.append(Check.upper("mass_conservation", drift, 1e-10,
                                          "Schrodinger L2 mass conserved"))
        if traj.kappa == 1 and not forced and _dissipative(term, traj.grid, times) and len(n_inst) > 1:
            inc = np.diff(n_inst) / np.maximum(n_inst[:-1], 1e-300)
            violations = int(np.sum(inc > 1e-12))
            rep.checks.append(Check.upper("heat_monotonicity_violations", violations, 0,
                                          "heat L2 norm non-increasing"))
            rep.checks.append(Check.info("heat_max_relative_increase", float(inc.max(initial=0.0)),
                                         "heat L2 norm non-increasing"))
    elif len(times) > 1 and times[-1] > 0:
        for label, series in (("inst", n_inst), ("ref", n_ref)):
            with np.errstate(divide="ignore", invalid="ignore"):
                rate = np.abs(np.diff(np.log(np.maximum(series, 1e-300))) / np.diff(times))
            rep.checks.append(Check.info(f"norm_drift_rate_{label}", float(np.max(rate, initial=0.0)),
                                         "norm drift under moving metric"))
    if forced and linear and traj.forcing_norms:
        dts = np.diff(times)
        budget = n_inst[0] + np.concatenate([[0.0], np.cumsum(dts * np.asarray(traj.forcing_norms))])
        slack = budget - n_inst
        scale = max(float(budget.max()), 1.0)
        if metric.frozen:
            rep.checks.append(Check.lower("duhamel_slack", float(slack.min()) / scale, -1e-12,
                                          "||X(t)|| <= ||X0|| + int ||F||"))
        else:
            rep.checks.append(Check.info("duhamel_slack", float(slack.min()) / scale,
                                         "||X(t)|| <= ||X0|| + int ||F|| (moving metric)"))
    if traj.windows and not linear:
        ball = max(w.max_norm - w.rho * (config.M0 + 1) for w in traj.windows)
        if term.vanishes_at_zero(traj.grid) and not forced:
            rep.checks.append(Check.upper("ball_invariance_margin", ball, config.picard_tol,
                                          "||X(t)|| <= rho (M0 + 1)"))
        worst = max(w.max_rate - w.contraction_bound for w in traj.windows)
        rep.checks.append(Check.upper("picard_rate_excess", worst, 0.0,
                                      "Picard ratio <= tau M0 L + margin"))
        rep.checks.append(Check.info("picard_max_rate", max(traj.picard_rates, default=0.0),
                                     "Picard contraction"))
    if expected_blowup is not None:
        ok = traj.status == "blew-up" and traj.blowup_bracket is not None
        err = math.inf
        if ok:
            a, b = traj.blowup_bracket
            err = max(abs(a - expected_blowup), abs(b - expected_blowup)) / expected_blowup
        rep.checks.append(Check.upper("blowup_bracket_error", err, blowup_tolerance,
                                      "norm diverges at t+ (bracketed)"))
    elif traj.status != "completed":
        rep.checks.append(Check("status", 0.0, 0.0, False, "run completed", "=="))
    return rep


def _dissipative(term: NonlinearTerm, grid: Grid, times) -> bool:
    """Zero term, or a power law with nonpositive coefficients (norm cannot grow)."""
    if term.is_zero:
        return True
    if term.kind != "power":
        return False
    X, TH = grid.mesh()
    xb, thb = np.array([[0.0], [1.0]]), grid.theta[None, :]
    for t in np.linspace(times[0], times[-1], 9):
        if np.any(term.P(t, X, TH) > 0) or np.any(term.P_b(t, xb, thb) > 0):
            return False
    return True


# --- continuous dependence -----------------------------------------------------


def continuous_dependence(
    X0: StateVector,
    delta: float,
    config: SolverConfig,
    grid: Grid,
    metric: MetricFamily,
    term: NonlinearTerm = ZERO,
    seed: int = 0,
    t_star: float | None = None,
) -> float:
    """``sup_t ||X(t) - X_delta(t)|| / ||delta E||`` for a seeded random unit direction ``E``.

    The perturbed run follows the window schedule of the base run so that both
    are compared at identical times.
    """
    rng = np.random.default_rng(seed)
    prop = Propagator(grid, metric, config.kappa)
    E = random_state(grid, rng)
    E = E * (1.0 / norm(E, prop.weights(0.0)))
    t_star = config.T if t_star is None else t_star
    base = maximal_solve(X0, config, grid, metric, term)
    pert = _replay(X0 + E * delta, config, grid, metric, term, base)
    for tr in (base, pert):
        if tr.status != "completed" and tr.times[-1] < t_star:
            raise IncomparableIntervalError(f"run ended ({tr.status}) at t={tr.times[-1]:g} < t*={t_star:g}")
    sup = 0.0
    for t, a, b in zip(base.times, base.states, pert.states):
        if t > t_star * (1 + 1e-12):
            break
        sup = max(sup, prop.norm(a.u - b.u, t))
    return sup / delta


def _replay(X0, config, grid, metric, term, base: Trajectory) -> Trajectory:
    """Rerun with the base trajectory's window boundaries and substeps."""
    from .evolution import _compatible, _picard_window, _record

    prop = Propagator(grid, metric, config.kappa)
    traj = Trajectory(grid=grid, kappa=config.kappa)
    x = _compatible(X0, grid, metric)
    _record(traj, prop, 0.0, x)
    times = np.asarray(base.times)
    for w in base.windows:
        sel = times[(times >= w.t_start - 1e-14) & (times <= w.t_end + 1e-14)]
        res = _picard_window(prop, term, None, x, list(sel), config)
        for k in range(1, len(res.times)):
            _record(traj, prop, res.times[k], res.xs[k], res.iterations)
        x = res.xs[-1]
    traj.status = base.status
    return traj


# --- smoothing ----------------------------------------------------------------


@dataclass
class SmoothingProfile:
    times: np.ndarray
    graph_norms: np.ndarray
    sample_times: np.ndarray
    scaled: np.ndarray  # t * ||A X(t)|| at the sample times
    early_slope: float
    decay_ratio: float

    @property
    def sup_over_median(self) -> float:
        med = float(np.median(self.scaled))
        return float(np.max(self.scaled)) / med if med > 0 else math.inf

    @property
    def sup_scaled(self) -> float:
        return float(np.max(self.scaled))


def smoothing_profile(traj: Trajectory, t_end: float | None = None, n_samples: int = 64) -> SmoothingProfile:
    """Graph-norm series ``||A X(t_k)||`` and the ``t ||A X(t)||`` statistics.

    Statistics are taken at log-spaced times in ``[dt, t_end]`` (nearest recorded
    step), since the bound being probed is a power law in ``t``.
    """
    t = np.asarray(traj.times)
    g = np.asarray(traj.graph_norms)
    t_end = float(t[-1] if t_end is None else min(t_end, t[-1]))
    dt = float(t[1] - t[0])
    targets = np.geomspace(dt, t_end, n_samples)
    idx = np.unique(np.clip(np.searchsorted(t, targets - 1e-12), 1, len(t) - 1))
    st, sg = t[idx], g[idx]
    scaled = st * sg
    early = st <= max(10 * dt, st[min(len(st) - 1, 4)])
    slope = -math.inf
    pos = early & (sg > 0)
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(st[pos]), np.log(sg[pos]), 1)[0])
    elif np.all(sg == 0):
        slope = 0.0
    decay = float(g[-1] / g[1]) if g[1] > 0 else 0.0
    return SmoothingProfile(times=t, graph_norms=g, sample_times=st, scaled=scaled,
                            early_slope=slope, decay_ratio=decay)
