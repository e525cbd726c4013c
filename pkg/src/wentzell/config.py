"""Run configuration: parsing, validation and construction of solver objects."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .evolution import Forcing, SolverConfig
from .geometry import Grid, MetricFamily, breathing, build_grid, static_flat, tabulated, weights_at
from .nonlinearity import REGISTRY, ZERO, NonlinearTerm, constant, from_registry, modulated, power
from .operators import StateVector, norm, random_state


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


EQUATIONS = {"heat": 1.0, "schrodinger": 1j}
PROFILES = ("constant", "gaussian-bump", "random")
SOLVER_KEYS = ("dt", "T", "picard_tol", "picard_max_iter", "rho", "blowup_threshold", "M0", "dt_min")
TOP_KEYS = {"equation", "grid", "metric", "nonlinearity", "initial", "forcing", "solver",
            "certificates", "output", "seed", "sweep", "certify"}


@dataclass
class CertificateOptions:
    operator: bool = True
    trajectory: bool = True
    smoothing: bool = False
    expected_blowup: float | None = None
    blowup_tolerance: float = 0.1
    samples: int = 100


@dataclass
class RunConfig:
    equation: str = "heat"
    grid: tuple[int, int] = (8, 8)
    metric: dict = field(default_factory=lambda: {"name": "static-flat"})
    nonlinearity: dict = field(default_factory=lambda: {"kind": "zero"})
    initial: dict = field(default_factory=lambda: {"profile": "random", "scale": 1.0})
    forcing: dict | None = None
    solver: dict = field(default_factory=dict)
    certificates: CertificateOptions = field(default_factory=CertificateOptions)
    output: str = "runs/out"
    seed: int = 0
    sweep: dict | None = None
    certify: dict = field(default_factory=dict)

    @property
    def kappa(self) -> complex:
        return EQUATIONS[self.equation]

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in TOP_KEYS}
        d["grid"] = list(self.grid)
        d["certificates"] = vars(self.certificates).copy()
        return d

    # --- builders ---------------------------------------------------------

    def build_grid(self) -> Grid:
        return build_grid(*self.grid)

    def build_metric(self) -> MetricFamily:
        return build_metric(self.metric, self.solver_config().T)

    def build_nonlinearity(self) -> NonlinearTerm:
        return build_nonlinearity(self.nonlinearity)

    def solver_config(self) -> SolverConfig:
        kw = {k: self.solver[k] for k in SOLVER_KEYS if k in self.solver}
        return SolverConfig(kappa=self.kappa, **kw)

    def initial_state(self, grid: Grid, metric: MetricFamily) -> StateVector:
        return build_initial(self.initial, grid, metric, self.seed)

    def build_forcing(self) -> Forcing | None:
        return build_forcing(self.forcing, self.build_grid())


# --- parsing ------------------------------------------------------------------


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON or YAML run configuration; ``overrides`` replace top-level keys."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    data.update(overrides or {})
    return parse_config(data)


def parse_config(data: dict[str, Any]) -> RunConfig:
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    eq = data.get("equation", cfg.equation)
    if eq not in EQUATIONS:
        raise ConfigError(f"equation must be one of {sorted(EQUATIONS)}, got {eq!r}")
    cfg.equation = eq
    g = data.get("grid", list(cfg.grid))
    if not (isinstance(g, (list, tuple)) and len(g) == 2 and all(isinstance(n, int) for n in g)):
        raise ConfigError(f"grid must be [n_x, n_theta] integers, got {g!r}")
    if g[0] < 3 or g[1] < 4:
        raise ConfigError(f"grid {g} below minimum [3, 4]")
    cfg.grid = (g[0], g[1])
    cfg.metric = _mapping(data, "metric", cfg.metric)
    cfg.nonlinearity = _mapping(data, "nonlinearity", cfg.nonlinearity)
    cfg.initial = _mapping(data, "initial", cfg.initial)
    cfg.forcing = data.get("forcing")
    if cfg.forcing is not None and not isinstance(cfg.forcing, dict):
        raise ConfigError("forcing must be a mapping")
    cfg.solver = _mapping(data, "solver", {})
    bad = set(cfg.solver) - set(SOLVER_KEYS)
    if bad:
        raise ConfigError(f"unknown solver keys: {sorted(bad)}")
    certs = _mapping(data, "certificates", {})
    try:
        cfg.certificates = CertificateOptions(**certs)
    except TypeError as exc:
        raise ConfigError(f"certificates: {exc}") from None
    cfg.output = str(data.get("output", cfg.output))
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    cfg.seed = seed
    cfg.sweep = data.get("sweep")
    cfg.certify = _mapping(data, "certify", {})
    # build everything once so that bad names and values fail at parse time
    try:
        sc = cfg.solver_config()
        grid = cfg.build_grid()
        metric = build_metric(cfg.metric, sc.T)
        build_nonlinearity(cfg.nonlinearity)
        build_initial(cfg.initial, grid, metric, cfg.seed)
        build_forcing(cfg.forcing, grid)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _mapping(data, key, default) -> dict:
    v = data.get(key, default)
    if not isinstance(v, dict):
        raise ConfigError(f"{key} must be a mapping, got {type(v).__name__}")
    return dict(v)


# --- named constructors -------------------------------------------------------


def build_metric(spec: dict, T: float) -> MetricFamily:
    name = spec.get("name", "static-flat")
    t_max = float(spec.get("t_max", T))
    if t_max < T:
        raise ConfigError(f"metric horizon {t_max} shorter than T = {T}")
    if name == "static-flat":
        return static_flat(t_max, float(spec.get("radius", 1.0)))
    if name == "breathing":
        return breathing(float(spec.get("amplitude", 0.2)), float(spec.get("omega", 2 * math.pi)), t_max)
    if name == "table":
        tab = spec.get("table")
        if not isinstance(tab, dict) or not {"times", "xs", "values"} <= set(tab):
            raise ConfigError("table metric needs table.times, table.xs and table.values")
        return tabulated(tab["times"], tab["xs"], tab["values"], t_max)
    raise ConfigError(f"unknown metric {name!r}; known: static-flat, breathing, table")


def _coefficient(spec):
    if isinstance(spec, (int, float)):
        return constant(spec)
    if isinstance(spec, dict) and "value" in spec:
        return modulated(spec["value"], spec.get("amplitude", 0.0), spec.get("omega", 0.0))
    raise ConfigError(f"coefficient must be a number or {{value, amplitude, omega}}, got {spec!r}")


def build_nonlinearity(spec: dict) -> NonlinearTerm:
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return ZERO
    if kind == "power":
        alpha = float(spec.get("alpha", 1.0))
        beta = float(spec.get("beta", alpha))
        P = _coefficient(spec.get("P", 1.0))
        P_b = _coefficient(spec.get("P_b", spec.get("P", 1.0)))
        return power(alpha, P, beta, P_b, name=spec.get("name", ""))
    if kind == "custom":
        name = spec.get("name")
        if name not in REGISTRY:
            raise ConfigError(f"unknown custom nonlinearity {name!r}; known: {sorted(REGISTRY)}")
        return from_registry(name)
    raise ConfigError(f"unknown nonlinearity kind {kind!r}")


def build_initial(spec: dict, grid: Grid, metric: MetricFamily, seed: int) -> StateVector:
    profile = spec.get("profile", "random")
    X, TH = grid.mesh()
    if profile == "constant":
        X0 = StateVector.constant(grid, complex(spec.get("value", 1.0)))
    elif profile == "gaussian-bump":
        x0, th0 = spec.get("center", [0.5, math.pi])
        width = float(spec.get("width", 0.15))
        dth = np.angle(np.exp(1j * (TH - th0)))
        X0 = StateVector.from_bulk(float(spec.get("amplitude", 1.0))
                                   * np.exp(-((X - x0) ** 2 + dth**2) / (2 * width**2)) + 0j)
    elif profile == "random":
        X0 = random_state(grid, np.random.default_rng(seed), complex_valued=bool(spec.get("complex", True)))
        X0 = X0 * (1.0 / norm(X0, weights_at(0.0, grid, metric)))
        X0 = X0 * float(spec.get("scale", 1.0))
    else:
        raise ConfigError(f"unknown initial profile {profile!r}; known: {list(PROFILES)}")
    if "norm" in spec:
        X0 = X0 * (float(spec["norm"]) / norm(X0, weights_at(0.0, grid, metric)))
    return X0


def build_forcing(spec: dict | None, grid: Grid) -> Forcing | None:
    """``value * cos(omega t) * bump(x, theta)`` on bulk and boundary; ``None`` when absent."""
    if not spec:
        return None
    kind = spec.get("kind", "uniform")
    value, omega = complex(spec.get("value", 1.0)), float(spec.get("omega", 0.0))
    X, TH = grid.mesh()
    if kind == "uniform":
        shape = np.ones(grid.shape)
    elif kind == "mode":
        shape = np.cos(X * math.pi) * np.cos(int(spec.get("k", 1)) * TH)
    else:
        raise ConfigError(f"unknown forcing kind {kind!r}; known: uniform, mode")
    base = StateVector.from_bulk(value * shape)
    return lambda t: base * math.cos(omega * t)
