"""Execute run configurations and parameter sweeps, writing per-run artifacts."""

from __future__ import annotations

import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError, RunConfig, build_metric, parse_config
from .diagnostics import Check, CertificateReport, operator_certificates, smoothing_profile, trajectory_certificates
from .evolution import linear_evolve, maximal_solve
from .io import save_state, write_json, write_trajectory_csv
from .mms import ManufacturedSolution, fit_order, spatial_errors, temporal_errors

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3
SMOOTHING_RATIO = 10.0
SMOOTHING_SLOPE = -1.3


@dataclass
class RunOutcome:
    exit_code: int
    status: str
    report: CertificateReport
    out_dir: Path
    files: dict[str, Path] = field(default_factory=dict)


def execute(cfg: RunConfig, out_dir: str | Path | None = None) -> RunOutcome:
    """Simulate one configuration and evaluate its enabled certificates."""
    out = Path(out_dir or cfg.output)
    grid = cfg.build_grid()
    sc = cfg.solver_config()
    metric = cfg.build_metric()
    term = cfg.build_nonlinearity()
    forcing = cfg.build_forcing()
    X0 = cfg.initial_state(grid, metric)
    opts = cfg.certificates

    report = CertificateReport(trajectory_ref=str(out / "trajectory.csv"), metadata={
        "seed": cfg.seed, "equation": cfg.equation, "grid": list(cfg.grid),
        "metric": cfg.metric, "nonlinearity": cfg.nonlinearity, "solver": vars(sc),
    })
    if opts.operator:
        for t in sorted({0.0, 0.5 * sc.T, sc.T}):
            rep = operator_certificates(t, grid, metric, seed=cfg.seed, samples=opts.samples)
            for c in rep.checks:
                c.name = f"{c.name}@t={t:g}"
            report.extend(rep)

    log.info("running %s on %dx%d, T=%g dt=%g", cfg.equation, *cfg.grid, sc.T, sc.dt)
    if term.is_zero:
        traj = linear_evolve(sc.kappa, X0, forcing, sc.T, sc.dt, grid, metric)
    else:
        traj = maximal_solve(X0, sc, grid, metric, term, forcing)
    report.metadata.update(status=traj.status, reason=traj.reason, steps=traj.n_steps,
                           blowup_bracket=traj.blowup_bracket)

    if opts.trajectory and traj.status != "failed":
        report.extend(trajectory_certificates(
            traj, sc, metric, term, forced=forcing is not None,
            expected_blowup=opts.expected_blowup, blowup_tolerance=opts.blowup_tolerance))
    if opts.smoothing and traj.status == "completed":
        prof = smoothing_profile(traj, t_end=min(1.0, sc.T))
        report.checks.append(Check.upper("smoothing_sup_over_median", prof.sup_over_median,
                                         SMOOTHING_RATIO, "t ||A X(t)|| <= M / t"))
        report.checks.append(Check.lower("smoothing_early_slope", prof.early_slope, SMOOTHING_SLOPE,
                                         "log ||A X|| versus log t"))

    files = {
        "trajectory": write_trajectory_csv(traj, out / "trajectory.csv"),
        "state": save_state(traj, out / "final_state.npz"),
        "report": write_json(report.to_dict(), out / "report.json"),
    }
    if traj.status == "failed":
        code = EXIT_SIM
    else:
        code = EXIT_OK if report.passed else EXIT_CERT
    return RunOutcome(code, traj.status, report, out, files)


# --- sweeps -----------------------------------------------------------------------

SWEEP_PARAMETERS = ("dt", "grid", "alpha", "amplitude")


def _point_config(base: dict, parameter: str, value, index: int) -> dict:
    d = copy.deepcopy(base)
    d.pop("sweep", None)
    d["seed"] = int(base.get("seed", 0)) + index
    if parameter == "dt":
        d.setdefault("solver", {})["dt"] = float(value)
    elif parameter == "grid":
        d["grid"] = [int(value) + 1, int(value)] if isinstance(value, int) else list(value)
    elif parameter == "alpha":
        nl = d.setdefault("nonlinearity", {"kind": "power"})
        if nl.get("kind") != "power":
            raise ConfigError("alpha sweep needs a power nonlinearity")
        nl["alpha"] = nl["beta"] = float(value)
    elif parameter == "amplitude":
        d.setdefault("metric", {"name": "breathing"})["amplitude"] = float(value)
    return d


def _run_point(args) -> dict:
    data, out = args
    try:
        res = execute(parse_config(data), out)
    except Exception as exc:  # reported per point, the sweep carries on
        return {"exit_code": EXIT_SIM, "status": "error", "error": str(exc), "out": str(out)}
    return {"exit_code": res.exit_code, "status": res.status, "passed": res.report.passed,
            "failed_checks": [c.name for c in res.report.failed()], "out": str(out)}


def _mms_point(args) -> float:
    kind, equation, metric_spec, value, opts = args
    T = float(opts.get("T", 0.2 if kind == "grid" else 0.5))
    sol = ManufacturedSolution(build_metric(metric_spec, T), 1.0 if equation == "heat" else 1j)
    if kind == "dt":
        return float(temporal_errors(sol, [float(value)], n=int(opts.get("n", 16)), T=T)[0])
    return float(spatial_errors(sol, [int(value)], dt=float(opts.get("dt", 1e-3)), T=T)[0])


def run_sweep(base: dict, out_dir: str | Path, jobs: int | None = None) -> tuple[int, dict]:
    """Run every sweep point concurrently and aggregate results.

    ``sweep`` keys: ``parameter`` (dt | grid | alpha | amplitude), ``values``,
    ``mode`` (run | mms), and for ``mms`` the ``expected_order``/``tolerance``
    of the fitted convergence order.
    """
    spec = base.get("sweep")
    if not isinstance(spec, dict):
        raise ConfigError("sweep config needs a 'sweep' mapping")
    parameter = spec.get("parameter")
    values = spec.get("values")
    mode = spec.get("mode", "run")
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep values must be a nonempty list")
    if mode not in ("run", "mms"):
        raise ConfigError(f"sweep mode must be run or mms, got {mode!r}")
    # validate the base configuration itself
    parse_config({k: v for k, v in base.items() if k != "sweep"})
    out = Path(out_dir)
    jobs = jobs or min(len(values), os.cpu_count() or 1)
    summary: dict = {"parameter": parameter, "values": values, "mode": mode}

    if mode == "mms":
        if parameter not in ("dt", "grid"):
            raise ConfigError("mms sweeps vary dt or grid")
        metric_spec = base.get("metric", {"name": "static-flat"})
        args = [(parameter, base.get("equation", "heat"), metric_spec, v, spec) for v in values]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            errors = list(pool.map(_mms_point, args))
        h = [float(v) for v in values] if parameter == "dt" else [1.0 / int(v) for v in values]
        order = fit_order(h, errors)
        expected = float(spec.get("expected_order", 2.0))
        tol = float(spec.get("tolerance", 0.2))
        passed = abs(order - expected) <= tol
        summary.update(errors=errors, h=h, order=order, expected_order=expected,
                       tolerance=tol, passed=passed, failed_points=[])
        write_json(summary, out / "sweep_report.json")
        return (EXIT_OK if passed else EXIT_CERT), summary

    args = [(_point_config(base, parameter, v, i), out / f"point_{i:03d}") for i, v in enumerate(values)]
    for data, _ in args:
        parse_config(data)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        points = list(pool.map(_run_point, args))
    for p, v in zip(points, values):
        p["value"] = v
    failed = [p for p in points if p["exit_code"] != EXIT_OK]
    summary.update(points=points, failed_points=[p["value"] for p in failed], passed=not failed)
    write_json(summary, out / "sweep_report.json")
    return (EXIT_OK if not failed else EXIT_CERT), summary
