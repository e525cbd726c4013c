"""Command-line entry point: ``wentzell {run,plot,sweep,certify}``.

Flags may also come from ``WENTZELL_CONFIG``, ``WENTZELL_OUT``, ``WENTZELL_SEED``
and ``WENTZELL_QUIET``; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .config import ConfigError, load_config
from .diagnostics import CertificateReport, operator_certificates
from .io import MissingColumnError, plot_trajectory, write_json
from .runner import EXIT_CERT, EXIT_CONFIG, EXIT_OK, execute, run_sweep

ENV_PREFIX = "WENTZELL_"


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wentzell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", default=_env("CONFIG"), help="JSON or YAML run configuration")
        sp.add_argument("--out", default=_env("OUT"), help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--quiet", action="store_true", default=bool(_env("QUIET")))

    common(sub.add_parser("run", help="simulate one configuration"))
    sp = sub.add_parser("plot", help="plot a trajectory CSV")
    sp.add_argument("csv", help="trajectory.csv written by run")
    common(sp, config=False)
    sp = sub.add_parser("sweep", help="parameter sweep with aggregated report")
    common(sp)
    sp.add_argument("--jobs", type=int, default=None, help="worker processes")
    sp = sub.add_parser("certify", help="operator certificates only")
    common(sp)
    sp.add_argument("--t", type=float, action="append", help="assembly time (repeatable)")
    return p


def _overrides(args) -> dict:
    seed = args.seed if args.seed is not None else _env("SEED")
    if seed is None:
        return {}
    try:
        return {"seed": int(seed)}
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from None


def _require_config(args) -> Path:
    if not args.config:
        raise ConfigError("no config given (--config or WENTZELL_CONFIG)")
    return Path(args.config)


def cmd_run(args) -> int:
    cfg = load_config(_require_config(args), _overrides(args))
    res = execute(cfg, args.out)
    if not args.quiet:
        for c in res.report.checks:
            mark = "ok  " if c.passed else "FAIL"
            print(f"{mark} {c.name:<34} {c.value:.3e} {c.relation} {c.threshold:g}")
        print(f"status {res.status}; artifacts in {res.out_dir}")
    return res.exit_code


def cmd_plot(args) -> int:
    files = plot_trajectory(args.csv, args.out)
    if not args.quiet:
        for f in files:
            print(f)
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = _require_config(args)
    try:
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read sweep config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("sweep config must be a mapping")
    data.update(_overrides(args))
    out = args.out or data.get("output", "runs/sweep")
    code, summary = run_sweep(data, out, args.jobs)
    if not args.quiet:
        if "order" in summary:
            print(f"{summary['parameter']} sweep: fitted order {summary['order']:.3f} "
                  f"(expected {summary['expected_order']} +/- {summary['tolerance']})")
        else:
            for p in summary["points"]:
                print(f"{summary['parameter']}={p['value']}: exit {p['exit_code']} ({p['status']})")
        if summary["failed_points"]:
            print(f"failed points: {summary['failed_points']}")
    return code


def cmd_certify(args) -> int:
    cfg = load_config(_require_config(args), _overrides(args))
    grid, metric = cfg.build_grid(), cfg.build_metric()
    times = args.t or cfg.certify.get("times") or [0.0]
    report = CertificateReport(metadata={"seed": cfg.seed, "times": times})
    for t in times:
        rep = operator_certificates(float(t), grid, metric, seed=cfg.seed,
                                    samples=int(cfg.certify.get("samples", cfg.certificates.samples)))
        for c in rep.checks:
            c.name = f"{c.name}@t={float(t):g}"
        report.extend(rep)
    out = Path(args.out or cfg.output)
    write_json(report.to_dict(), out / "certificates.json")
    if not args.quiet:
        for c in report.checks:
            print(f"{'ok  ' if c.passed else 'FAIL'} {c.name:<34} {c.value:.3e}")
    return EXIT_OK if report.passed else EXIT_CERT


COMMANDS = {"run": cmd_run, "plot": cmd_plot, "sweep": cmd_sweep, "certify": cmd_certify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, MissingColumnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
