"""On-disk artifacts: trajectory CSV, final-state snapshot, JSON reports and plots."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .evolution import Trajectory

CSV_COLUMNS = ("t", "norm_ref", "norm_inst", "graph_norm", "picard_iterations")


class MissingColumnError(ValueError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    """One header row plus one row per recorded time (accepted steps + 1)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(traj.times, traj.norms_ref, traj.norms_inst, traj.graph_norms, traj.iterations):
            w.writerow([_fmt(v) for v in row[:4]] + [str(int(row[4]))])
    return path


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MissingColumnError(f"{path} is empty; expected columns {list(CSV_COLUMNS)}")
    header, body = rows[0], rows[1:]
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise MissingColumnError(f"{path} lacks columns {missing}")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {c: data[:, header.index(c)] for c in CSV_COLUMNS}


def save_state(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X = traj.final
    np.savez(path, t=traj.times[-1], u=X.u, v=X.v, shape=np.array(traj.grid.shape))
    return path


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
    return path


def plot_trajectory(csv_path: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Norm and graph-norm curves against time, one PNG each."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = Path(csv_path)
    data = read_trajectory_csv(csv_path)
    out_dir = Path(out_dir) if out_dir else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data["t"], data["norm_inst"], label="instantaneous weights")
    ax.plot(data["t"], data["norm_ref"], "--", label="reference weights")
    ax.set_xlabel("t")
    ax.set_ylabel("||X(t)||")
    ax.legend()
    fig.tight_layout()
    written.append(out_dir / "norm.png")
    fig.savefig(written[-1], dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    g = data["graph_norm"]
    if np.any(g > 0) and np.all(data["t"][1:] > 0):
        ax.loglog(data["t"][1:], np.maximum(g[1:], 1e-300))
    else:
        ax.plot(data["t"], g)
    ax.set_xlabel("t")
    ax.set_ylabel("||A X(t)||")
    fig.tight_layout()
    written.append(out_dir / "graph_norm.png")
    fig.savefig(written[-1], dpi=120)
    plt.close(fig)
    return written
