"""CSV trajectories, run summaries and plot-ready data files."""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .sets import SmoothSet, boundary_points
from .sim import Trajectory

_FMT = "%.17g"


def _f(v: float) -> str:
    return _FMT % v


def trajectory_header(n: int, m: int, h_names: Sequence[str]) -> List[str]:
    return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
            + ["stage", "slack"] + [f"h_{s}" for s in h_names])


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """One row per sample; floats use 17 significant digits so a read-back is exact."""
    path = Path(path)
    names = list(traj.h_values)
    K = len(traj)
    stage = traj.stage if traj.stage is not None else np.zeros(K, dtype=int)
    slack = traj.slack if traj.slack is not None else np.zeros(K)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(traj.states.shape[1], traj.inputs.shape[1], names))
        for k in range(K):
            w.writerow([_f(traj.times[k])] + [_f(v) for v in traj.states[k]] + [_f(v) for v in traj.inputs[k]]
                       + [str(int(stage[k])), _f(slack[k])] + [_f(traj.h_values[s][k]) for s in names])
    return path


def read_trajectory_csv(path) -> Trajectory:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    head = rows[0]
    try:
        si = head.index("stage")
        n = sum(1 for c in head[:si] if re.fullmatch(r"x\d+", c))
        m = sum(1 for c in head[:si] if re.fullmatch(r"u\d+", c))
    except ValueError:
        raise ValueError(f"{path}: not a trajectory file (header {head})") from None
    h_names = [c[2:] for c in head[si + 2:]]
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(head))
    return Trajectory(
        times=data[:, 0].copy(),
        states=data[:, 1:1 + n].copy(),
        inputs=data[:, 1 + n:1 + n + m].copy(),
        h_values={s: data[:, si + 2 + j].copy() for j, s in enumerate(h_names)},
        stage=data[:, si].astype(int),
        slack=data[:, si + 1].copy(),
    )


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_f(v) if isinstance(v, float) else v for v in r])
    return path


def emit_plot_data(traj: Trajectory, sets: Sequence[SmoothSet], out_dir, prefix: str = "run") -> List[Path]:
    """Write ``<prefix>_path.csv``, ``<prefix>_unorm.csv`` and ``boundaries.csv``.

    The path file lists the first two state coordinates with the active stage;
    boundaries hold 360 points per 2-D set. An empty trajectory yields header-only
    files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = len(traj)
    stage = traj.stage if traj.stage is not None else np.zeros(K, dtype=int)
    n = traj.states.shape[1] if traj.states.ndim == 2 else 0
    cols = min(n, 2)
    paths = [
        write_rows(out / f"{prefix}_path.csv", ["t"] + [f"x{i + 1}" for i in range(cols)] + ["stage"],
                   ([float(traj.times[k])] + [float(v) for v in traj.states[k, :cols]] + [int(stage[k])]
                    for k in range(K))),
        write_rows(out / f"{prefix}_unorm.csv", ["t", "unorm"],
                   ([float(traj.times[k]), float(np.linalg.norm(traj.inputs[k]))] for k in range(K))),
    ]
    rows = []
    for s in sets:
        if s.dim != 2:
            continue
        for k, p in enumerate(boundary_points(s, 360)):
            rows.append([s.name, k, float(p[0]), float(p[1])])
    paths.append(write_rows(out / "boundaries.csv", ["set", "k", "x1", "x2"], rows))
    return paths
