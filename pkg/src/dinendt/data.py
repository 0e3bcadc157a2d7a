"""Trajectory datasets and their CSV form.

CSV schema: header ``traj,t,x0..x{dx-1},y0..y{dy-1}``, rows sorted by
``(traj, t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset input."""


@dataclass
class TrajectoryDataset:
    trajectories: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        if not self.trajectories:
            raise DatasetError("dataset has no trajectories")
        dx = self.trajectories[0][0].shape[1]
        dy = self.trajectories[0][1].shape[1]
        for k, (x, y) in enumerate(self.trajectories):
            if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
                raise DatasetError(f"trajectory {k}: x and y must be (T, d) arrays of equal length")
            if x.shape[1] != dx or y.shape[1] != dy:
                raise DatasetError(f"trajectory {k}: inconsistent dimensions")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise DatasetError(f"trajectory {k}: non-finite values")

    @classmethod
    def from_arrays(cls, x, y) -> "TrajectoryDataset":
        """One trajectory from ``(T, d)`` arrays, or several from ``(N, T, d)`` arrays."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim == 1:
            x, y = x[:, None], y[:, None]
        if x.ndim == 2:
            return cls([(x, y)])
        return cls([(x[k], y[k]) for k in range(x.shape[0])])

    @property
    def d_x(self) -> int:
        return self.trajectories[0][0].shape[1]

    @property
    def d_y(self) -> int:
        return self.trajectories[0][1].shape[1]

    @property
    def n_steps(self) -> int:
        return sum(x.shape[0] for x, _ in self.trajectories)

    def all_outputs(self) -> np.ndarray:
        return np.concatenate([y for _, y in self.trajectories])

    def sample_windows(self, rng: np.random.Generator, count: int, length: int) -> tuple[np.ndarray, np.ndarray]:
        """``count`` random windows of ``length`` steps, trajectory chosen by number of windows it holds."""
        sizes = np.array([max(x.shape[0] - length + 1, 0) for x, _ in self.trajectories])
        if sizes.sum() == 0:
            raise DatasetError(f"no trajectory is at least {length} steps long")
        traj = rng.choice(len(sizes), size=count, p=sizes / sizes.sum())
        starts = np.floor(rng.random(count) * sizes[traj]).astype(int)
        xs = np.stack([self.trajectories[k][0][s:s + length] for k, s in zip(traj, starts)])
        ys = np.stack([self.trajectories[k][1][s:s + length] for k, s in zip(traj, starts)])
        return xs, ys

    def tiled_windows(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """All non-overlapping windows of ``length`` steps, in order."""
        xs, ys = [], []
        for x, y in self.trajectories:
            n = x.shape[0] // length
            if n:
                xs.append(x[:n * length].reshape(n, length, -1))
                ys.append(y[:n * length].reshape(n, length, -1))
        if not xs:
            raise DatasetError(f"no trajectory is at least {length} steps long")
        return np.concatenate(xs), np.concatenate(ys)


def ingest_csv(path: str | Path) -> TrajectoryDataset:
    """Read a dataset CSV; errors name the offending line."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if header[:2] != ["traj", "t"]:
            raise DatasetError(f"{path}:1: header must start with traj,t")
        xcols = [h for h in header[2:] if h.startswith("x")]
        ycols = [h for h in header[2:] if h.startswith("y")]
        if not xcols or not ycols:
            raise DatasetError(f"{path}:1: header needs x0.. and y0.. columns")
        expected = ["traj", "t"] + [f"x{k}" for k in range(len(xcols))] + [f"y{k}" for k in range(len(ycols))]
        if header != expected:
            raise DatasetError(f"{path}:1: header {','.join(header)} does not match {','.join(expected)}")
        dx = len(xcols)
        groups: dict[str, list[list[float]]] = {}
        order: list[str] = []
        last_t: dict[str, float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            key = row[0].strip()
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in values):
                raise DatasetError(f"{path}:{lineno}: non-finite cell")
            if key in last_t and values[0] <= last_t[key]:
                raise DatasetError(f"{path}:{lineno}: rows of trajectory {key} are not sorted by t")
            if key not in groups:
                groups[key] = []
                order.append(key)
            elif key != order[-1]:
                raise DatasetError(f"{path}:{lineno}: trajectory {key} is not contiguous")
            last_t[key] = values[0]
            groups[key].append(values[1:])
    if not groups:
        raise DatasetError(f"{path}: no data rows")
    trajs = []
    for key in order:
        arr = np.asarray(groups[key], dtype=np.float64)
        trajs.append((arr[:, :dx], arr[:, dx:]))
    return TrajectoryDataset(trajs)


def write_csv(path: str | Path, dataset: TrajectoryDataset) -> None:
    header = ["traj", "t"] + [f"x{k}" for k in range(dataset.d_x)] + [f"y{k}" for k in range(dataset.d_y)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, (x, y) in enumerate(dataset.trajectories):
            for t in range(x.shape[0]):
                w.writerow([k, t] + [repr(float(v)) for v in x[t]] + [repr(float(v)) for v in y[t]])
