"""Trajectory containers and the click-file format."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np


@dataclass
class ClickRecord:
    """Detected photon emissions of one trajectory (dimensionless times)."""

    click_times: np.ndarray
    t_max: float
    channel: str = "emission"

    def __post_init__(self) -> None:
        self.click_times = np.asarray(self.click_times, dtype=float)
        c = self.click_times
        if c.size and (np.any(np.diff(c) <= 0) or c[0] < 0 or c[-1] > self.t_max):
            raise ValueError("click times must be strictly increasing and lie in [0, t_max]")

    def __len__(self) -> int:
        return len(self.click_times)

    def to_text(self, seed: int, traj: int) -> str:
        lines = [f"# gamma_t clicks, seed={seed}, traj={traj}"]
        lines += [f"{t:.12g}" for t in self.click_times]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path, seed: int, traj: int) -> None:
        Path(path).write_text(self.to_text(seed, traj))

    @classmethod
    def from_text(cls, text: str, t_max: float | None = None) -> "ClickRecord":
        times = read_timestamps(io.StringIO(text))
        if t_max is None:
            t_max = float(times[-1]) if times.size else 0.0
        return cls(times, t_max)

    @classmethod
    def read(cls, path: str | Path, t_max: float | None = None) -> "ClickRecord":
        return cls.from_text(Path(path).read_text(), t_max)


def read_timestamps(stream) -> np.ndarray:
    values = []
    for line in stream:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        values.append(float(line))
    return np.asarray(values, dtype=float)


@dataclass
class TrajectoryRecord:
    """Single realisation: Bloch samples on ``t_grid`` plus detected clicks."""

    t_grid: np.ndarray
    bloch: np.ndarray
    clicks: ClickRecord | None = None
    purity: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.bloch = np.asarray(self.bloch, dtype=float)
        if self.bloch.shape != (len(self.t_grid), 3):
            raise ValueError("bloch samples must have shape (len(t_grid), 3)")

    def expectation(self, observable: str) -> np.ndarray:
        return self.bloch[:, AXES[observable]]


AXES = {"sx": 0, "sy": 1, "sz": 2}


@dataclass
class Ensemble:
    """Many trajectories sharing one time grid, stored as dense arrays.

    ``bloch`` has shape ``(n_traj, n_t, 3)``; trajectory ``k`` was generated
    from random stream ``k`` of ``seed``.
    """

    t_grid: np.ndarray
    bloch: np.ndarray
    clicks: list[ClickRecord] | None = None
    purity: np.ndarray | None = None
    seed: int = 0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.bloch.shape[0]

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        for k in range(len(self)):
            yield self.trajectory(k)

    @property
    def n_traj(self) -> int:
        return len(self)

    def trajectory(self, k: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            self.t_grid,
            self.bloch[k],
            None if self.clicks is None else self.clicks[k],
            None if self.purity is None else self.purity[k],
        )

    def expectation(self, observable: str) -> np.ndarray:
        """Per-trajectory expectation values, shape ``(n_traj, n_t)``."""
        return self.bloch[:, :, AXES[observable]]

    @classmethod
    def concatenate(cls, parts: list["Ensemble"]) -> "Ensemble":
        first = parts[0]
        clicks = None
        if first.clicks is not None:
            clicks = [c for p in parts for c in p.clicks]
        purity = None
        if first.purity is not None:
            purity = np.concatenate([p.purity for p in parts])
        return cls(first.t_grid, np.concatenate([p.bloch for p in parts]), clicks, purity, first.seed, first.label, dict(first.meta))

    @classmethod
    def from_records(cls, records: list[TrajectoryRecord]) -> "Ensemble":
        grid = records[0].t_grid
        for r in records[1:]:
            if r.t_grid.shape != grid.shape or np.any(r.t_grid != grid):
                raise ValueError("trajectories do not share a time grid")
        clicks = [r.clicks for r in records] if all(r.clicks is not None for r in records) else None
        return cls(grid, np.stack([r.bloch for r in records]), clicks)
