"""Nonlinear trajectory averages (QTAV and powers) and frequency diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .records import Ensemble, TrajectoryRecord


@dataclass
class EnsembleCurve:
    """Per-time statistics of a single-trajectory expectation value."""

    t_grid: np.ndarray
    mean: np.ndarray
    qtav: np.ndarray
    stderr_mean: np.ndarray
    stderr_qtav: np.ndarray
    n_traj: int
    m_moments: dict[int, np.ndarray] = field(default_factory=dict)

    def to_csv(self, path: str | Path, comment: str = "") -> None:
        write_curve_csv(
            path,
            {"t": self.t_grid, "mean": self.mean, "qtav": self.qtav, "stderr_mean": self.stderr_mean, "stderr_qtav": self.stderr_qtav},
            comment or f"units: gamma*t; n_traj={self.n_traj}",
        )


def write_curve_csv(path: str | Path, columns: dict[str, np.ndarray], comment: str = "") -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*(np.asarray(columns[n]) for n in names)):
            writer.writerow([repr(float(x)) for x in row])


def read_curve_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    names = next(reader)
    data = np.array([[float(x) for x in row] for row in reader])
    return {n: data[:, k] for k, n in enumerate(names)}


def _samples(trajectories: Ensemble | Sequence[TrajectoryRecord], observable: str):
    """Return ``(t_grid, values)`` with values of shape ``(n_traj, n_t)``."""
    if isinstance(trajectories, Ensemble):
        return trajectories.t_grid, trajectories.expectation(observable)
    records = list(trajectories)
    if not records:
        raise ValueError("empty ensemble")
    grid = records[0].t_grid
    for r in records[1:]:
        if r.t_grid.shape != grid.shape or np.any(r.t_grid != grid):
            raise ValueError("trajectories do not share a time grid")
    return grid, np.stack([r.expectation(observable) for r in records])


def _values(trajectories, observable: str):
    sign = 1.0
    if observable.startswith("-"):
        sign, observable = -1.0, observable[1:]
    t, v = _samples(trajectories, observable)
    return t, sign * v


def curve_from_samples(t_grid: np.ndarray, values: np.ndarray) -> EnsembleCurve:
    """Statistics of ``values`` (shape ``(n_traj, n_t)``) summed in trajectory order."""
    n = values.shape[0]
    if n < 2:
        raise ValueError("need at least two trajectories")
    mean = np.sum(values, axis=0) / n
    dev = values - mean
    m2 = np.sum(dev**2, axis=0) / n
    m4 = np.sum(dev**4, axis=0) / n
    var = m2
    stderr_mean = np.sqrt(m2 / n)
    stderr_var = np.sqrt(np.maximum(m4 - m2**2, 0.0) / n)
    return EnsembleCurve(np.asarray(t_grid), mean, var, stderr_mean, stderr_var, n)


def qtav(trajectories: Ensemble | Sequence[TrajectoryRecord], observable: str = "sz") -> EnsembleCurve:
    """Quantum-trajectory-averaged variance of ``observable`` (population convention, 1/N).

    ``observable`` is ``"sx"``, ``"sy"`` or ``"sz"``; a leading ``-`` flips the sign.
    """
    t, v = _values(trajectories, observable)
    return curve_from_samples(t, v)


def power_average(trajectories: Ensemble | Sequence[TrajectoryRecord], observable: str, m: int) -> EnsembleCurve:
    """Ensemble mean of ``<O>^m``; ``mean`` holds the power average, ``qtav`` the plain QTAV."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    t, v = _values(trajectories, observable)
    base = curve_from_samples(t, v)
    powered = curve_from_samples(t, v**m)
    return EnsembleCurve(t, powered.mean, base.qtav, powered.stderr_mean, base.stderr_qtav, base.n_traj, {m: powered.mean})


def dominant_frequency(curve: EnsembleCurve | tuple[np.ndarray, np.ndarray], window: tuple[float, float] = (0.0, 4.0), signal: str = "qtav", min_periods: float = 4.0) -> float:
    """Angular frequency of the largest Fourier peak of a curve inside ``window``.

    The signal is detrended by its mean over the window and zero-padded
    eightfold before the FFT, so the peak is located to a fraction of a bin
    (one bin is ``2 pi / window length``).
    """
    if isinstance(curve, EnsembleCurve):
        t, y = curve.t_grid, getattr(curve, signal)
    else:
        t, y = map(np.asarray, curve)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    t, y = t[sel], y[sel]
    if len(t) < 16:
        raise ValueError("window too short: fewer than 16 samples")
    dt = t[1] - t[0]
    span = t[-1] - t[0]
    y = y - y.mean()
    n_fft = 8 * len(y)
    spectrum = np.abs(np.fft.rfft(y * np.hanning(len(y)), n_fft))
    freqs = 2 * np.pi * np.fft.rfftfreq(n_fft, dt)
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    omega = float(freqs[k])
    if omega * span / (2 * np.pi) < min_periods:
        raise ValueError(f"window too short: contains {omega * span / (2 * np.pi):.2f} periods of the peak frequency")
    return omega


def fft_bin(window: tuple[float, float]) -> float:
    return 2 * np.pi / (window[1] - window[0])


def pooled_difference(a: EnsembleCurve, b: EnsembleCurve, t_range: tuple[float, float], field: str = "qtav") -> tuple[float, float]:
    """Time-integrated |a - b| and its pooled Monte-Carlo standard error over ``t_range``."""
    t = a.t_grid
    sel = (t >= t_range[0] - 1e-12) & (t <= t_range[1] + 1e-12)
    err_field = "stderr_mean" if field == "mean" else "stderr_qtav"
    diff = getattr(a, field)[sel] - getattr(b, field)[sel]
    err = np.hypot(getattr(a, err_field)[sel], getattr(b, err_field)[sel])
    dt = t[1] - t[0]
    return float(np.sum(np.abs(diff)) * dt), float(np.sum(err) * dt)
