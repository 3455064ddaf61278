"""EPR-steering functional built from two differently conditioned ensembles.

``S(t) = mean_D f1 + mean_H f2`` with ``f1`` evaluated on direct-detection
conditional states and ``f2`` on heterodyne conditional states.  For any
single qubit state ``f1 + f2 <= |r|^2 <= 1``, so ``S > 1`` rules out a single
objective conditional state shared by both schemes.

With the drive along ``sigma_x`` (see :func:`unravel.core.hamiltonian`) the
resonant Bloch vector moves in the ``y-z`` plane, so the coherence component
used by ``f1`` is ``<sigma_y>``, and ``f2 = <sigma_x>^2 + <sigma_z>^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d

from .core import SystemParams
from .diffusive import DiffusiveConfig, simulate_diffusive_ensemble
from .ensemble import write_curve_csv
from .jumps import simulate_mixed_jump_ensemble, simulate_pure_jump_ensemble
from .records import Ensemble

F1_AXIS = "sy"
F2_AXES = ("sx", "sz")


@dataclass
class SteeringCurve:
    t_grid: np.ndarray
    s: np.ndarray
    f1_mean: np.ndarray
    f2_mean: np.ndarray
    stderr: np.ndarray
    envelope: np.ndarray

    def steady_envelope(self, t_min: float | None = None) -> float:
        """Mean of the envelope over the final third of the grid (or ``t >= t_min``)."""
        if t_min is None:
            t_min = self.t_grid[0] + 2.0 * (self.t_grid[-1] - self.t_grid[0]) / 3.0
        return float(np.mean(self.envelope[self.t_grid >= t_min]))

    def to_csv(self, path: str | Path, comment: str = "") -> None:
        write_curve_csv(
            path,
            {"t": self.t_grid, "S": self.s, "f1_mean": self.f1_mean, "f2_mean": self.f2_mean, "envelope": self.envelope},
            comment or "units: gamma*t",
        )


def f1(bloch: np.ndarray) -> np.ndarray:
    return bloch[..., 1] ** 2


def f2(bloch: np.ndarray) -> np.ndarray:
    return bloch[..., 0] ** 2 + bloch[..., 2] ** 2


def envelope(t_grid: np.ndarray, s: np.ndarray, window: float) -> np.ndarray:
    """Sliding maximum of ``s`` over a centred window of length ``window``."""
    dt = t_grid[1] - t_grid[0]
    width = max(1, int(round(window / dt)) + 1)
    return maximum_filter1d(s, size=width, mode="nearest")


def steering_value(direct: Ensemble, heterodyne: Ensemble, rabi_half: float) -> SteeringCurve:
    """Steering functional of a direct-detection and a heterodyne ensemble.

    ``rabi_half`` sets the envelope window, one Rabi period ``pi / Omega``.
    """
    if direct.t_grid.shape != heterodyne.t_grid.shape or np.any(direct.t_grid != heterodyne.t_grid):
        raise ValueError("direct and heterodyne ensembles do not share a time grid")
    a = f1(direct.bloch)
    b = f2(heterodyne.bloch)
    f1_mean = a.mean(axis=0)
    f2_mean = b.mean(axis=0)
    stderr = np.sqrt(a.var(axis=0) / len(direct) + b.var(axis=0) / len(heterodyne))
    s = f1_mean + f2_mean
    window = np.pi / rabi_half if rabi_half > 0 else direct.t_grid[-1]
    return SteeringCurve(direct.t_grid, s, f1_mean, f2_mean, stderr, envelope(direct.t_grid, s, window))


def simulate_steering(params: SystemParams, efficiency: float, n_traj: int | None = None, threads: int = 1) -> SteeringCurve:
    """Run both ensembles from ``|down>`` and combine them.

    The direct ensemble uses detection efficiency ``efficiency`` in vacuum
    (``nbar = 0``); the heterodyne ensemble has unit efficiency.
    """
    base = params.with_(thermal=0.0, efficiency=1.0)
    if efficiency >= 1.0:
        direct = simulate_pure_jump_ensemble(base, n_traj, threads)
    else:
        direct = simulate_mixed_jump_ensemble(base.with_(efficiency=efficiency), n_traj, threads)
    het = simulate_diffusive_ensemble(base, DiffusiveConfig("heterodyne"), n_traj, threads)
    return steering_value(direct, het, params.rabi_half)
