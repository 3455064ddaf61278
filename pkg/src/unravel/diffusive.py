"""Homodyne and heterodyne (Wiener-type) trajectories.

Both are integrated with Euler-Maruyama followed by normalisation.  Homodyne
detection at local-oscillator phase ``theta`` measures the channel
``c = sqrt(gamma) e^{-i theta} sigma_-``: the unnormalised state is advanced by

    dpsi = [-i H - (gamma/2) sigma_+ sigma_-] psi dt + c psi dY,
    dY   = <c + c^dagger> dt + dW,      E[dW^2] = dt,

and then normalised.  Heterodyne detection uses the quantum-state-diffusion
form with a complex Wiener increment (``E[|dW|^2] = 2 dt``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SystemParams
from .records import Ensemble, TrajectoryRecord
from .rng import draw_chunk, run_blocks, trajectory_rngs

NORM_FLOOR = 1e-12
TIME_CHUNK = 512


class NormCollapseError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DiffusiveConfig:
    """Detection scheme for a Wiener-type unraveling.

    ``explicit_lo`` replaces the averaged heterodyne equation by homodyne
    detection with a rotating phase ``theta(t) = -(omega_LO - omega_A) t``.
    ``efficiency < 1`` is supported for homodyne only and switches to a
    density-matrix trajectory.
    """

    mode: str = "heterodyne"
    theta: float = 0.0
    efficiency: float = 1.0
    explicit_lo: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("homodyne", "heterodyne"):
            raise ValueError(f"unknown diffusive mode {self.mode!r}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.efficiency < 1.0 and self.mode != "homodyne":
            raise ValueError("imperfect detection is only implemented for homodyne")

    @property
    def label(self) -> str:
        if self.mode == "homodyne":
            return f"homodyne(theta={self.theta:.6g})"
        return "heterodyne-explicit" if self.explicit_lo else "heterodyne"


def diffusive_step(params: SystemParams) -> float:
    """Euler step: ``dt`` capped at ``1e-3`` and ``0.02/Omega``, dividing ``sample_dt`` evenly."""
    h = min(params.dt, 1e-3)
    if params.rabi_half > 0:
        h = min(h, 0.02 / params.rabi_half)
    n = math.ceil(params.sample_dt / h - 1e-9)
    return params.sample_dt / n


def _h_apply(params: SystemParams, a, b):
    """``H psi`` for ``H = -(Delta/2) sigma_z + Omega sigma_x`` on amplitude arrays."""
    half = 0.5 * params.detuning
    om = params.rabi_half
    return half * a + om * b, om * a - half * b


def _normalize(a, b):
    norm = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    if np.min(norm) < NORM_FLOOR:
        raise NormCollapseError("state norm collapsed below 1e-12; reduce dt")
    return a / norm, b / norm


def homodyne_update(params: SystemParams, a, b, dw, dt: float, theta):
    g = params.decay
    phase = np.exp(-1j * theta)
    ha, hb = _h_apply(params, a, b)
    # <e^{i theta} s+ + e^{-i theta} s-> = 2 Re(e^{-i theta} conj(a) b)
    quadrature = 2.0 * np.real(phase * np.conj(a) * b)
    record = math.sqrt(g) * quadrature * dt + dw
    new_a = a - 1j * ha * dt + math.sqrt(g) * phase * b * record
    new_b = b - 1j * hb * dt - 0.5 * g * b * dt
    return _normalize(new_a, new_b)


def heterodyne_update(params: SystemParams, a, b, dw, dt: float):
    g = params.decay
    rg = math.sqrt(g)
    ha, hb = _h_apply(params, a, b)
    mean_l = rg * np.conj(a) * b
    # L psi = sqrt(g) (b, 0);  L^dag L psi = g (0, b)
    drift_a = -1j * ha + np.conj(mean_l) * rg * b - 0.5 * np.abs(mean_l) ** 2 * a
    drift_b = -1j * hb - 0.5 * g * b - 0.5 * np.abs(mean_l) ** 2 * b
    noise_a = (rg * b - mean_l * a) / math.sqrt(2.0)
    noise_b = -mean_l * b / math.sqrt(2.0)
    return _normalize(a + drift_a * dt + noise_a * dw, b + drift_b * dt + noise_b * dw)


def step_homodyne(state, params: SystemParams, dw: float, dt: float | None = None, theta: float | None = None):
    """Advance a :class:`~unravel.core.PureState` by one homodyne step with Wiener increment ``dw``."""
    from .core import PureState

    dt = params.dt if dt is None else dt
    theta = params.lo_phase if theta is None else theta
    a, b = homodyne_update(params, np.array([state.amp_down]), np.array([state.amp_up]), dw, dt, theta)
    return PureState(complex(a[0]), complex(b[0]))


def step_heterodyne(state, params: SystemParams, dw: complex, dt: float | None = None):
    """Advance a :class:`~unravel.core.PureState` by one heterodyne step.

    ``dw = dWx + i dWy`` with independent real increments of variance ``dt``.
    """
    from .core import PureState

    dt = params.dt if dt is None else dt
    a, b = heterodyne_update(params, np.array([state.amp_down]), np.array([state.amp_up]), dw, dt)
    return PureState(complex(a[0]), complex(b[0]))


def _bloch(a, b) -> np.ndarray:
    ab = np.conj(a) * b
    return np.stack([2 * ab.real, -2 * ab.imag, np.abs(b) ** 2 - np.abs(a) ** 2], axis=-1)


def _pure_block(params: SystemParams, config: DiffusiveConfig, rngs) -> Ensemble:
    h = diffusive_step(params)
    stride = int(round(params.sample_dt / h))
    t_grid = params.sample_grid()
    n_steps = (len(t_grid) - 1) * stride
    n = len(rngs)
    a = np.ones(n, dtype=complex)
    b = np.zeros(n, dtype=complex)
    bloch = np.empty((n, len(t_grid), 3))
    bloch[:, 0] = _bloch(a, b)
    sq = math.sqrt(h)
    complex_noise = config.mode == "heterodyne" and not config.explicit_lo
    noise = None
    for step in range(n_steps):
        col = step % TIME_CHUNK
        if col == 0:
            kind = "complex-normal" if complex_noise else "normal"
            noise = sq * draw_chunk(rngs, min(TIME_CHUNK, n_steps - step), kind)
        dw = noise[:, col]
        if config.mode == "homodyne":
            a, b = homodyne_update(params, a, b, dw, h, config.theta)
        elif config.explicit_lo:
            theta = -params.het_detuning * step * h
            a, b = homodyne_update(params, a, b, dw, h, theta)
        else:
            a, b = heterodyne_update(params, a, b, dw, h)
        if (step + 1) % stride == 0:
            bloch[:, (step + 1) // stride] = _bloch(a, b)
    return Ensemble(t_grid, bloch, None, np.ones((n, len(t_grid))))


def _mixed_homodyne_block(params: SystemParams, config: DiffusiveConfig, rngs) -> Ensemble:
    """Homodyne with efficiency ``eta``: only ``sqrt(eta) dW`` enters the record.

    Positivity-preserving update: ``rho -> M rho M^dag + (1-eta) c rho c^dag dt``
    with ``M = 1 - (iH + c^dag c/2) dt + sqrt(eta) c dY``, then trace normalisation.
    """
    from .core import SIGMA_MINUS, hamiltonian

    eta = config.efficiency
    h = diffusive_step(params)
    stride = int(round(params.sample_dt / h))
    t_grid = params.sample_grid()
    n_steps = (len(t_grid) - 1) * stride
    n = len(rngs)
    c = math.sqrt(params.decay) * np.exp(-1j * config.theta) * SIGMA_MINUS
    cd = c.conj().T
    base = np.eye(2) - (1j * hamiltonian(params) + 0.5 * cd @ c) * h
    rho = np.zeros((n, 2, 2), dtype=complex)
    rho[:, 0, 0] = 1.0
    bloch = np.empty((n, len(t_grid), 3))
    purity = np.empty((n, len(t_grid)))

    def record(k):
        ab = rho[:, 1, 0]  # conj(a) b for a pure state
        bloch[:, k] = np.stack([2 * ab.real, -2 * ab.imag, (rho[:, 1, 1] - rho[:, 0, 0]).real], axis=-1)
        purity[:, k] = np.einsum("nij,nji->n", rho, rho).real

    record(0)
    sq = math.sqrt(h)
    noise = None
    for step in range(n_steps):
        col = step % TIME_CHUNK
        if col == 0:
            noise = sq * draw_chunk(rngs, min(TIME_CHUNK, n_steps - step), "normal")
        quad = np.einsum("ij,nji->n", c + cd, rho).real
        dy = math.sqrt(eta) * quad * h + noise[:, col]
        m = base[None] + math.sqrt(eta) * dy[:, None, None] * c[None]
        new = m @ rho @ np.conj(np.transpose(m, (0, 2, 1)))
        new += (1.0 - eta) * h * (c @ rho @ cd)
        new = 0.5 * (new + np.conj(np.transpose(new, (0, 2, 1))))
        tr = np.trace(new, axis1=1, axis2=2).real
        if tr.min() < NORM_FLOOR:
            raise NormCollapseError("state norm collapsed below 1e-12; reduce dt")
        rho = new / tr[:, None, None]
        if (step + 1) % stride == 0:
            record((step + 1) // stride)
    return Ensemble(t_grid, bloch, None, purity)


def simulate_diffusive(params: SystemParams, config: DiffusiveConfig, rng: np.random.Generator) -> TrajectoryRecord:
    """One Wiener-type trajectory from ``|down>`` sampled on ``params.sample_grid()``."""
    if config.efficiency < 1.0:
        return _mixed_homodyne_block(params, config, [rng]).trajectory(0)
    return _pure_block(params, config, [rng]).trajectory(0)


def simulate_diffusive_ensemble(params: SystemParams, config: DiffusiveConfig, n_traj: int | None = None, threads: int = 1) -> Ensemble:
    n_traj = params.n_traj if n_traj is None else n_traj
    stream = "homodyne" if config.mode == "homodyne" or config.explicit_lo else "heterodyne"
    kernel = _mixed_homodyne_block if config.efficiency < 1.0 else _pure_block

    def block(idx: range) -> Ensemble:
        return kernel(params, config, trajectory_rngs(params.seed, idx, stream))

    ens = Ensemble.concatenate(run_blocks(block, n_traj, threads))
    ens.seed, ens.label = params.seed, config.label
    return ens
