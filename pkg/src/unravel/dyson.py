"""Semi-analytic engine for nonlinear averages under ideal direct detection.

Every click resets the atom to ``|down>``, so a trajectory is a renewal
process.  The average of ``<O>^m`` is the no-click kernel

    O_m(t) = [Tr(O e^{l t} |down><down|)]^m / p0(t)^(m-1)

convolved with the renewal (click) density ``h = w + w * h``, where ``w`` is
the waiting-time density.  The renewal equation is solved as a discrete
Volterra equation with the trapezoidal rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import OBSERVABLES, SystemParams
from .jumps import conditional_bloch, no_jump_amplitudes, null_probability, waiting_time_density

P0_FLOOR = 1e-280


def _check_ideal(params: SystemParams) -> None:
    if not params.is_ideal:
        raise ValueError("the renewal oracle assumes ideal detection (efficiency 1, no thermal photons)")


def _unnormalized_expectation(params: SystemParams, t, observable: str) -> np.ndarray:
    a, b = no_jump_amplitudes(params, t)
    psi = np.stack([a, b], axis=-1)
    op = OBSERVABLES[observable]
    return np.real(np.einsum("...i,ij,...j->...", np.conj(psi), op, psi))


def om_kernel(params: SystemParams, t, observable: str = "sz", m: int = 2):
    """No-click kernel ``O_m(t)`` for ``O`` in ``sx, sy, sz``.

    Evaluated as ``p0 * (num/p0)^m``; raises when ``p0`` underflows.
    """
    _check_ideal(params)
    if m < 1:
        raise ValueError("m must be >= 1")
    t = np.asarray(t, dtype=float)
    num = _unnormalized_expectation(params, t, observable)
    p0 = null_probability(params, t)
    if np.any(p0 < P0_FLOOR):
        usable = t[p0 >= P0_FLOOR]
        limit = float(usable.max()) if usable.size else 0.0
        raise FloatingPointError(f"null probability underflows; usable range t <= {limit:g}")
    return p0 * (num / p0) ** m


def sz_squared_numerator(params: SystemParams, t):
    """Closed form of ``[Tr(sz e^{l t}|down><down|)]^2`` for resonant drive."""
    g = params.decay
    mu = 0.5 * np.sqrt(complex(4 * params.rabi_half**2 - 0.25 * g * g))
    t = np.asarray(t, dtype=float)
    r = g * g / (16 * mu * mu)
    value = np.exp(-g * t) * (0.5 + r / 2 + 0.5 * (1 - r) * np.cos(4 * mu * t) + (g / (4 * mu)) * np.sin(4 * mu * t))
    return np.real(value)


@dataclass
class RenewalGrid:
    """Uniform grid with waiting-time density and renewal density samples."""

    tau: np.ndarray
    step: float
    w: np.ndarray
    h_ren: np.ndarray

    def residual(self) -> float:
        """Max violation of the discretised ``h = w + w*h`` on the grid."""
        conv = _trapezoid_convolution(self.w, self.h_ren, self.step)
        return float(np.max(np.abs(self.h_ren - self.w - conv)))


def _trapezoid_convolution(f: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """``(f*g)(t_n) = int_0^t_n f(t_n - s) g(s) ds`` with the trapezoidal rule."""
    n = len(f)
    full = np.convolve(f, g)[:n]
    return h * (full - 0.5 * (f * g[0] + f[0] * g))


def _check_grid(params: SystemParams, t_grid: np.ndarray) -> float:
    if len(t_grid) < 2 or t_grid[0] != 0.0:
        raise ValueError("t_grid must start at 0 and contain at least two points")
    h = float(t_grid[1] - t_grid[0])
    if not np.allclose(np.diff(t_grid), h, rtol=1e-9, atol=1e-12):
        raise ValueError("t_grid must be uniform")
    limit = 1e-3
    if params.rabi_half > 0:
        limit = min(limit, 0.02 / params.rabi_half)
    if h > limit * (1 + 1e-9):
        raise ValueError(f"grid too coarse: spacing {h:g} > {limit:g}")
    return h


def renewal_density(params: SystemParams, t_grid) -> RenewalGrid:
    """Solve ``h = w + w*h`` on a uniform grid (trapezoidal Volterra scheme).

    With ``w(0) = 0`` the implicit end-point term vanishes and the recursion
    is explicit: ``h_n = w_n + step * sum_{k=1}^{n-1} w_{n-k} h_k + step/2 w_0 h_n``.
    """
    _check_ideal(params)
    t_grid = np.asarray(t_grid, dtype=float)
    step = _check_grid(params, t_grid)
    w = waiting_time_density(params, t_grid)
    n = len(t_grid)
    h_ren = np.zeros(n)
    h_ren[0] = w[0]
    denom = 1.0 - 0.5 * step * w[0]
    for k in range(1, n):
        # k-th row of the trapezoid sum excluding the unknown h_k term
        interior = np.dot(w[k - 1 : 0 : -1], h_ren[1:k]) if k > 1 else 0.0
        h_ren[k] = (w[k] + step * (interior + 0.5 * w[k] * h_ren[0])) / denom
    return RenewalGrid(t_grid, step, w, h_ren)


def renewal_average(params: SystemParams, observable: str = "sz", m: int = 2, t_grid=None, renewal: RenewalGrid | None = None) -> np.ndarray:
    """Ensemble average of ``<O>^m`` under ideal direct detection from ``|down>``.

    ``O_m(t) + int_0^t O_m(t-s) h(s) ds`` on a uniform grid with spacing at
    most ``min(1e-3, 0.02/Omega)``.
    """
    _check_ideal(params)
    if t_grid is None:
        t_grid = renewal.tau if renewal is not None else None
    t_grid = np.asarray(t_grid, dtype=float)
    _check_grid(params, t_grid)
    if renewal is None:
        renewal = renewal_density(params, t_grid)
    kernel = om_kernel(params, t_grid, observable, m)
    return kernel + _trapezoid_convolution(kernel, renewal.h_ren, renewal.step)


def renewal_qtav(params: SystemParams, observable: str = "sz", t_grid=None) -> tuple[np.ndarray, np.ndarray]:
    """``(mean, QTAV)`` of ``observable`` from the renewal route."""
    renewal = renewal_density(params, t_grid)
    first = renewal_average(params, observable, 1, renewal=renewal)
    second = renewal_average(params, observable, 2, renewal=renewal)
    return first, second - first**2


def default_grid(params: SystemParams, t_max: float = 6.0) -> np.ndarray:
    limit = 1e-3 if params.rabi_half == 0 else min(1e-3, 0.02 / params.rabi_half)
    n = math.ceil(t_max / limit - 1e-9)
    return np.linspace(0.0, t_max, n + 1)


# ---------------------------------------------------------------------------
# Asymptotics


def asymptotic_var_strong(params: SystemParams, t):
    """Strong-drive long-time QTAV of ``sz`` including first-order ``gamma/Omega`` terms."""
    y = params.drive_strength
    if y < 5:
        raise ValueError("strong-drive asymptote needs Y >= 5")
    if y < 10:
        warnings.warn("strong-drive asymptote is inaccurate for Y < 10", RuntimeWarning, stacklevel=2)
    t = np.asarray(t, dtype=float)
    om = params.rabi_half
    g = params.decay
    env = np.exp(-0.5 * g * t)
    first = (g / (8 * om)) * env * (4 * np.sin(4 * om * t) - np.sin(6 * om * t) - 3 * np.sin(2 * om * t))
    return 0.5 * (1.0 + env * np.cos(4 * om * t) + first)


def asymptotic_var_strong_boxed(params: SystemParams, t):
    """Same asymptote with the ``sin(2 Omega t)`` contributions kept separate."""
    t = np.asarray(t, dtype=float)
    om = params.rabi_half
    g = params.decay
    env = np.exp(-0.5 * g * t)
    bracket = 4 * np.sin(4 * om * t) - np.sin(6 * om * t) - np.sin(2 * om * t)
    return 0.5 * (1.0 + env * np.cos(4 * om * t) + (g / (8 * om)) * env * bracket - (g / (4 * om)) * env * np.sin(2 * om * t))


def asymptotic_var_weak(params: SystemParams, t):
    """Weak-drive QTAV of ``sz``: zero up to ``O((Omega/gamma)^2)``.

    The bound on the neglected terms is :func:`weak_drive_error_bound`.
    """
    if params.rabi_half > 0.1 * params.decay:
        raise ValueError("weak-drive asymptote needs Omega <= 0.1 gamma")
    return np.zeros_like(np.asarray(t, dtype=float))


def weak_drive_error_bound(params: SystemParams) -> float:
    return (params.rabi_half / params.decay) ** 2


def fit_sz2_template(params: SystemParams, t: np.ndarray, sz2: np.ndarray, t_min: float = 1.0) -> dict[str, float]:
    """Least-squares coefficients C1..C6 of the strong-drive template for ``mean(<sz>^2)``.

    Template: ``1/2 + e^{-3t/4}[C1 cos + C2 sin](C_Omega t)/4
    + e^{-t/2}[C3 cos 4Wt + C4 sin 4Wt + C5 cos 6Wt + C6 sin 6Wt]/4`` with
    ``C_Omega = 2 mu`` and ``W = Omega``.
    """
    g = params.decay
    om = params.rabi_half
    c_om = 2 * abs(0.5 * np.sqrt(complex(4 * om * om - 0.25 * g * g)))
    sel = t >= t_min
    tt = t[sel]
    e1 = np.exp(-0.75 * g * tt) / 4
    e2 = np.exp(-0.5 * g * tt) / 4
    design = np.stack(
        [
            e1 * np.cos(c_om * tt),
            e1 * np.sin(c_om * tt),
            e2 * np.cos(4 * om * tt),
            e2 * np.sin(4 * om * tt),
            e2 * np.cos(6 * om * tt),
            e2 * np.sin(6 * om * tt),
        ],
        axis=1,
    )
    coef, *_ = np.linalg.lstsq(design, sz2[sel] - 0.5, rcond=None)
    return {f"C{k + 1}": float(c) for k, c in enumerate(coef)}


def conditional_expectation(params: SystemParams, s, observable: str = "sz") -> np.ndarray:
    """``<O>`` a time ``s`` after the last click (normalised no-click state)."""
    axis = {"sx": 0, "sy": 1, "sz": 2}[observable]
    return conditional_bloch(params, s)[..., axis]
