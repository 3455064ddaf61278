"""Direct photodetection (Poisson-type) trajectories.

Ideal detection keeps the atom in a pure state.  After every click it is
reset to ``|down>`` and evolves under ``H_eff = H - i (gamma/2) sigma_+ sigma_-``
until the next click, so a trajectory is fully described by its sequence of
waiting times.  Those are sampled exactly from the survival function
``p0``; the conditional state between clicks is the normalised closed-form
image of ``|down>``.

Imperfect detection (``efficiency < 1``) and thermal photons need a density
matrix; that case is stepped on a fixed grid with first-order jump splitting.
"""

from __future__ import annotations

import math

import numpy as np

from .core import GROUND_BLOCH, SystemParams, bloch_generator, rk4_step_matrix
from .records import ClickRecord, Ensemble, TrajectoryRecord
from .rng import draw_chunk, run_blocks, trajectory_rngs

SMALL_ARG = 1e-6
BISECTION_STEPS = 48
TAU_TOL = 1e-10
MAX_STEP_JUMP_PROBABILITY = 0.1
TIME_CHUNK = 512
OVERFLOW_ARG = 50.0


def _sinc(z):
    """Complex-safe ``sin(z)/z``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < SMALL_ARG
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z * z / 6.0, np.sin(safe) / safe)


def no_jump_amplitudes(params: SystemParams, s, rescaled: bool = False):
    """Unnormalised ``exp(-i H_eff s)|down>`` as ``(amp_down, amp_up)`` arrays.

    For a 2x2 matrix ``H = c I + K`` with ``K^2 = kappa^2 I``,
    ``exp(-iHs) = exp(-ics) [cos(kappa s) I - i s sinc(kappa s) K]``.
    With ``rescaled`` the long-time overdamped entries are divided by the
    slowest mode, which keeps the direction of the state but not its norm.
    """
    s = np.asarray(s, dtype=float)
    g = params.decay
    h11 = 0.5 * params.detuning
    h22 = -0.5 * params.detuning - 0.5j * g
    c = 0.5 * (h11 + h22)
    k11 = h11 - c
    kappa = np.sqrt(complex(k11 * k11 + params.rabi_half**2))
    # cos and sinc grow like cosh for imaginary kappa; there the phase is folded into each mode
    grow = np.abs(kappa.imag) * s > OVERFLOW_ARG
    s_safe = np.where(grow, 0.0, s)
    phase = np.exp(-1j * c * s_safe)
    cos_term = np.cos(kappa * s_safe)
    sin_term = s_safe * _sinc(kappa * s_safe)
    if np.any(grow):
        sg = s[grow]
        lam_plus, lam_minus = c - kappa, c + kappa
        slow = max(lam_plus, lam_minus, key=lambda v: v.imag) if rescaled else 0.0
        plus = np.exp(-1j * (lam_plus - slow) * sg)
        minus = np.exp(-1j * (lam_minus - slow) * sg)
        phase, cos_term, sin_term = (np.broadcast_to(v, s.shape).astype(complex) for v in (phase, cos_term, sin_term))
        phase[grow] = 1.0
        cos_term[grow] = 0.5 * (plus + minus)
        sin_term[grow] = (plus - minus) / (2j * kappa)
    amp_down = phase * (cos_term - 1j * sin_term * k11)
    amp_up = phase * (-1j * sin_term * params.rabi_half)
    return amp_down, amp_up


def conditional_bloch(params: SystemParams, s) -> np.ndarray:
    """Normalised Bloch vector a time ``s`` after a reset, shape ``s.shape + (3,)``."""
    a, b = no_jump_amplitudes(params, s, rescaled=True)
    norm = np.abs(a) ** 2 + np.abs(b) ** 2
    ab = np.conj(a) * b
    return np.stack([2 * ab.real / norm, -2 * ab.imag / norm, (np.abs(b) ** 2 - np.abs(a) ** 2) / norm], axis=-1)


def _check_ideal(params: SystemParams) -> None:
    if not params.is_ideal:
        raise ValueError("exact waiting-time sampling requires efficiency = 1 and thermal = 0")


def null_probability(params: SystemParams, t):
    """Probability of no emission during ``t`` after a reset to ``|down>``.

    Resonant drive uses the closed form in ``mu``; with detuning the norm of
    the no-jump state is used instead.
    """
    t = np.asarray(t, dtype=float)
    g = params.decay
    mu = 0.5 * np.sqrt(complex(4 * params.rabi_half**2 - 0.25 * g * g))
    if params.detuning or np.any(abs(mu.imag) * t > OVERFLOW_ARG):
        a, b = no_jump_amplitudes(params, t)
        return np.abs(a) ** 2 + np.abs(b) ** 2
    # Omega^2/mu^2 - (g^2/16mu^2) cos(2 mu t) = 1 + (g^2/8) (sin(mu t)/mu)^2
    s1 = t * _sinc(mu * t)
    s2 = _sinc(2 * mu * t)
    value = np.exp(-0.5 * g * t) * (1.0 + (g * g / 8.0) * s1 * s1 + 0.5 * g * t * s2)
    return np.real(value)


def waiting_time_density(params: SystemParams, tau):
    """Exclusive density ``w(tau)`` of the interval between consecutive clicks."""
    tau = np.asarray(tau, dtype=float)
    g = params.decay
    mu = 0.5 * np.sqrt(complex(4 * params.rabi_half**2 - 0.25 * g * g))
    if params.detuning or np.any(abs(mu.imag) * tau > OVERFLOW_ARG):
        _, b = no_jump_amplitudes(params, tau)
        return g * np.abs(b) ** 2
    s1 = tau * _sinc(mu * tau)
    return np.real(np.exp(-0.5 * g * tau) * g * params.rabi_half**2 * s1 * s1)


def mean_click_rate(params: SystemParams) -> float:
    """Stationary emission rate ``gamma <sigma_+ sigma_->_ss``."""
    from .core import steady_state

    z = steady_state(params).bloch[3]
    return params.decay * (params.thermal + 1.0) * 0.5 * (1.0 + z)


def solve_survival(params: SystemParams, u) -> np.ndarray:
    """Invert the survival function: ``tau`` with ``p0(tau) = u`` for each ``u`` in (0, 1].

    Elementwise bracketing by doubling followed by a fixed number of bisection
    steps, so each result depends only on its own ``u``.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u > 1)):
        raise ValueError("survival levels must lie in (0, 1]")
    if params.rabi_half == 0:
        raise ValueError("an undriven atom never emits")
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(200):
        above = null_probability(params, hi) > u
        if not above.any():
            break
        lo = np.where(above, hi, lo)
        hi = np.where(above, 2 * hi, hi)
    else:
        raise RuntimeError("could not bracket the waiting time")
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = null_probability(params, mid) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    if np.any(hi - lo > TAU_TOL):
        raise RuntimeError(f"waiting-time root finder did not converge (max width {np.max(hi - lo):g})")
    return 0.5 * (lo + hi)


def sample_waiting_time(params: SystemParams, rng: np.random.Generator) -> float:
    _check_ideal(params)
    return float(solve_survival(params, 1.0 - rng.random()))


def _expected_clicks(params: SystemParams, t_max: float) -> int:
    return int(1.2 * mean_click_rate(params) * t_max) + 16


def _clicks_for_block(params: SystemParams, rngs, t_max: float) -> list[np.ndarray]:
    """Click times for several trajectories; draws come in fixed-size chunks per generator."""
    chunk = _expected_clicks(params, t_max)
    times = [np.empty(0)] * len(rngs)
    last = np.zeros(len(rngs))
    active = np.arange(len(rngs))
    while active.size:
        u = 1.0 - draw_chunk([rngs[i] for i in active], chunk, "uniform")
        taus = solve_survival(params, u)
        arrivals = last[active, None] + np.cumsum(taus, axis=1)
        still = []
        for row, i in enumerate(active):
            new = arrivals[row]
            keep = new[new <= t_max]
            times[i] = np.concatenate([times[i], keep])
            if keep.size == chunk:
                last[i] = new[-1]
                still.append(i)
        active = np.asarray(still, dtype=int)
    return times


def generate_clicks(params: SystemParams, rng: np.random.Generator, t_max: float | None = None) -> ClickRecord:
    """Emission times of one ideal trajectory on ``[0, t_max]``."""
    _check_ideal(params)
    t_max = params.t_max if t_max is None else t_max
    if params.rabi_half == 0:
        return ClickRecord(np.empty(0), t_max)
    return ClickRecord(_clicks_for_block(params, [rng], t_max)[0], t_max)


def _bloch_on_grid(params: SystemParams, clicks: list[np.ndarray], t_grid: np.ndarray) -> np.ndarray:
    since = np.empty((len(clicks), len(t_grid)))
    for k, c in enumerate(clicks):
        idx = np.searchsorted(c, t_grid, side="right") - 1
        last = np.where(idx >= 0, c[np.maximum(idx, 0)] if c.size else 0.0, 0.0)
        since[k] = t_grid - last
    return conditional_bloch(params, since)


def simulate_pure_jump(params: SystemParams, rng: np.random.Generator) -> TrajectoryRecord:
    """One ideal direct-detection trajectory starting in ``|down>``."""
    _check_ideal(params)
    t_grid = params.sample_grid()
    clicks = generate_clicks(params, rng)
    bloch = _bloch_on_grid(params, [clicks.click_times], t_grid)[0]
    return TrajectoryRecord(t_grid, bloch, clicks, np.ones(len(t_grid)))


def simulate_pure_jump_ensemble(params: SystemParams, n_traj: int | None = None, threads: int = 1) -> Ensemble:
    """``n_traj`` independent ideal trajectories; trajectory ``k`` uses stream ``k``."""
    _check_ideal(params)
    n_traj = params.n_traj if n_traj is None else n_traj
    t_grid = params.sample_grid()

    def block(idx: range) -> Ensemble:
        if params.rabi_half == 0:
            times = [np.empty(0) for _ in idx]
        else:
            times = _clicks_for_block(params, trajectory_rngs(params.seed, idx, "direct"), params.t_max)
        bloch = _bloch_on_grid(params, times, t_grid)
        return Ensemble(t_grid, bloch, [ClickRecord(t, params.t_max) for t in times])

    ens = Ensemble.concatenate(run_blocks(block, n_traj, threads))
    ens.seed, ens.label = params.seed, "direct"
    return ens


# ---------------------------------------------------------------------------
# Imperfect detection / thermal bath


def mixed_jump_step(params: SystemParams) -> float:
    """Integration step: ``dt`` capped at ``0.02/Omega`` and dividing ``sample_dt`` evenly."""
    h = params.dt
    if params.rabi_half > 0:
        h = min(h, 0.02 / params.rabi_half)
    n = math.ceil(params.sample_dt / h - 1e-9)
    return params.sample_dt / n


def _mixed_block(params: SystemParams, rngs) -> Ensemble:
    h = mixed_jump_step(params)
    stride = int(round(params.sample_dt / h))
    t_grid = params.sample_grid()
    n_steps = (len(t_grid) - 1) * stride
    n = len(rngs)
    drift = rk4_step_matrix(bloch_generator(params, detected=params.efficiency), h).T
    rate = params.efficiency * params.decay * (params.thermal + 1.0)

    v = np.tile(GROUND_BLOCH, (n, 1))
    bloch = np.empty((n, len(t_grid), 3))
    purity = np.empty((n, len(t_grid)))
    bloch[:, 0] = v[:, 1:]
    purity[:, 0] = 1.0
    clicks: list[list[float]] = [[] for _ in range(n)]
    u = None
    for step in range(n_steps):
        col = step % TIME_CHUNK
        if col == 0:
            u = draw_chunk(rngs, min(TIME_CHUNK, n_steps - step), "uniform")
        p_click = rate * h * 0.5 * (1.0 + v[:, 3])
        if p_click.max() >= MAX_STEP_JUMP_PROBABILITY:
            raise ValueError("click probability per step >= 0.1; reduce dt")
        jump = u[:, col] < p_click
        v = v @ drift
        v /= v[:, :1]
        if jump.any():
            v[jump] = GROUND_BLOCH
            t_click = (step + 1) * h
            for i in np.flatnonzero(jump):
                clicks[i].append(t_click)
        if (step + 1) % stride == 0:
            k = (step + 1) // stride
            bloch[:, k] = v[:, 1:]
            purity[:, k] = 0.5 * (1.0 + np.sum(v[:, 1:] ** 2, axis=1))
    records = [ClickRecord(np.asarray(c), params.t_max) for c in clicks]
    return Ensemble(t_grid, bloch, records, purity)


def simulate_mixed_jump(params: SystemParams, rng: np.random.Generator) -> TrajectoryRecord:
    """One trajectory of imperfect and/or thermal direct detection (density-matrix form).

    Per step of length ``h`` a click is detected with probability
    ``eta gamma (nbar+1) <sigma_+ sigma_-> h``; a click resets the state to
    ``|down>``, otherwise the state follows the no-click generator
    ``L - eta gamma (nbar+1) sigma_- . sigma_+`` (one RK4 step) and is renormalised.
    """
    return _mixed_block(params, [rng]).trajectory(0)


def simulate_mixed_jump_ensemble(params: SystemParams, n_traj: int | None = None, threads: int = 1) -> Ensemble:
    n_traj = params.n_traj if n_traj is None else n_traj

    def block(idx: range) -> Ensemble:
        return _mixed_block(params, trajectory_rngs(params.seed, idx, "direct-mixed"))

    ens = Ensemble.concatenate(run_blocks(block, n_traj, threads))
    ens.seed, ens.label = params.seed, "direct-imperfect"
    return ens
