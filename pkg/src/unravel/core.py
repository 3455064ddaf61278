"""Shared types, operators and the unconditional dynamics of a driven two-level atom.

Conventions
-----------
* Units: the decay rate is fixed to ``gamma = 1``; every time is ``gamma * t``.
* State vectors are ordered ``(amp_down, amp_up)``.  ``sigma_z|up> = +|up>``,
  ``sigma_minus = |down><up|`` and the Pauli matrices are the usual right-handed
  set, ``sigma_plus = (sigma_x + i sigma_y) / 2``.
* Rotating frame at the drive frequency, ``H = -(Delta/2) sigma_z + Omega sigma_x``.
  The population Rabi frequency is ``2 Omega`` and the saturation parameter is
  ``Y = 2 sqrt(2) Omega / gamma``.
* Bloch coordinates of a (possibly unnormalised) density matrix are the real
  4-vector ``v = (Tr rho, <sigma_x>, <sigma_y>, <sigma_z>)`` so that
  ``rho = (v0 I + vx sx + vy sy + vz sz) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

GAMMA = 1.0

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
EXCITED_PROJECTOR = SIGMA_PLUS @ SIGMA_MINUS
PAULIS = (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z)

OBSERVABLES = {
    "sx": SIGMA_X,
    "sy": SIGMA_Y,
    "sz": SIGMA_Z,
    "spsm": EXCITED_PROJECTOR,
    "sm": SIGMA_MINUS,
}
HERMITIAN_OBSERVABLES = ("sx", "sy", "sz", "spsm")

GROUND_BLOCH = np.array([1.0, 0.0, 0.0, -1.0])


@dataclass(frozen=True)
class SystemParams:
    """Physical and numerical parameters of one run.

    ``rabi_half`` is the drive amplitude Omega in ``H = Omega sigma_x``; the
    dimensionless drive strength ``Y`` is always derived from it.  Times are in
    units of ``1/gamma``.  ``dt`` is the integration step, ``sample_dt`` the
    spacing of the recorded expectation values.
    """

    rabi_half: float
    detuning: float = 0.0
    efficiency: float = 1.0
    thermal: float = 0.0
    lo_phase: float = 0.0
    het_detuning: float = 0.0
    dt: float = 1e-3
    t_max: float = 6.0
    sample_dt: float = 0.01
    n_traj: int = 1000
    seed: int = 0
    decay: float = field(default=GAMMA)

    def __post_init__(self) -> None:
        if self.decay != GAMMA:
            raise ValueError("decay is fixed to 1 (all rates are in units of gamma)")
        if self.rabi_half < 0:
            raise ValueError("rabi_half must be >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.thermal < 0:
            raise ValueError("thermal occupation must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        if self.t_max > 0 and self.t_max < self.dt:
            raise ValueError("t_max must be >= dt")
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be > 0")
        if self.n_traj < 1:
            raise ValueError("n_traj must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def drive_strength(self) -> float:
        return 2.0 * math.sqrt(2.0) * self.rabi_half / self.decay

    @property
    def rabi_frequency(self) -> float:
        return 2.0 * self.rabi_half

    @property
    def is_ideal(self) -> bool:
        return self.efficiency == 1.0 and self.thermal == 0.0

    @classmethod
    def from_drive_strength(cls, y: float, **kwargs) -> "SystemParams":
        return cls(rabi_half=y / (2.0 * math.sqrt(2.0)), **kwargs)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def sample_grid(self) -> np.ndarray:
        n = int(round(self.t_max / self.sample_dt))
        return np.arange(n + 1) * self.sample_dt

    def integration_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True)
class PureState:
    amp_down: complex
    amp_up: complex

    @classmethod
    def ground(cls) -> "PureState":
        return cls(1.0 + 0j, 0.0 + 0j)

    @classmethod
    def from_vector(cls, psi) -> "PureState":
        psi = np.asarray(psi, dtype=complex)
        return cls(complex(psi[0]), complex(psi[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_down, self.amp_up], dtype=complex)

    @property
    def norm(self) -> float:
        return abs(self.amp_down) ** 2 + abs(self.amp_up) ** 2

    def normalized(self) -> "PureState":
        n = math.sqrt(self.norm)
        return PureState(self.amp_down / n, self.amp_up / n)

    def density_matrix(self) -> np.ndarray:
        psi = self.vector
        return np.outer(psi, psi.conj())


@dataclass(frozen=True)
class MixedState:
    """2x2 density matrix.  ``norm`` carries the trace of unnormalised conditional states."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise ValueError("density matrix must be 2x2")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def ground(cls) -> "MixedState":
        return cls(np.array([[1, 0], [0, 0]], dtype=complex))

    @classmethod
    def excited(cls) -> "MixedState":
        return cls(np.array([[0, 0], [0, 1]], dtype=complex))

    @classmethod
    def maximally_mixed(cls) -> "MixedState":
        return cls(IDENTITY / 2)

    @classmethod
    def from_bloch(cls, v) -> "MixedState":
        v = np.asarray(v, dtype=float)
        return cls(0.5 * sum(c * p for c, p in zip(v, PAULIS)))

    @property
    def norm(self) -> float:
        return float(np.trace(self.rho).real)

    @property
    def bloch(self) -> np.ndarray:
        return bloch_coordinates(self.rho)

    @property
    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def validate(self, tol: float = 1e-10) -> None:
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > tol:
            raise ValueError("density matrix does not have unit trace")
        if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -tol:
            raise ValueError("density matrix is not positive semidefinite")


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def length(self) -> float:
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def bloch_coordinates(rho: np.ndarray) -> np.ndarray:
    """Return ``(Tr rho, <sx>, <sy>, <sz>)`` for a 2x2 matrix."""
    return np.array([np.trace(p @ rho).real for p in PAULIS])


def expectation(state, observable: str | np.ndarray):
    """Quantum expectation of ``observable`` in a pure or mixed state.

    ``observable`` is a name from :data:`OBSERVABLES` or a 2x2 matrix.  Hermitian
    observables return a float, ``"sm"`` (sigma minus) a complex number.
    """
    if isinstance(observable, str):
        op = OBSERVABLES[observable]
        hermitian = observable in HERMITIAN_OBSERVABLES
    else:
        op = np.asarray(observable, dtype=complex)
        hermitian = bool(np.allclose(op, op.conj().T))
    if isinstance(state, PureState):
        psi = state.vector
        value = complex(psi.conj() @ op @ psi)
    elif isinstance(state, MixedState):
        value = complex(np.trace(op @ state.rho))
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    if hermitian:
        return value.real
    return value


# ---------------------------------------------------------------------------
# Superoperators in Bloch coordinates


def hamiltonian(params: SystemParams) -> np.ndarray:
    return -0.5 * params.detuning * SIGMA_Z + params.rabi_half * SIGMA_X


def dissipator(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cd = c.conj().T
    return c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)


def lindblad_rhs(params: SystemParams, rho: np.ndarray, detected: float = 0.0) -> np.ndarray:
    """Right-hand side of the (thermal) GKSL equation.

    ``detected`` removes that fraction of the downward recycling term
    ``gamma (nbar + 1) sigma_- rho sigma_+``; ``detected = eta`` gives the
    no-click propagator of imperfect direct detection.
    """
    h = hamiltonian(params)
    g_down = params.decay * (params.thermal + 1.0)
    g_up = params.decay * params.thermal
    out = -1j * (h @ rho - rho @ h)
    out += g_down * dissipator(SIGMA_MINUS, rho)
    if g_up:
        out += g_up * dissipator(SIGMA_PLUS, rho)
    if detected:
        out -= detected * g_down * SIGMA_MINUS @ rho @ SIGMA_PLUS
    return out


def bloch_generator(params: SystemParams, detected: float = 0.0) -> np.ndarray:
    """Real 4x4 matrix ``G`` with ``dv/dt = G v`` for ``v = (Tr rho, x, y, z)``."""
    g = np.empty((4, 4))
    for k, pk in enumerate(PAULIS):
        image = lindblad_rhs(params, 0.5 * pk, detected=detected)
        for j, pj in enumerate(PAULIS):
            g[j, k] = np.trace(pj @ image).real
    return g


def rk4_step_matrix(generator: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of the linear ODE ``v' = G v`` as a matrix."""
    a = h * generator
    a2 = a @ a
    a3 = a2 @ a
    return np.eye(len(a)) + a + a2 / 2 + a3 / 6 + a3 @ a / 24


def max_me_step(params: SystemParams) -> float:
    limit = 1e-3
    if params.rabi_half > 0:
        limit = min(limit, 0.05 / params.rabi_half)
    return limit


def propagate_me(params: SystemParams, rho0: MixedState | np.ndarray, t_grid: Sequence[float]) -> list[MixedState]:
    """Solve the master equation on ``t_grid`` with fixed-step RK4.

    The step never exceeds ``min(1e-3, 0.05/Omega)``; each interval of the
    output grid is split into equal substeps.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("empty time grid")
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and be strictly increasing")
    if not isinstance(rho0, MixedState):
        rho0 = MixedState(rho0)
    rho0.validate()
    vs = propagate_bloch(bloch_generator(params), rho0.bloch, t_grid, max_me_step(params))
    return [MixedState.from_bloch(v) for v in vs]


def propagate_bloch(generator: np.ndarray, v0: np.ndarray, t_grid: np.ndarray, h_max: float) -> np.ndarray:
    out = np.empty((len(t_grid), len(v0)))
    v = np.array(v0, dtype=float)
    out[0] = v
    cache: dict[int, np.ndarray] = {}
    for k in range(1, len(t_grid)):
        span = t_grid[k] - t_grid[k - 1]
        n = max(1, math.ceil(span / h_max - 1e-9))
        key = (n, round(span / n, 15))
        step = cache.get(key)
        if step is None:
            step = np.linalg.matrix_power(rk4_step_matrix(generator, span / n), n)
            cache[key] = step
        v = step @ v
        out[k] = v
    return out


def me_expectations(params: SystemParams, t_grid: Sequence[float], rho0: MixedState | None = None) -> np.ndarray:
    """``(<sx>, <sy>, <sz>)`` of the master-equation solution, shape ``(len(t_grid), 3)``."""
    rho0 = rho0 or MixedState.ground()
    t_grid = np.asarray(t_grid, dtype=float)
    vs = propagate_bloch(bloch_generator(params), rho0.bloch, t_grid, max_me_step(params))
    return vs[:, 1:]


def steady_state(params: SystemParams) -> MixedState:
    g = bloch_generator(params)
    # drop the (zero) trace row and impose Tr rho = 1
    a = g[1:, 1:]
    b = -g[1:, 0]
    xyz = np.linalg.solve(a, b)
    return MixedState.from_bloch(np.concatenate(([1.0], xyz)))


def steady_inversion(params: SystemParams) -> float:
    """Closed form ``-1/(1+Y^2)`` for resonant drive without thermal photons."""
    if params.detuning or params.thermal:
        return float(steady_state(params).bloch[3])
    return -1.0 / (1.0 + params.drive_strength**2)


def analytic_inversion(params: SystemParams, t) -> np.ndarray | float:
    """Mean inversion from the ground state (resonant drive, zero temperature).

    ``delta = (gamma/4) sqrt(1 - 8 Y^2)`` is evaluated in complex arithmetic
    so that under- and over-damped regimes share one expression.
    """
    if params.detuning or params.thermal:
        raise ValueError("analytic_inversion requires zero detuning and zero thermal occupation")
    y2 = params.drive_strength**2
    g = params.decay
    sz = -1.0 / (1.0 + y2)
    t_arr = np.asarray(t, dtype=float)
    delta = complex(0.25 * g * np.sqrt(complex(1.0 - 8.0 * y2)))
    a = 0.75 * g
    if abs(delta) < 1e-12:
        bracket = 1.0 + a * t_arr
    else:
        bracket = np.cosh(delta * t_arr) + (a / delta) * np.sinh(delta * t_arr)
    value = sz * (1.0 + y2 * np.exp(-a * t_arr) * bracket)
    residue = np.max(np.abs(np.imag(value))) if np.size(value) else 0.0
    if residue > 1e-9:
        raise ArithmeticError(f"imaginary residue {residue:g} in analytic inversion")
    value = np.real(value)
    return float(value) if np.ndim(t) == 0 else value


# ---------------------------------------------------------------------------
# Stationary intensity correlation


def _modal_evolution(generator: np.ndarray, v0: np.ndarray):
    """Eigen-decomposition of ``expm(G t) v0`` as ``sum_k c_k e^{lambda_k t} V[:, k]``.

    Returns ``None`` when the generator is (numerically) defective.
    """
    lam, vecs = np.linalg.eig(generator)
    if np.linalg.cond(vecs) > 1e8:
        return None
    coeffs = np.linalg.solve(vecs, v0.astype(complex))
    return lam, vecs, coeffs


def excited_population_from_ground(params: SystemParams, tau) -> np.ndarray:
    """Excited-state population at delay ``tau`` after a reset to ``|down>``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    g = bloch_generator(params)
    modal = _modal_evolution(g, GROUND_BLOCH)
    if modal is None:
        vs = np.array([expm(g * t) @ GROUND_BLOCH for t in tau])
        return 0.5 * (vs[:, 0] + vs[:, 3])
    lam, vecs, coeffs = modal
    weights = coeffs * 0.5 * (vecs[0] + vecs[3])
    return np.real(np.exp(np.outer(tau, lam)) @ weights)


def g2_analytic(params: SystemParams, tau_grid) -> np.ndarray:
    """Normalised intensity correlation ``g2(tau)`` of the stationary emitter.

    By quantum regression, a detection resets the atom to ``|down>``, so
    ``g2(tau) = p_up(tau | down) / p_up(steady state)``.  Detuning is included.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    if params.rabi_half == 0:
        raise ValueError("g2 undefined: the undriven atom has zero steady-state excitation")
    p_ss = 0.5 * (1.0 + steady_state(params).bloch[3])
    out = excited_population_from_ground(params, tau) / p_ss
    return out.reshape(tau.shape)


def generalized_rabi(params: SystemParams) -> complex:
    """``mu = (1/2) sqrt(4 Omega^2 - (gamma/2)^2)`` (complex below Omega = gamma/4)."""
    return 0.5 * np.sqrt(complex(4.0 * params.rabi_half**2 - (0.5 * params.decay) ** 2))
