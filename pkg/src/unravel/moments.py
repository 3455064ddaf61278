"""Truncated hierarchy of ensemble moments of conditional expectations.

Conditional expectations are written in the Hilbert-Schmidt orthonormal basis
``X = (I, sx, sy, sz) / sqrt2`` as ``x_i = <X_i>``.  Because the trace is one,
``x_0 = 1/sqrt2`` on every trajectory, so moments are products of
``x_1, x_2, x_3`` only; the index ``(0,)`` is kept as the single constant
entry of the moment vector.  Polynomials in ``(x_1, x_2, x_3)`` are dense
coefficient cubes ``P[e1, e2, e3]``.

Poisson (direct detection, ``L = sqrt(gamma) s-``)::

    dE x^n = E[ sum_j (u^{i_j}, x) x^{n - i_j}
                + gamma (l, x) sum_{|s| >= 2} C(n, s) g^s x^{n - s} ] dt

Wiener (heterodyne)::

    dE x^n = E[ sum_j (u^{i_j}, x) x^{n - i_j}
                + sum_{pairs a, b} (f^a f^b* + f^a* f^b) x^{n - a - b} ] dt

Degrees above the truncation order are dropped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .core import IDENTITY, SIGMA_MINUS, SIGMA_X, SIGMA_Y, SIGMA_Z, SystemParams, hamiltonian
from .ensemble import EnsembleCurve

SQRT2 = math.sqrt(2.0)
X0 = 1.0 / SQRT2
REMAINDER_TOL = 1e-12
EXACT_LIMIT = 2.0**53
UNRAVELINGS = ("poisson", "wiener")


@dataclass(frozen=True)
class BasisOperator:
    """Element ``X_i`` of the orthonormal operator basis."""

    index: int

    def __post_init__(self) -> None:
        if self.index not in (0, 1, 2, 3):
            raise ValueError("basis index must be 0, 1, 2 or 3")

    @property
    def matrix(self) -> np.ndarray:
        return (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z)[self.index] / SQRT2


BASIS = tuple(BasisOperator(i).matrix for i in range(4))


def observable_vector(op: np.ndarray) -> np.ndarray:
    """``a_i = Tr(A^dag X_i)`` so that ``<A> = (a, x)``."""
    return np.array([np.trace(op.conj().T @ x) for x in BASIS])


def to_basis(op: np.ndarray) -> np.ndarray:
    """Coefficients ``c_j`` with ``op = sum_j c_j X_j`` (complex for non-Hermitian ``op``)."""
    return np.array([np.trace(x @ op) for x in BASIS])


# ---------------------------------------------------------------------------
# Dense polynomial helpers


def _zero(size: int, dtype=float) -> np.ndarray:
    return np.zeros((size, size, size), dtype=dtype)


def linear_poly(coeffs, size: int) -> np.ndarray:
    """Polynomial of ``(c, x)`` with ``x_0`` replaced by ``1/sqrt2``."""
    coeffs = np.asarray(coeffs)
    p = _zero(size, np.result_type(coeffs.dtype, float))
    p[0, 0, 0] = coeffs[0] * X0
    p[1, 0, 0] = coeffs[1]
    p[0, 1, 0] = coeffs[2]
    p[0, 0, 1] = coeffs[3]
    return p


def poly_terms(p: np.ndarray, tol: float = 0.0) -> dict[tuple[int, int, int], complex]:
    """Sparse view ``{(e1, e2, e3): coefficient}``."""
    idx = np.argwhere(np.abs(p) > tol)
    return {tuple(int(v) for v in e): p[tuple(e)].item() for e in idx}


def poly_degree(p: np.ndarray, tol: float = 0.0) -> int:
    terms = poly_terms(p, tol)
    return max((sum(e) for e in terms), default=-1)


def poly_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Product truncated to the cube size (caller guarantees no overflow)."""
    size = p.shape[0]
    out = _zero(size, np.result_type(p, q))
    for e, c in poly_terms(q).items():
        out += c * shift(p, e)
    return out


def shift(p: np.ndarray, e) -> np.ndarray:
    """``p * x^e``; coefficients pushed past the cube edge must be zero."""
    size = p.shape[0]
    out = np.zeros_like(p)
    a, b, c = e
    if a >= size or b >= size or c >= size:
        return out
    out[a:, b:, c:] = p[: size - a, : size - b, : size - c]
    return out


def divide_linear_x3(p: np.ndarray, root: float, scale: float) -> tuple[np.ndarray, float]:
    """Divide by ``scale * (x3 - root)``; returns ``(quotient, max |remainder|)``."""
    size = p.shape[0]
    q = np.zeros_like(p)
    carry = np.zeros_like(p[:, :, 0])
    for k in range(size - 1, 0, -1):
        carry = p[:, :, k] + root * carry
        q[:, :, k - 1] = carry
    remainder = p[:, :, 0] + root * carry
    return q / scale, float(np.max(np.abs(remainder)))


# ---------------------------------------------------------------------------
# Coefficient tables


def _adjoint_generator(params: SystemParams, x: np.ndarray) -> np.ndarray:
    h = hamiltonian(params)
    c = math.sqrt(params.decay) * SIGMA_MINUS
    cd = c.conj().T
    return 1j * (h @ x - x @ h) + cd @ x @ c - 0.5 * (cd @ c @ x + x @ cd @ c)


@dataclass
class CoeffTables:
    """Drift rows ``u[i]``, rate vector ``l`` and noise polynomials per basis element.

    ``noise[i]`` is ``g^i`` (Poisson, real) or ``f^i`` (Wiener, complex),
    given as a dense polynomial cube.  For Poisson ``g_numerator[i]`` holds
    ``<L^dag X_i L> - <L^dag L> x_i`` before division by ``<L^dag L>``.
    """

    unraveling: str
    u: np.ndarray
    l: np.ndarray
    noise: list[np.ndarray]
    g_numerator: list[np.ndarray] = field(default_factory=list)


def _check_params(params: SystemParams, unraveling: str) -> None:
    if unraveling not in UNRAVELINGS:
        raise ValueError(f"unraveling must be one of {UNRAVELINGS}")
    if not params.is_ideal:
        raise ValueError("the moment hierarchy is built for ideal detection without thermal photons")


def coeff_tables(params: SystemParams, unraveling: str = "poisson", size: int = 4) -> CoeffTables:
    """Linear forms and noise polynomials of the single-channel unraveling."""
    _check_params(params, unraveling)
    u = np.array([to_basis(_adjoint_generator(params, x)).real for x in BASIS])
    c = math.sqrt(params.decay) * SIGMA_MINUS
    cd = c.conj().T
    l_vec = to_basis(SIGMA_MINUS.conj().T @ SIGMA_MINUS).real
    rate_poly = linear_poly(l_vec, size)
    xs = [linear_poly(np.eye(4)[i], size) for i in range(4)]
    if unraveling == "poisson":
        numerators = []
        noise = []
        for i, x in enumerate(BASIS):
            # <L^dag X L> / gamma and <L^dag L> / gamma as linear forms
            v_vec = to_basis(cd @ x @ c).real / params.decay
            num = linear_poly(v_vec, size) - poly_mul(rate_poly, xs[i])
            g, rem = divide_linear_x3(num, -X0, X0)
            if rem > REMAINDER_TOL:
                raise ArithmeticError(f"nonzero remainder {rem:.3g} dividing g^{i}")
            numerators.append(num)
            noise.append(g)
        return CoeffTables(unraveling, u, l_vec, noise, numerators)
    mean_l = linear_poly(to_basis(c).astype(complex), size)
    noise = []
    for i, x in enumerate(BASIS):
        xl = linear_poly(to_basis(x @ c), size)
        noise.append(xl - poly_mul(xs[i].astype(complex), mean_l))
    return CoeffTables(unraveling, u, l_vec, noise)


# ---------------------------------------------------------------------------
# Moment system


@dataclass(frozen=True, order=True)
class MomentIndex:
    """Sorted multiset of basis indices; ``(0,)`` denotes the constant ``E[x_0]``."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(sorted(self.indices))
        if not idx:
            raise ValueError("moment index must have degree >= 1")
        if 0 in idx and idx != (0,):
            raise ValueError("x_0 is constant and only appears as the index (0,)")
        object.__setattr__(self, "indices", idx)

    @property
    def degree(self) -> int:
        return len(self.indices)

    @property
    def exponents(self) -> tuple[int, int, int]:
        return tuple(self.indices.count(k) for k in (1, 2, 3))

    @classmethod
    def from_exponents(cls, e) -> MomentIndex:
        return cls(tuple(itertools.chain.from_iterable([k + 1] * n for k, n in enumerate(e))))


def moment_indices(order: int) -> list[MomentIndex]:
    out = [MomentIndex((0,))]
    for n in range(1, order + 1):
        out.extend(MomentIndex(c) for c in itertools.combinations_with_replacement((1, 2, 3), n))
    return out


@dataclass
class MomentSystem:
    """Linear system ``dy/dt = M y`` over the moment indices up to ``order``."""

    params: SystemParams
    unraveling: str
    order: int
    indices: list[MomentIndex]
    matrix: np.ndarray
    y0: np.ndarray
    tables: CoeffTables
    max_remainder: float = 0.0
    max_imaginary: float = 0.0

    @property
    def dimension(self) -> int:
        return len(self.indices)

    def position(self, index) -> int:
        if not isinstance(index, MomentIndex):
            index = MomentIndex(tuple(index))
        return self._lookup[index]

    def __post_init__(self) -> None:
        self._lookup = {ix: k for k, ix in enumerate(self.indices)}

    def bloch_block(self) -> np.ndarray:
        """Rows/columns of ``(0,), (1,), (2,), (3,)``."""
        pos = [self.position((k,)) for k in range(4)]
        return self.matrix[np.ix_(pos, pos)]


def initial_moments(indices: list[MomentIndex], bloch=(0.0, 0.0, -1.0)) -> np.ndarray:
    """Moments of a deterministic initial state (default ``|down>``)."""
    x = np.asarray(bloch, dtype=float) / SQRT2
    y = np.empty(len(indices))
    for k, ix in enumerate(indices):
        y[k] = X0 if ix.indices == (0,) else float(np.prod(x ** np.array(ix.exponents)))
    return y


def _emit(row: np.ndarray, poly: np.ndarray, lookup: dict, order: int) -> None:
    for e, c in poly_terms(poly).items():
        deg = sum(e)
        if deg == 0:
            row[lookup[(0, 0, 0)]] += c * SQRT2
        elif deg <= order:
            row[lookup[e]] += c


def _multinomial(n, s) -> int:
    return math.prod(math.comb(a, b) for a, b in zip(n, s))


@lru_cache(maxsize=32)
def build_system(params: SystemParams, unraveling: str = "poisson", order: int = 10) -> MomentSystem:
    """Assemble the generator matrix of all moments up to degree ``order``."""
    _check_params(params, unraveling)
    if order < 2:
        raise ValueError("truncation order must be >= 2")
    size = 2 * order + 3
    tables = coeff_tables(params, unraveling, size)
    indices = moment_indices(order)
    lookup = {(0, 0, 0): 0}
    for k, ix in enumerate(indices[1:], start=1):
        lookup[ix.exponents] = k
    dim = len(indices)
    m = np.zeros((dim, dim))
    drift = [linear_poly(tables.u[i], size) for i in range(4)]
    units = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    max_rem = 0.0
    max_imag = 0.0

    # Poisson jump algebra in Bloch coordinates z = sqrt2 x, where every
    # coefficient is an integer: n_i = (1 + z3)(post_i - z_i), post = |down>.
    one_plus_z3 = _zero(size)
    one_plus_z3[0, 0, 0] = 1.0
    one_plus_z3[0, 0, 1] = 1.0
    post = (0.0, 0.0, -1.0)
    jump_num = []
    for k in range(3):
        diff = _zero(size)
        diff[0, 0, 0] = post[k]
        diff[units[k]] -= 1.0
        jump_num.append(poly_mul(one_plus_z3, diff))
    num_cache: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}

    def numerator(s):
        """``prod n_i^{s_i}`` and an entrywise bound on intermediate magnitudes."""
        if s not in num_cache:
            if sum(s) == 0:
                p = _zero(size)
                p[0, 0, 0] = 1.0
                num_cache[s] = (p, p.copy())
            else:
                k = next(i for i in range(3) if s[i] > 0)
                prev = tuple(v - (i == k) for i, v in enumerate(s))
                p, b = numerator(prev)
                num_cache[s] = (poly_mul(p, jump_num[k]), poly_mul(b, np.abs(jump_num[k])))
        return num_cache[s]

    noise_pairs = {}
    if unraveling == "wiener":
        for a in range(3):
            for b in range(a, 3):
                fa, fb = tables.noise[a + 1], tables.noise[b + 1]
                prod = poly_mul(fa, np.conj(fb)) + poly_mul(np.conj(fa), fb)
                max_imag = max(max_imag, float(np.max(np.abs(prod.imag))))
                noise_pairs[(a, b)] = prod.real

    for row_k, ix in enumerate(indices):
        if ix.indices == (0,):
            continue
        n = ix.exponents
        deg = sum(n)
        poly = _zero(size)
        for k in range(3):
            if n[k]:
                rest = tuple(v - (i == k) for i, v in enumerate(n))
                poly += n[k] * shift(drift[k + 1], rest)
        if unraveling == "poisson" and deg >= 2:
            # (gamma/2) sum_s C(n,s) n^s z^{n-s} (1+z3)^{deg-|s|}, divided by (1+z3)^{deg-1}
            acc = _zero(size)
            bound = _zero(size)
            for j in range(2, deg + 1):
                layer = _zero(size)
                layer_bound = _zero(size)
                for s in itertools.product(*(range(v + 1) for v in n)):
                    if sum(s) != j:
                        continue
                    rest = tuple(a - b for a, b in zip(n, s))
                    num, num_bound = numerator(s)
                    layer += _multinomial(n, s) * shift(num, rest)
                    layer_bound += _multinomial(n, s) * shift(num_bound, rest)
                if j > 2:
                    acc = poly_mul(acc, one_plus_z3)
                    bound = poly_mul(bound, one_plus_z3)
                acc += layer
                bound += layer_bound
            if bound.sum() >= EXACT_LIMIT:
                raise OverflowError("integer coefficients exceed the exact float range; lower the order")
            for _ in range(deg - 1):
                acc, rem = divide_linear_x3(acc, -1.0, 1.0)
                max_rem = max(max_rem, rem)
                if rem > REMAINDER_TOL:
                    raise ArithmeticError(f"nonzero remainder {rem:.3g} in the equation for {ix.indices}")
            # back to x: z^e = 2^{|e|/2} x^e and x^n = 2^{-deg/2} z^n
            for e, c in poly_terms(acc).items():
                poly[e] += 0.5 * params.decay * c * SQRT2 ** (sum(e) - deg)
        elif unraveling == "wiener" and deg >= 2:
            for a in range(3):
                for b in range(a, 3):
                    if a == b:
                        mult = math.comb(n[a], 2)
                    else:
                        mult = n[a] * n[b]
                    if mult == 0:
                        continue
                    rest = tuple(v - (i == a) - (i == b) for i, v in enumerate(n))
                    poly += mult * shift(noise_pairs[(a, b)], rest)
        _emit(m[row_k], poly, lookup, order)
    return MomentSystem(params, unraveling, order, indices, m, initial_moments(indices), tables, max_rem, max_imag)


# ---------------------------------------------------------------------------
# Integration and observables


@dataclass
class MomentSolution:
    t_grid: np.ndarray
    y: np.ndarray
    system: MomentSystem
    truncation_warning: bool = False

    def moment(self, index) -> np.ndarray:
        return self.y[:, self.system.position(index)]


def integrate(system: MomentSystem, t_grid, y0: np.ndarray | None = None) -> MomentSolution:
    """``y(t) = expm(M t) y0`` on ``t_grid`` (one exponential per distinct step).

    The solution is flagged when a top-degree moment leaves the bound
    ``|E x^I| <= 2^{-|I|/2}`` that every conditional state satisfies.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and be strictly increasing")
    y = np.empty((len(t_grid), system.dimension))
    y[0] = system.y0 if y0 is None else y0
    cache: dict[float, np.ndarray] = {}
    for k in range(1, len(t_grid)):
        step = round(float(t_grid[k] - t_grid[k - 1]), 14)
        if step not in cache:
            cache[step] = expm(system.matrix * step)
        y[k] = cache[step] @ y[k - 1]
    degrees = np.array([ix.degree for ix in system.indices])
    top = degrees == system.order
    bound = 2.0 ** (-degrees[top] / 2.0)
    warn = bool(np.any(np.abs(y[:, top]) > bound * (1 + 1e-6) + 1e-9))
    return MomentSolution(t_grid, y, system, warn)


def _second_moment(sol: MomentSolution, i: int, j: int) -> np.ndarray:
    if i == 0 and j == 0:
        return np.full(len(sol.t_grid), 0.5)
    if i == 0 or j == 0:
        return X0 * sol.moment((max(i, j),))
    return sol.moment((i, j))


def qtav_from_moments(sol: MomentSolution, observable="sz") -> EnsembleCurve:
    """Mean and QTAV of ``<A>`` with ``A`` given by name or by its basis vector ``a``."""
    if isinstance(observable, str):
        op = {"sx": SIGMA_X, "sy": SIGMA_Y, "sz": SIGMA_Z}[observable]
        a = observable_vector(op).real
    else:
        a = np.asarray(observable, dtype=float)
    first = [np.full(len(sol.t_grid), X0)] + [sol.moment((i,)) for i in (1, 2, 3)]
    mean = sum(a[i] * first[i] for i in range(4))
    second = sum(a[i] * a[j] * _second_moment(sol, i, j) for i in range(4) for j in range(4) if a[i] and a[j])
    var = second - mean**2
    zeros = np.zeros_like(mean)
    return EnsembleCurve(sol.t_grid, mean, var, zeros, zeros.copy(), 0, {2: second})


def spectrum(system: MomentSystem) -> np.ndarray:
    """Eigenvalues of ``M`` sorted by imaginary then real part."""
    ev = np.linalg.eigvals(system.matrix)
    return ev[np.lexsort((ev.real, ev.imag))]


def moment_qtav(params: SystemParams, unraveling: str = "poisson", order: int = 10, t_grid=None, observable="sz") -> EnsembleCurve:
    """Convenience wrapper: build, integrate from ``|down>`` and extract the QTAV."""
    system = build_system(params, unraveling, order)
    t_grid = params.sample_grid() if t_grid is None else t_grid
    return qtav_from_moments(integrate(system, t_grid), observable)
