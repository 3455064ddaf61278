from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unravel import SystemParams, analytic_inversion
from unravel.core import SIGMA_X, SIGMA_Y, SIGMA_Z, bloch_generator
from unravel.dyson import default_grid, renewal_qtav
from unravel.moments import (
    BASIS,
    MomentIndex,
    build_system,
    divide_linear_x3,
    integrate,
    moment_indices,
    moment_qtav,
    observable_vector,
    poly_mul,
    qtav_from_moments,
    spectrum,
    to_basis,
)

Y10 = SystemParams.from_drive_strength(10.0)
Y30 = SystemParams.from_drive_strength(30.0)


def test_basis_is_orthonormal():
    gram = np.array([[np.trace(a.conj().T @ b) for b in BASIS] for a in BASIS])
    assert np.allclose(gram, np.eye(4))
    assert np.allclose(to_basis(SIGMA_Z), [0, 0, 0, math.sqrt(2)])
    assert np.allclose(observable_vector(SIGMA_X).real, [0, math.sqrt(2), 0, 0])


def test_index_count():
    assert len(moment_indices(10)) == 1 + sum(math.comb(n + 2, 2) for n in range(1, 11))
    assert build_system(Y10, "poisson", 10).dimension == 286


@given(st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4)).filter(lambda e: sum(e) > 0))
def test_multiset_index_round_trip(e):
    ix = MomentIndex.from_exponents(e)
    assert ix.exponents == e
    assert ix.degree == sum(e)
    assert list(ix.indices) == sorted(ix.indices)


@given(st.lists(st.integers(-3, 3), min_size=4, max_size=4), st.lists(st.integers(-3, 3), min_size=4, max_size=4), st.floats(-2, 2))
def test_synthetic_division_inverts_multiplication(a, b, root):
    size = 6
    p = np.zeros((size,) * 3)
    p[0, 0, 0], p[1, 0, 0], p[0, 1, 1], p[0, 0, 2] = a
    q = np.zeros((size,) * 3)
    q[0, 0, 0], q[0, 0, 1] = -root, 1.0
    r = np.zeros((size,) * 3)
    r[0, 0, 0], r[0, 1, 0], r[1, 0, 1], r[0, 2, 0] = b
    prod = poly_mul(p, q)
    quotient, remainder = divide_linear_x3(prod, root, 1.0)
    assert remainder < 1e-9
    assert np.allclose(quotient, p, atol=1e-9)
    assert np.allclose(poly_mul(p, r), poly_mul(r, p))


@pytest.mark.parametrize("unraveling", ["poisson", "wiener"])
@pytest.mark.parametrize("order", [2, 10])
def test_degree_one_block_is_bloch_generator(unraveling, order):
    system = build_system(Y10, unraveling, order)
    assert np.max(np.abs(system.bloch_block() - bloch_generator(Y10))) < 1e-12


def test_poisson_remainders_vanish():
    for p in (Y10, Y30):
        assert build_system(p, "poisson", 10).max_remainder < 1e-12


def test_wiener_terms_are_real():
    assert build_system(Y30, "wiener", 10).max_imaginary < 1e-12


@pytest.mark.parametrize("unraveling", ["poisson", "wiener"])
def test_spectrum_is_stable(unraveling):
    ev = spectrum(build_system(Y30, unraveling, 10))
    assert np.max(ev.real) <= 1e-9


def test_spectrum_contains_damped_rabi_pair():
    ev = spectrum(build_system(Y10, "poisson", 10))
    freq = math.sqrt(4 * Y10.rabi_half**2 - 1 / 16)
    for sign in (1, -1):
        assert np.min(np.abs(ev - complex(-0.75, sign * freq))) < 1e-9


def test_poisson_spectrum_bands_at_even_multiples():
    ev = spectrum(build_system(Y30, "poisson", 10))
    om = Y30.rabi_half
    dist = np.abs(ev.imag - 2 * om * np.round(ev.imag / (2 * om)))
    assert np.max(dist) <= 1.0


def test_degree_one_marginal_is_master_equation():
    t = Y10.sample_grid()
    sol = integrate(build_system(Y10, "wiener", 6), t)
    curve = qtav_from_moments(sol, "sz")
    assert np.max(np.abs(curve.mean - analytic_inversion(Y10, t))) < 1e-10


def test_poisson_hierarchy_matches_renewal_route():
    grid = default_grid(Y10, 6.0)
    _, ren = renewal_qtav(Y10, "sz", grid)
    stride = int(round(0.01 / (grid[1] - grid[0])))
    curve = moment_qtav(Y10, "poisson", 10, Y10.sample_grid())
    assert np.max(np.abs(curve.qtav - ren[::stride])) < 1e-5


def test_truncation_convergence():
    t = Y10.sample_grid()
    a = moment_qtav(Y10, "poisson", 8, t)
    b = moment_qtav(Y10, "poisson", 10, t)
    assert np.max(np.abs(a.qtav - b.qtav)) < 1e-3


@pytest.mark.parametrize("params", [Y10, Y30], ids=["Y10", "Y30"])
def test_cauchy_schwarz_on_second_moments(params):
    sol = integrate(build_system(params, "poisson", 10), params.sample_grid())
    for i in (1, 2, 3):
        assert np.all(sol.moment((i, i)) >= sol.moment((i,)) ** 2 - 1e-6)


def test_wiener_qtav_observables():
    sol = integrate(build_system(Y10, "wiener", 4), Y10.sample_grid())
    for obs in ("sx", "sy", "sz"):
        curve = qtav_from_moments(sol, obs)
        assert curve.qtav[0] == pytest.approx(0.0, abs=1e-12)
    custom = qtav_from_moments(sol, observable_vector(SIGMA_Y).real)
    assert np.allclose(custom.qtav, qtav_from_moments(sol, "sy").qtav)


def test_parameter_guards():
    with pytest.raises(ValueError):
        build_system(Y10.with_(efficiency=0.5), "poisson", 4)
    with pytest.raises(ValueError):
        build_system(Y10, "homodyne", 4)
    with pytest.raises(ValueError):
        integrate(build_system(Y10, "poisson", 2), [0.1, 0.2])
