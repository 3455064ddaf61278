from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unravel import DiffusiveConfig, PureState, SystemParams, analytic_inversion, qtav, simulate_diffusive_ensemble, step_heterodyne, step_homodyne
from unravel.core import me_expectations
from unravel.diffusive import diffusive_step, simulate_diffusive
from unravel.rng import trajectory_rng

CONFIGS = [DiffusiveConfig("homodyne", 0.0), DiffusiveConfig("homodyne", math.pi / 2), DiffusiveConfig("heterodyne"), DiffusiveConfig("heterodyne", explicit_lo=True)]


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: c.label)
def test_linear_average_matches_master_equation(config):
    p = SystemParams.from_drive_strength(10.0, n_traj=2000)
    curve = qtav(simulate_diffusive_ensemble(p, config))
    ref = analytic_inversion(p, curve.t_grid)
    assert np.all(np.abs(curve.mean - ref) <= 4 * curve.stderr_mean + 2e-3)


@pytest.mark.parametrize("config", CONFIGS[:3], ids=lambda c: c.label)
def test_pure_unravelings_keep_unit_bloch_length(config):
    p = SystemParams.from_drive_strength(30.0, n_traj=50, t_max=2.0)
    ens = simulate_diffusive_ensemble(p, config)
    assert np.allclose(np.linalg.norm(ens.bloch, axis=-1), 1.0, atol=1e-12)


def test_thread_count_does_not_change_output():
    p = SystemParams.from_drive_strength(10.0, n_traj=4200, t_max=0.5)
    a = simulate_diffusive_ensemble(p, DiffusiveConfig("heterodyne"), threads=1)
    b = simulate_diffusive_ensemble(p, DiffusiveConfig("heterodyne"), threads=2)
    assert np.array_equal(a.bloch, b.bloch)


def test_imperfect_homodyne_is_physical_and_unbiased():
    p = SystemParams.from_drive_strength(10.0, n_traj=1500, t_max=3.0)
    ens = simulate_diffusive_ensemble(p, DiffusiveConfig("homodyne", 0.0, efficiency=0.5))
    assert np.all(np.linalg.norm(ens.bloch, axis=-1) <= 1 + 1e-9)
    curve = qtav(ens)
    assert np.all(np.abs(curve.mean - analytic_inversion(p, curve.t_grid)) <= 4 * curve.stderr_mean + 2e-3)


def test_imperfect_homodyne_reduces_variance():
    p = SystemParams.from_drive_strength(10.0, n_traj=1500, t_max=4.0)
    ideal = qtav(simulate_diffusive_ensemble(p, DiffusiveConfig("homodyne", 0.0)))
    poor = qtav(simulate_diffusive_ensemble(p, DiffusiveConfig("homodyne", 0.0, efficiency=0.2)))
    late = ideal.t_grid >= 2
    assert poor.qtav[late].mean() < ideal.qtav[late].mean()


def test_config_validation():
    with pytest.raises(ValueError):
        DiffusiveConfig("photon")
    with pytest.raises(ValueError):
        DiffusiveConfig("heterodyne", efficiency=0.5)


def test_step_respects_drive_bound():
    p = SystemParams.from_drive_strength(300.0)
    h = diffusive_step(p)
    assert h <= 0.02 / p.rabi_half + 1e-15
    assert p.sample_dt / h == pytest.approx(round(p.sample_dt / h))


def test_zero_noise_homodyne_step_is_deterministic():
    p = SystemParams(rabi_half=1.0)
    s = step_homodyne(PureState.ground(), p, 0.0, 1e-3)
    assert s.norm == pytest.approx(1.0)
    assert s.amp_up.imag < 0  # -i Omega dt rotation out of |down>


@given(
    theta=st.floats(0, math.pi),
    phi=st.floats(0, 2 * math.pi),
    dw=st.floats(-0.1, 0.1),
    dw2=st.floats(-0.1, 0.1),
    omega=st.floats(0, 10),
)
def test_single_steps_stay_normalised(theta, phi, dw, dw2, omega):
    psi = PureState(math.cos(theta / 2), math.sin(theta / 2) * complex(math.cos(phi), math.sin(phi)))
    p = SystemParams(rabi_half=omega, lo_phase=0.3)
    assert step_homodyne(psi, p, dw, 1e-3).norm == pytest.approx(1.0, abs=1e-12)
    assert step_heterodyne(psi, p, complex(dw, dw2), 1e-3).norm == pytest.approx(1.0, abs=1e-12)


def test_single_trajectory_api():
    p = SystemParams.from_drive_strength(10.0, t_max=1.0)
    rec = simulate_diffusive(p, DiffusiveConfig("heterodyne"), trajectory_rng(0, 0, "heterodyne"))
    assert rec.bloch.shape == (len(p.sample_grid()), 3)
    assert rec.clicks is None
