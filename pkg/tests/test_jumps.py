from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from unravel import ClickRecord, SystemParams, analytic_inversion, qtav
from unravel.core import me_expectations, steady_state
from unravel.jumps import (
    conditional_bloch,
    generate_clicks,
    mean_click_rate,
    null_probability,
    sample_waiting_time,
    simulate_mixed_jump_ensemble,
    simulate_pure_jump_ensemble,
    solve_survival,
    waiting_time_density,
)
from unravel.rng import trajectory_rng


@pytest.mark.parametrize("omega,delta", [(0.1, 0.0), (0.2, 0.0), (1.0, 0.0), (3.5, 0.0), (3.3, -3.2)])
def test_density_is_minus_derivative_of_survival(omega, delta):
    p = SystemParams(rabi_half=omega, detuning=delta)
    t = np.linspace(0.01, 12, 400)
    h = 1e-5
    deriv = -(null_probability(p, t + h) - null_probability(p, t - h)) / (2 * h)
    assert np.max(np.abs(deriv - waiting_time_density(p, t))) < 1e-6


@pytest.mark.parametrize("omega", [0.3, 3.5])
def test_density_normalised(omega):
    p = SystemParams(rabi_half=omega)
    t = np.linspace(0, 80, 400_001)
    assert np.trapezoid(waiting_time_density(p, t), t) == pytest.approx(1.0, abs=1e-6)
    assert null_probability(p, 0.0) == pytest.approx(1.0)


def test_click_rate_matches_steady_state():
    p = SystemParams.from_drive_strength(10.0)
    y2 = p.drive_strength**2
    assert mean_click_rate(p) == pytest.approx(0.5 * y2 / (1 + y2), rel=1e-12)
    assert mean_click_rate(p) == pytest.approx(0.5 * (1 + steady_state(p).bloch[3]), rel=1e-12)


def test_dark_atom_never_clicks():
    p = SystemParams(rabi_half=0.0, n_traj=20, t_max=3.0)
    ens = simulate_pure_jump_ensemble(p)
    assert all(len(c) == 0 for c in ens.clicks)
    assert np.all(ens.expectation("sz") == -1.0)


def test_long_run_click_count():
    p = SystemParams.from_drive_strength(10.0)
    clicks = generate_clicks(p, trajectory_rng(3, 0, "misc"), 20_000.0)
    expected = mean_click_rate(p) * 20_000.0
    assert abs(len(clicks) - expected) < 5 * np.sqrt(expected)


def test_sampler_ks_statistic():
    p = SystemParams.from_drive_strength(10.0)
    rng = trajectory_rng(1, 0, "misc")
    taus = solve_survival(p, 1.0 - rng.random(20_000))
    res = stats.kstest(taus, lambda x: 1.0 - null_probability(p, x))
    assert res.pvalue > 1e-3
    assert sample_waiting_time(p, rng) > 0


def test_inter_click_intervals_follow_density():
    p = SystemParams.from_drive_strength(5.0)
    clicks = generate_clicks(p, trajectory_rng(2, 0, "misc"), 40_000.0).click_times
    gaps = np.diff(clicks)
    res = stats.kstest(gaps, lambda x: 1.0 - null_probability(p, x))
    assert res.pvalue > 1e-3


def test_survival_fraction_of_first_interval():
    p = SystemParams.from_drive_strength(3.0, n_traj=4000, t_max=4.0)
    ens = simulate_pure_jump_ensemble(p)
    first = np.array([c.click_times[0] if len(c) else np.inf for c in ens.clicks])
    for t in (0.5, 1.0, 2.0, 3.0):
        p0 = null_probability(p, t)
        frac = np.mean(first > t)
        assert abs(frac - p0) < 4 * np.sqrt(p0 * (1 - p0) / len(first)) + 1e-12


def test_conditional_state_is_pure_and_starts_down():
    p = SystemParams(rabi_half=2.0, detuning=0.7)
    b = conditional_bloch(p, np.linspace(0, 10, 101))
    assert np.allclose(np.linalg.norm(b, axis=-1), 1.0)
    assert np.allclose(b[0], [0.0, 0.0, -1.0])


def test_linear_average_matches_master_equation():
    p = SystemParams.from_drive_strength(10.0, n_traj=3000)
    curve = qtav(simulate_pure_jump_ensemble(p))
    ref = analytic_inversion(p, curve.t_grid)
    assert np.all(np.abs(curve.mean - ref) <= 4 * curve.stderr_mean + 4 / np.sqrt(3000) * 0.25)


def test_thread_count_does_not_change_output():
    p = SystemParams.from_drive_strength(10.0, n_traj=5000, t_max=1.0)
    a = simulate_pure_jump_ensemble(p, threads=1)
    b = simulate_pure_jump_ensemble(p, threads=3)
    assert np.array_equal(a.bloch, b.bloch)
    m1 = simulate_mixed_jump_ensemble(p.with_(efficiency=0.5, n_traj=300), threads=1)
    m2 = simulate_mixed_jump_ensemble(p.with_(efficiency=0.5, n_traj=300), threads=2)
    assert np.array_equal(m1.bloch, m2.bloch)


def test_mixed_states_stay_physical():
    p = SystemParams.from_drive_strength(10.0, n_traj=200, efficiency=0.4, thermal=0.1, t_max=3.0)
    ens = simulate_mixed_jump_ensemble(p)
    assert np.all(np.linalg.norm(ens.bloch, axis=-1) <= 1 + 1e-9)
    assert np.all(ens.purity <= 1 + 1e-9)


def test_zero_efficiency_follows_master_equation():
    p = SystemParams.from_drive_strength(10.0, n_traj=20, efficiency=0.0, t_max=3.0)
    ens = simulate_mixed_jump_ensemble(p)
    me = me_expectations(p, ens.t_grid)
    assert np.max(np.abs(ens.bloch - me[None])) < 1e-6


def test_mixed_linear_average_with_thermal_light():
    p = SystemParams(rabi_half=2.0, thermal=0.3, efficiency=0.7, n_traj=2000, t_max=3.0)
    ens = simulate_mixed_jump_ensemble(p)
    curve = qtav(ens)
    me = me_expectations(p, ens.t_grid)[:, 2]
    assert np.all(np.abs(curve.mean - me) <= 4 * curve.stderr_mean + 1e-3)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=0, max_size=30, unique=True), st.integers(0, 2**32), st.integers(0, 10**6))
def test_click_record_round_trip(times, seed, traj):
    times = np.sort(np.round(np.asarray(times, dtype=float), 6))
    times = np.unique(times)
    rec = ClickRecord(times, 100.0)
    text = rec.to_text(seed, traj)
    assert text.splitlines()[0] == f"# gamma_t clicks, seed={seed}, traj={traj}"
    back = ClickRecord.from_text(text, 100.0)
    assert np.allclose(back.click_times, times, rtol=1e-11, atol=0)


@pytest.mark.filterwarnings("error")
@pytest.mark.parametrize("omega", [1 / 56, 0.1, 0.124])
def test_overdamped_no_jump_evolution_does_not_overflow(omega):
    p = SystemParams(rabi_half=omega)
    t = np.array([1.0, 150.0, 400.0, 5e3, 1e5])
    p0 = null_probability(p, t)
    assert np.all(np.isfinite(p0)) and np.all(np.diff(p0) <= 0)
    assert np.all(np.isfinite(waiting_time_density(p, t)))
    assert np.all(np.isfinite(conditional_bloch(p, t)))
    taus = solve_survival(p, np.array([0.5, 1e-6]))
    assert np.allclose(null_probability(p, taus), [0.5, 1e-6], rtol=1e-6)
