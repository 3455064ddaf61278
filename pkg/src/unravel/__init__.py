"""Quantum trajectories of a driven two-level emitter under different unravelings.

Linear averages of every unraveling reproduce the master equation; nonlinear
trajectory averages such as the quantum-trajectory-averaged variance (QTAV)
do not, and tell the detection schemes apart.  The package provides the
trajectory simulators, three independent engines for the QTAV (Monte Carlo,
renewal series, moment hierarchy), an EPR-steering functional and a
photon-correlation analysis chain.
"""

from __future__ import annotations

from .core import (
    MixedState,
    PureState,
    SystemParams,
    analytic_inversion,
    expectation,
    g2_analytic,
    propagate_me,
    steady_inversion,
)
from .diffusive import DiffusiveConfig, simulate_diffusive, simulate_diffusive_ensemble, step_heterodyne, step_homodyne
from .dyson import asymptotic_var_strong, asymptotic_var_weak, om_kernel, renewal_average, renewal_density
from .ensemble import EnsembleCurve, dominant_frequency, power_average, qtav
from .jumps import (
    null_probability,
    sample_waiting_time,
    simulate_mixed_jump,
    simulate_mixed_jump_ensemble,
    simulate_pure_jump,
    simulate_pure_jump_ensemble,
    waiting_time_density,
)
from .moments import build_system, coeff_tables, integrate, qtav_from_moments, spectrum
from .photocount import G2Estimate, TimestampSeries, estimate_g2, fit_g2, g2_model, snr_model
from .records import ClickRecord, Ensemble, TrajectoryRecord
from .steering import SteeringCurve, simulate_steering, steering_value

__version__ = "0.1.0"

__all__ = [
    "ClickRecord",
    "DiffusiveConfig",
    "Ensemble",
    "EnsembleCurve",
    "G2Estimate",
    "MixedState",
    "PureState",
    "SteeringCurve",
    "SystemParams",
    "TimestampSeries",
    "TrajectoryRecord",
    "analytic_inversion",
    "asymptotic_var_strong",
    "asymptotic_var_weak",
    "build_system",
    "coeff_tables",
    "dominant_frequency",
    "estimate_g2",
    "expectation",
    "fit_g2",
    "g2_analytic",
    "g2_model",
    "integrate",
    "null_probability",
    "om_kernel",
    "power_average",
    "propagate_me",
    "qtav",
    "qtav_from_moments",
    "renewal_average",
    "renewal_density",
    "sample_waiting_time",
    "simulate_diffusive",
    "simulate_diffusive_ensemble",
    "simulate_mixed_jump",
    "simulate_mixed_jump_ensemble",
    "simulate_pure_jump",
    "simulate_pure_jump_ensemble",
    "snr_model",
    "spectrum",
    "steady_inversion",
    "simulate_steering",
    "steering_value",
    "step_heterodyne",
    "step_homodyne",
    "waiting_time_density",
]
