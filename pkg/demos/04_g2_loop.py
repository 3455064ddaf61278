"""
Closing the loop on photon correlations
=======================================

A long click record is split on a beam splitter, thinned by the detection
efficiency and mixed with dark counts.  The coincidence histogram is then
fitted with the imperfection-corrected model.
"""

# %%
import numpy as np

from unravel import SystemParams, estimate_g2, fit_g2
from unravel.photocount import DetectorSetup, snr_scaling, synthetic_streams

truth = SystemParams(rabi_half=3.3, detuning=-3.2)
setup = DetectorSetup(efficiency=0.5, snr_det=18.0)

a, b = synthetic_streams(truth, setup, t_int=2e5, seed=0)
print(f"{len(a)} clicks on A, {len(b)} on B, dark rate {a.rates['R_DC']:.4f} gamma")

# %% Histogram and fit
est = estimate_g2(a, b, bin_width=0.05, tau_max=8.0)
fit = fit_g2(est, {"rabi_half": 3.0, "detuning": -3.0, "snr_det": 10.0}, fixed={"b": 0.0, "c": 0.0})
print(fit.report())

# %% Signal-to-noise grows like the square root of the integration time
t_ints = np.array([2.5e4, 1e5, 4e5])
snrs, slope = snr_scaling(truth, setup, t_ints)
print("SNR:", np.round(snrs, 2), f"log-log slope {slope:.3f}")
