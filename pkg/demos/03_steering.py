"""
Steering with a direct and a heterodyne detector
================================================

S(t) adds the squared coherence seen by direct detection to the squared
remaining components seen by heterodyne detection.  Any single shared
conditional state keeps S <= 1, so S > 1 means the two schemes cannot be
refining one objective state.
"""

# %%
from unravel import SystemParams
from unravel.steering import simulate_steering

params = SystemParams.from_drive_strength(30.0, n_traj=1000, t_max=8.0)

for eta in (1.0, 0.8, 0.6):
    curve = simulate_steering(params, eta)
    level = curve.steady_envelope()
    print(f"eta = {eta:.1f}: steady envelope of S = {level:.3f} ({'violates' if level > 1 else 'respects'} S <= 1)")
