from __future__ import annotations

from functools import lru_cache

import numpy as np
import pytest
from hypothesis import settings

from unravel import DiffusiveConfig, SystemParams, qtav
from unravel.jumps import simulate_mixed_jump_ensemble, simulate_pure_jump_ensemble
from unravel.diffusive import simulate_diffusive_ensemble

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def params_for(y: float, **kw) -> SystemParams:
    return SystemParams.from_drive_strength(y, **kw)


@lru_cache(maxsize=None)
def ensemble_curve(kind: str, y: float, n_traj: int, efficiency: float = 1.0, seed: int = 0, observable: str = "sz"):
    """QTAV curve of a cached ensemble; the trajectories themselves are dropped."""
    p = params_for(y, n_traj=n_traj, seed=seed)
    if kind == "direct":
        ens = simulate_pure_jump_ensemble(p) if efficiency == 1.0 else simulate_mixed_jump_ensemble(p.with_(efficiency=efficiency))
    elif kind == "homodyne0":
        ens = simulate_diffusive_ensemble(p, DiffusiveConfig("homodyne", 0.0))
    elif kind == "homodyne90":
        ens = simulate_diffusive_ensemble(p, DiffusiveConfig("homodyne", np.pi / 2))
    elif kind == "heterodyne":
        ens = simulate_diffusive_ensemble(p, DiffusiveConfig("heterodyne"))
    else:
        raise KeyError(kind)
    return qtav(ens, observable)


@pytest.fixture(scope="session")
def curves():
    return ensemble_curve


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def verdict():
    """Record a criterion result, print it, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
