"""Photon timestamps, coincidence g2 estimation and the imperfection-corrected fit.

A measured cross-correlation between two detectors with dark counts is

    g2_meas = [A(tau) g2(tau) + 2/S + 1/S^2] / [1 + 2/S + 1/S^2]

with ``S = R_sca,det / R_DC`` (per-detector signal over dark rate) and an
empirical envelope ``A(tau) = a + b exp(-c tau)``.  The synthetic chain
(emitter trajectory, random beam splitter, efficiency thinning, Poisson dark
counts) produces data with exactly this structure.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .core import SystemParams, g2_analytic
from .ensemble import write_curve_csv
from .jumps import generate_clicks, mean_click_rate
from .records import read_timestamps
from .rng import trajectory_rng

UNITS = ("gamma_t", "s")
PARAM_NAMES = ("rabi_half", "detuning", "a", "b", "c", "snr_det")


@dataclass
class TimestampSeries:
    """Sorted arrival times of one detector.

    ``unit`` is ``"gamma_t"`` (dimensionless) or ``"s"``; ``gamma`` (in 1/s)
    converts seconds to ``gamma t``.
    """

    detector: str
    times: np.ndarray
    t_int: float
    unit: str = "gamma_t"
    gamma: float | None = None
    rates: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.unit not in UNITS:
            raise ValueError(f"unit must be one of {UNITS}")
        if self.times.size and (np.any(np.diff(self.times) < 0) or self.times[0] < 0 or self.times[-1] > self.t_int):
            raise ValueError("timestamps must be sorted and lie in [0, t_int]")

    def __len__(self) -> int:
        return self.times.size

    @property
    def rate(self) -> float:
        return len(self) / self.t_int

    def in_gamma_units(self) -> TimestampSeries:
        if self.unit == "gamma_t":
            return self
        if not self.gamma:
            raise ValueError("gamma is required to convert seconds to gamma*t")
        return TimestampSeries(self.detector, self.times * self.gamma, self.t_int * self.gamma, "gamma_t", self.gamma, dict(self.rates))

    def window(self, t0: float, t1: float) -> TimestampSeries:
        """Clicks in ``[t0, t1)`` shifted to start at zero."""
        sel = self.times[(self.times >= t0) & (self.times < t1)] - t0
        return TimestampSeries(self.detector, sel, t1 - t0, self.unit, self.gamma, dict(self.rates))

    def write(self, path: str | Path) -> None:
        """Timestamp file plus a JSON sidecar ``<path>.json`` with the metadata."""
        path = Path(path)
        body = [f"# {self.unit} clicks, detector={self.detector}"] + [f"{t:.12g}" for t in self.times]
        path.write_text("\n".join(body) + "\n")
        meta = {"detector": self.detector, "t_int": self.t_int, "unit": self.unit, "gamma": self.gamma, "rates": self.rates}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> TimestampSeries:
        path = Path(path)
        with open(path) as fh:
            times = read_timestamps(fh)
        sidecar = Path(str(path) + ".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        if times.size == 0:
            raise ValueError(f"{path}: no timestamps")
        t_int = float(meta.get("t_int", times[-1]))
        return cls(meta.get("detector", path.stem), np.sort(times), t_int, meta.get("unit", "gamma_t"), meta.get("gamma"), meta.get("rates", {}))


@dataclass
class G2Estimate:
    tau: np.ndarray
    g2: np.ndarray
    err: np.ndarray
    counts: np.ndarray
    bin_width: float

    def select(self, tau_min: float = -np.inf, tau_max: float = np.inf) -> G2Estimate:
        sel = (self.tau >= tau_min) & (self.tau <= tau_max)
        return G2Estimate(self.tau[sel], self.g2[sel], self.err[sel], self.counts[sel], self.bin_width)

    def to_csv(self, path: str | Path, comment: str = "") -> None:
        write_curve_csv(path, {"tau": self.tau, "g2": self.g2, "err": self.err}, comment or "units: gamma*tau")


def coincidence_counts(times_a: np.ndarray, times_b: np.ndarray, edges: np.ndarray, chunk: int = 200_000) -> np.ndarray:
    """Histogram of ``t_b - t_a`` over ``edges`` using sorted-array windows (no all-pairs scan)."""
    lo_edge, hi_edge = edges[0], edges[-1]
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    for start in range(0, len(times_a), chunk):
        ta = times_a[start : start + chunk]
        lo = np.searchsorted(times_b, ta + lo_edge, side="left")
        hi = np.searchsorted(times_b, ta + hi_edge, side="left")
        n = hi - lo
        total = int(n.sum())
        if total == 0:
            continue
        owner = np.repeat(np.arange(len(ta)), n)
        offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        diffs = times_b[lo[owner] + offsets] - ta[owner]
        counts += np.histogram(diffs, bins=edges)[0]
    return counts


def estimate_g2(series_a: TimestampSeries, series_b: TimestampSeries, bin_width: float, tau_max: float, folded: bool = False) -> G2Estimate:
    """Normalised cross-correlation of two detectors.

    Bins are centred on multiples of ``bin_width`` in ``[-tau_max, tau_max]``
    and normalised by ``r_a r_b bin_width t_int``.  With ``folded`` the
    ``+tau`` and ``-tau`` bins are merged.  Errors are Poisson,
    ``sqrt(max(counts, 1))`` over the normalisation.
    """
    if len(series_a) == 0 or len(series_b) == 0:
        raise ValueError("empty timestamp series")
    a = series_a.in_gamma_units() if series_a.unit != series_b.unit else series_a
    b = series_b.in_gamma_units() if series_a.unit != series_b.unit else series_b
    t_int = min(a.t_int, b.t_int)
    n_half = int(round(tau_max / bin_width))
    centres = np.arange(-n_half, n_half + 1) * bin_width
    edges = np.append(centres - 0.5 * bin_width, centres[-1] + 0.5 * bin_width)
    counts = coincidence_counts(a.times, b.times, edges)
    norm = a.rate * b.rate * bin_width * t_int
    if folded:
        pos = counts[n_half:].copy()
        pos[1:] += counts[:n_half][::-1]
        factor = np.full(len(pos), 2.0)
        factor[0] = 1.0
        return G2Estimate(centres[n_half:], pos / (norm * factor), np.sqrt(np.maximum(pos, 1)) / (norm * factor), pos, bin_width)
    return G2Estimate(centres, counts / norm, np.sqrt(np.maximum(counts, 1)) / norm, counts, bin_width)


def g2_model(tau, rabi_half: float, detuning: float, a: float = 1.0, b: float = 0.0, c: float = 0.0, snr_det: float = np.inf) -> np.ndarray:
    """Fit model for the measured cross-correlation (see module docstring)."""
    tau = np.abs(np.asarray(tau, dtype=float))
    ideal = g2_analytic(SystemParams(rabi_half=rabi_half, detuning=detuning), tau)
    envelope = a + b * np.exp(-c * tau)
    k = 0.0 if np.isinf(snr_det) else 2.0 / snr_det + 1.0 / snr_det**2
    return (envelope * ideal + k) / (1.0 + k)


def snr_model(efficiency: float, g2_value: float, rate_sca_det: float, t_int: float) -> float:
    """``sqrt(eta^2 g2 R_sca,det t_int)``."""
    return float(np.sqrt(efficiency**2 * g2_value * rate_sca_det * t_int))


class FitError(RuntimeError):
    def __init__(self, message: str, best: FitResult | None = None):
        super().__init__(message)
        self.best = best


@dataclass
class FitResult:
    rabi_half: float
    detuning: float
    a: float
    b: float
    c: float
    snr_det: float
    stderr: dict[str, float]
    residual: float
    reduced_chi2: float
    n_points: int
    fixed: tuple[str, ...] = ()
    covariance: np.ndarray | None = None

    @property
    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def report(self) -> str:
        """Key = value text report."""
        lines = ["[fit]"]
        for k in PARAM_NAMES:
            err = self.stderr.get(k)
            tag = "fixed" if k in self.fixed else f"{err:.6g}" if err is not None else "nan"
            lines.append(f"{k} = {getattr(self, k):.10g}")
            lines.append(f"{k}_stderr = {tag}")
        lines += [f"residual = {self.residual:.10g}", f"reduced_chi2 = {self.reduced_chi2:.6g}", f"n_points = {self.n_points}"]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("covariance")
        d["fixed"] = list(self.fixed)
        return json.dumps(d, indent=2, sort_keys=True)


def _to_physical(theta: np.ndarray, free: list[str], fixed: dict[str, float], det_sign: float) -> dict[str, float]:
    vals = dict(fixed)
    for name, v in zip(free, theta):
        if name == "detuning":
            vals[name] = det_sign * abs(v)
        elif name in ("rabi_half", "c", "snr_det"):
            vals[name] = abs(v)
        else:
            vals[name] = v
    return vals


def fit_g2(estimate: G2Estimate, guess: dict[str, float], fixed: dict[str, float] | None = None, restarts: int = 4, tol: float = 1e-10, max_iter: int = 20000) -> FitResult:
    """Weighted least squares of :func:`g2_model` with Nelder-Mead restarts.

    ``g2`` is even in the detuning, so the sign of ``detuning`` is taken from
    the guess.  Standard errors come from ``(J^T J)^{-1}`` with ``J`` the
    finite-difference Jacobian of the weighted residuals, inflated by the
    reduced chi-square when it exceeds one.
    """
    fixed = dict(fixed or {})
    free = [k for k in PARAM_NAMES if k not in fixed]
    n_free = len(free)
    if len(estimate.tau) < 8 * n_free:
        raise ValueError(f"need at least {8 * n_free} bins for {n_free} free parameters")
    full = {"a": 1.0, "b": 0.0, "c": 0.0, "snr_det": 1e6, **guess}
    det_sign = -1.0 if full["detuning"] < 0 else 1.0
    weights = 1.0 / estimate.err

    def residuals(theta):
        vals = _to_physical(theta, free, fixed, det_sign)
        if vals["rabi_half"] == 0 or vals["snr_det"] == 0:
            return np.full(len(estimate.tau), 1e6)
        return (g2_model(estimate.tau, **vals) - estimate.g2) * weights

    def cost(theta):
        r = residuals(theta)
        return float(r @ r)

    options = {"xatol": tol, "fatol": tol, "maxiter": max_iter, "maxfev": max_iter, "adaptive": True}
    best = minimize(cost, np.array([full[k] for k in free], dtype=float), method="Nelder-Mead", options=options)
    for _ in range(restarts):
        res = minimize(cost, best.x, method="Nelder-Mead", options=options)
        if res.fun >= best.fun * (1 - 1e-9):
            break
        best = res
    vals = _to_physical(best.x, free, fixed, det_sign)
    chi2 = float(best.fun)
    dof = max(1, len(estimate.tau) - n_free)
    red = chi2 / dof

    # finite-difference Jacobian in physical parameters
    theta_phys = np.array([vals[k] for k in free])
    jac = np.empty((len(estimate.tau), n_free))
    for j, name in enumerate(free):
        step = 1e-6 * max(1.0, abs(theta_phys[j]))
        up, dn = dict(vals), dict(vals)
        up[name] += step
        span = 2 * step
        if name in ("rabi_half", "c", "snr_det") and vals[name] - step <= 0:
            span = step
        else:
            dn[name] -= step
        jac[:, j] = (g2_model(estimate.tau, **up) - g2_model(estimate.tau, **dn)) * weights / span
    try:
        cov = np.linalg.inv(jac.T @ jac) * max(1.0, red)
        errs = {k: float(np.sqrt(max(cov[j, j], 0.0))) for j, k in enumerate(free)}
    except np.linalg.LinAlgError:
        cov = None
        errs = {k: float("inf") for k in free}
    result = FitResult(**vals, stderr=errs, residual=float(np.sqrt(chi2)), reduced_chi2=red, n_points=len(estimate.tau), fixed=tuple(fixed), covariance=cov)
    if not best.success:
        raise FitError("Nelder-Mead did not converge within the restart budget", result)
    return result


# ---------------------------------------------------------------------------
# Synthetic detector chain


@dataclass
class DetectorSetup:
    """Two-detector Hanbury Brown-Twiss arrangement behind a 50/50 splitter."""

    efficiency: float = 0.5
    snr_det: float = 18.0

    def __post_init__(self) -> None:
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.snr_det <= 0:
            raise ValueError("snr_det must be positive")


def split_and_thin(times: np.ndarray, efficiency: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Route each photon to detector A or B with probability 1/2, then keep it with probability ``efficiency``."""
    u = rng.random((2, len(times)))
    to_a = u[0] < 0.5
    kept = u[1] < efficiency
    return times[to_a & kept], times[~to_a & kept]


def add_dark_counts(times: np.ndarray, rate: float, t_int: float, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(rate * t_int)
    return np.sort(np.concatenate([times, rng.uniform(0.0, t_int, n)]))


def synthetic_streams(params: SystemParams, setup: DetectorSetup, t_int: float, seed: int = 0, index: int = 0) -> tuple[TimestampSeries, TimestampSeries]:
    """Detector records of one long emitter trajectory with thinning and dark counts.

    The dark rate is ``R_sca,det / snr_det`` with ``R_sca,det`` the expected
    detected signal rate per detector, ``efficiency * rate / 2``.
    """
    rng = trajectory_rng(seed, index, "photocount")
    emitter = params.with_(efficiency=1.0, thermal=0.0)
    clicks = generate_clicks(emitter, rng, t_int).click_times
    signal_rate = 0.5 * setup.efficiency * mean_click_rate(emitter)
    dark_rate = signal_rate / setup.snr_det
    ta, tb = split_and_thin(clicks, setup.efficiency, rng)
    out = []
    for name, t in (("A", ta), ("B", tb)):
        times = add_dark_counts(t, dark_rate, t_int, rng)
        rates = {"R_sca_det": signal_rate, "R_DC": dark_rate}
        out.append(TimestampSeries(name, times, t_int, "gamma_t", None, rates))
    return out[0], out[1]


def measured_snr(estimate: G2Estimate, window: tuple[float, float] = (20.0, 50.0)) -> float:
    """Mean over standard deviation of the estimated g2 in the long-delay window (``|tau|``)."""
    sel = (np.abs(estimate.tau) >= window[0]) & (np.abs(estimate.tau) <= window[1])
    vals = estimate.g2[sel]
    if vals.size < 4:
        raise ValueError("SNR window contains fewer than 4 bins")
    return float(vals.mean() / vals.std(ddof=1))


def snr_scaling(params: SystemParams, setup: DetectorSetup, t_ints, bin_width: float = 0.1, window=(20.0, 50.0), seed: int = 0) -> tuple[np.ndarray, float]:
    """Measured SNR at several integration times (independent records) and the log-log slope."""
    t_ints = np.asarray(t_ints, dtype=float)
    snrs = []
    for k, t in enumerate(t_ints):
        a, b = synthetic_streams(params, setup, float(t), seed, index=k)
        snrs.append(measured_snr(estimate_g2(a, b, bin_width, window[1]), window))
    snrs = np.asarray(snrs)
    slope = float(np.polyfit(np.log(t_ints), np.log(snrs), 1)[0])
    return snrs, slope
