"""Command-line driver: ``unravel simulate | oracle | steering | g2``.

Every run reads an optional INI file (``[common]`` plus one section per
subcommand), applies command-line overrides, writes plot-ready CSV files into
``--out-dir`` and finishes with ``manifest.json``.  The manifest records the
resolved configuration and a sha256 checksum of every output; passing it back
through ``--config`` repeats the run.  Only ``wall_clock_s`` and ``threads``
differ between reruns, the output files are byte-identical.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .core import SystemParams, analytic_inversion, bloch_generator
from .diffusive import DiffusiveConfig, NormCollapseError, simulate_diffusive_ensemble
from .dyson import asymptotic_var_strong, asymptotic_var_weak, renewal_average, renewal_density
from .ensemble import qtav, write_curve_csv
from .jumps import simulate_mixed_jump_ensemble, simulate_pure_jump_ensemble
from .moments import build_system, integrate, qtav_from_moments, spectrum
from .photocount import DetectorSetup, FitError, TimestampSeries, estimate_g2, fit_g2, measured_snr, synthetic_streams
from .steering import steering_value
from .records import Ensemble

log = logging.getLogger("unravel")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERICAL_ERRORS = (FloatingPointError, NormCollapseError, FitError, np.linalg.LinAlgError, OverflowError)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# Configuration schema


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(",", " ").split()]


def _words(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(x) for x in text]
    return str(text).replace(",", " ").split()


def _optional_float(text) -> float | None:
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[Any], Any]
    default: Any
    help: str
    choices: tuple[str, ...] | None = None


COMMON = {
    "rabi_half": Key(_optional_float, None, "drive amplitude Omega in units of gamma"),
    "drive_strength": Key(_optional_float, None, "drive strength Y = 2 sqrt2 Omega / gamma (alternative to rabi_half)"),
    "detuning": Key(float, 0.0, "detuning Delta in units of gamma"),
    "efficiency": Key(float, 1.0, "detection efficiency eta"),
    "thermal": Key(float, 0.0, "thermal occupation nbar"),
    "lo_phase": Key(float, 0.0, "homodyne local-oscillator phase theta"),
    "het_detuning": Key(float, 0.0, "heterodyne LO detuning (explicit-LO mode)"),
    "dt": Key(float, 1e-3, "integration step"),
    "t_max": Key(float, 6.0, "final time gamma*t"),
    "sample_dt": Key(float, 0.01, "output sample spacing"),
    "n_traj": Key(int, 1000, "number of trajectories"),
    "seed": Key(int, 0, "master seed"),
}

SECTIONS: dict[str, dict[str, Key]] = {
    "simulate": {
        "unraveling": Key(str, "direct", "detection scheme", ("direct", "direct-imperfect", "homodyne", "heterodyne")),
        "observable": Key(str, "sz", "observable for the ensemble curve", ("sx", "sy", "sz")),
        "explicit_lo": Key(_bool, False, "heterodyne as homodyne with a rotating LO phase"),
        "click_files": Key(_bool, False, "write one click file per trajectory (jump unravelings)"),
        "trajectory_files": Key(int, 0, "write Bloch samples of the first N trajectories"),
    },
    "oracle": {
        "engine": Key(str, "dyson", "analytic engine", ("dyson", "moments")),
        "observable": Key(str, "sz", "observable", ("sx", "sy", "sz")),
        "m": Key(int, 2, "power of the renewal average (dyson)"),
        "order": Key(int, 10, "truncation order K (moments)"),
        "moment_unraveling": Key(str, "poisson", "noise type of the moment hierarchy", ("poisson", "wiener")),
    },
    "steering": {
        "efficiencies": Key(_floats, [1.0, 0.8, 0.6], "direct-detection efficiencies"),
    },
    "g2": {
        "input_a": Key(str, "", "timestamp file of detector A (empty: synthetic data)"),
        "input_b": Key(str, "", "timestamp file of detector B"),
        "t_int": Key(float, 2e5, "integration time of synthetic data"),
        "detector_efficiency": Key(float, 0.5, "efficiency of the synthetic detector chain"),
        "snr_det": Key(float, 18.0, "signal to dark-count ratio of the synthetic detectors"),
        "bin_width": Key(float, 0.05, "histogram bin width"),
        "tau_max": Key(float, 50.0, "largest |tau| of the estimate"),
        "fit_tau_max": Key(float, 8.0, "largest |tau| used by the fit"),
        "snr_window": Key(_floats, [20.0, 50.0], "|tau| window of the measured SNR"),
        "guess_rabi_half": Key(float, 3.0, "initial Omega"),
        "guess_detuning": Key(float, -3.0, "initial Delta (fixes the sign)"),
        "guess_snr_det": Key(float, 10.0, "initial SNR_det"),
        "fixed": Key(_words, ["b=0", "c=0"], "fixed fit parameters as name=value"),
        "write_streams": Key(_bool, True, "write the synthetic streams"),
    },
}

GLOBAL_FLAGS = {"seed", "threads", "out_dir", "config", "command", "verbose"}


def _schema(command: str) -> dict[str, Key]:
    return {**COMMON, **SECTIONS[command]}


def _read_config_file(path: str, command: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {path}")
    text = p.read_text()
    if p.suffix == ".json":
        data = json.loads(text)
        if data.get("command") not in (None, command):
            raise ConfigError("command", f"manifest is for {data['command']!r}, not {command!r}")
        values = data.get("config", {k: v for k, v in data.items() if k != "command"})
        return {k: v for k, v in values.items() if v is not None}
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(p))
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from exc
    unknown = [s for s in parser.sections() if s != "common" and s not in SECTIONS]
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    raw: dict[str, str] = {}
    for section in ("common", command):
        if parser.has_section(section):
            raw.update(parser.items(section))
    return raw


def resolve_config(command: str, file_values: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge defaults, file values and overrides; parse and validate every key."""
    schema = _schema(command)
    cfg = {k: spec.default for k, spec in schema.items()}
    for source in (file_values, overrides):
        for key, value in source.items():
            if key not in schema:
                raise ConfigError(key, f"unknown key for {command!r}")
            spec = schema[key]
            try:
                parsed = spec.parse(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot parse {value!r} ({exc})") from exc
            if spec.choices and parsed not in spec.choices:
                raise ConfigError(key, f"must be one of {', '.join(spec.choices)}")
            cfg[key] = parsed
    if cfg["rabi_half"] is not None and cfg["drive_strength"] is not None:
        if not math.isclose(cfg["rabi_half"] * 2 * math.sqrt(2), cfg["drive_strength"], rel_tol=1e-12):
            raise ConfigError("drive_strength", "conflicts with rabi_half")
    if cfg["rabi_half"] is None:
        if cfg["drive_strength"] is None:
            raise ConfigError("rabi_half", "set rabi_half or drive_strength")
        cfg["rabi_half"] = cfg["drive_strength"] / (2 * math.sqrt(2))
    cfg["drive_strength"] = cfg["rabi_half"] * 2 * math.sqrt(2)
    return cfg


def system_params(cfg: dict[str, Any]) -> SystemParams:
    fields = ("rabi_half", "detuning", "efficiency", "thermal", "lo_phase", "het_detuning", "dt", "t_max", "sample_dt", "n_traj", "seed")
    try:
        return SystemParams(**{k: cfg[k] for k in fields})
    except ValueError as exc:
        text = str(exc)
        key = next((k for k in fields if text.startswith(k)), None) or next((k for k in fields if k.replace("_", " ") in text), "params")
        raise ConfigError(key, text) from exc


# ---------------------------------------------------------------------------
# Output bookkeeping


class Outputs:
    """Output directory with deterministic header comments and checksums."""

    def __init__(self, root: Path, command: str, cfg: dict[str, Any]):
        self.root = root
        self.command = command
        self.cfg = cfg
        self.files: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def header(self, *lines: str) -> str:
        return "\n".join([f"unravel {__version__} {self.command}; seed={self.cfg['seed']}; units: gamma*t", *lines])

    def csv(self, name: str, columns: dict[str, np.ndarray], *lines: str) -> None:
        write_curve_csv(self.path(name), columns, self.header(*lines))

    def text(self, name: str, content: str) -> None:
        self.path(name).write_text(content)

    def manifest(self, threads: int, wall: float, extra: dict[str, Any]) -> Path:
        checksums = {}
        for p in sorted(set(self.files)):
            checksums[p.relative_to(self.root).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
        data = {
            "command": self.command,
            "version": __version__,
            "seed": self.cfg["seed"],
            "config": self.cfg,
            "outputs": checksums,
            "threads": threads,
            "wall_clock_s": round(wall, 3),
            **extra,
        }
        path = self.root / "manifest.json"
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Subcommands


def _simulate_ensemble(cfg: dict[str, Any], params: SystemParams, threads: int) -> Ensemble:
    scheme = cfg["unraveling"]
    if scheme == "direct":
        if not params.is_ideal:
            key = "efficiency" if params.efficiency != 1.0 else "thermal"
            raise ConfigError(key, "direct needs ideal detection; use unraveling = direct-imperfect")
        return simulate_pure_jump_ensemble(params, threads=threads)
    if scheme == "direct-imperfect":
        return simulate_mixed_jump_ensemble(params, threads=threads)
    if params.efficiency != 1.0:
        raise ConfigError("efficiency", f"{scheme} is exposed for efficiency = 1 only")
    if params.thermal != 0.0:
        raise ConfigError("thermal", f"{scheme} is exposed for thermal = 0 only")
    config = DiffusiveConfig(scheme, theta=params.lo_phase, explicit_lo=cfg["explicit_lo"])
    return simulate_diffusive_ensemble(params, config, threads=threads)


def cmd_simulate(cfg: dict[str, Any], out: Outputs, threads: int) -> dict[str, Any]:
    params = system_params(cfg)
    if params.n_traj < 2:
        raise ConfigError("n_traj", "at least two trajectories are needed for ensemble statistics")
    ens = _simulate_ensemble(cfg, params, threads)
    obs = cfg["observable"]
    curve = qtav(ens, obs)
    columns = {
        "t": curve.t_grid,
        "mean": curve.mean,
        "qtav": curve.qtav,
        "stderr_mean": curve.stderr_mean,
        "stderr_qtav": curve.stderr_qtav,
    }
    if obs == "sz":
        columns["me_inversion"] = analytic_inversion(params, curve.t_grid)
    out.csv("ensemble.csv", columns, f"unraveling={cfg['unraveling']}; observable={obs}; n_traj={curve.n_traj}")
    for k in range(min(cfg["trajectory_files"], len(ens))):
        b = ens.bloch[k]
        out.csv(f"trajectories/traj_{k:06d}.csv", {"t": ens.t_grid, "sx": b[:, 0], "sy": b[:, 1], "sz": b[:, 2]}, f"trajectory={k}")
    n_clicks = 0
    if ens.clicks is not None:
        n_clicks = int(sum(len(c) for c in ens.clicks))
        if cfg["click_files"]:
            for k, rec in enumerate(ens.clicks):
                rec.write(out.path(f"clicks/traj_{k:06d}.txt"), params.seed, k)
    elif cfg["click_files"]:
        log.warning("click_files ignored: %s records no clicks", cfg["unraveling"])
    log.info("simulated %d %s trajectories (%d clicks)", len(ens), cfg["unraveling"], n_clicks)
    return {"n_traj": len(ens), "n_clicks": n_clicks}


def _renewal_grid(params: SystemParams) -> tuple[np.ndarray, int]:
    """Fine grid for the renewal route whose every ``stride``-th point is a sample time."""
    limit = 1e-3 if params.rabi_half == 0 else min(1e-3, 0.02 / params.rabi_half)
    stride = math.ceil(params.sample_dt / limit - 1e-9)
    n = int(round(params.t_max / params.sample_dt)) * stride
    return np.arange(n + 1) * (params.sample_dt / stride), stride


def _oracle_dyson(cfg: dict[str, Any], params: SystemParams, out: Outputs) -> dict[str, Any]:
    if not params.is_ideal:
        raise ConfigError("efficiency", "the renewal engine needs ideal detection (efficiency 1, thermal 0)")
    if cfg["m"] < 1:
        raise ConfigError("m", "must be a positive integer")
    obs = cfg["observable"]
    fine, stride = _renewal_grid(params)
    renewal = renewal_density(params, fine)
    mean = renewal_average(params, obs, 1, renewal=renewal)[::stride]
    second = renewal_average(params, obs, 2, renewal=renewal)[::stride]
    t = fine[::stride]
    columns = {"t": t, "mean": mean, "second": second, "qtav": second - mean**2}
    if cfg["m"] > 2:
        columns[f"power_{cfg['m']}"] = renewal_average(params, obs, cfg["m"], renewal=renewal)[::stride]
    columns["renewal_density"] = renewal.h_ren[::stride]
    lines = [f"engine=dyson; observable={obs}; m={cfg['m']}; grid step={fine[1]:.6g}; residual={renewal.residual():.3e}"]
    if obs == "sz" and params.detuning == 0.0:
        if params.drive_strength >= 10.0:
            columns["asymptote_strong"] = asymptotic_var_strong(params, t)
        elif params.rabi_half <= 0.1:
            columns["asymptote_weak"] = asymptotic_var_weak(params, t)
    out.csv("dyson.csv", columns, *lines)
    log.info("renewal route on %d points, residual %.2e", len(fine), renewal.residual())
    return {"renewal_points": len(fine), "renewal_residual": renewal.residual()}


def _oracle_moments(cfg: dict[str, Any], params: SystemParams, out: Outputs) -> dict[str, Any]:
    if cfg["order"] < 2:
        raise ConfigError("order", "must be at least 2")
    if not params.is_ideal:
        raise ConfigError("efficiency", "the moment hierarchy needs ideal detection (efficiency 1, thermal 0)")
    system = build_system(params, cfg["moment_unraveling"], cfg["order"])
    block_error = float(np.max(np.abs(system.bloch_block() - bloch_generator(params))))
    log.info("moment system: order %d, dimension %d", system.order, system.dimension)
    log.info("degree-1 block vs Bloch generator: max error %.2e (%s)", block_error, "ok" if block_error < 1e-12 else "MISMATCH")
    if cfg["moment_unraveling"] == "poisson":
        log.info("max polynomial-division remainder %.2e", system.max_remainder)
    sol = integrate(system, params.sample_grid())
    if sol.truncation_warning:
        log.warning("top-degree moments exceed the pure-state bound; truncation error may be visible")
    curve = qtav_from_moments(sol, cfg["observable"])
    out.csv(
        "moments.csv",
        {"t": curve.t_grid, "mean": curve.mean, "second": curve.m_moments[2], "qtav": curve.qtav},
        f"engine=moments; unraveling={cfg['moment_unraveling']}; order={system.order}; dimension={system.dimension}",
    )
    ev = spectrum(system)
    out.csv("spectrum.csv", {"re": ev.real, "im": ev.imag}, f"eigenvalues of the order-{system.order} moment generator")
    return {
        "moment_dimension": system.dimension,
        "moment_order": system.order,
        "bloch_block_error": block_error,
        "max_remainder": system.max_remainder,
        "max_imaginary": system.max_imaginary,
        "truncation_warning": sol.truncation_warning,
    }


def cmd_oracle(cfg: dict[str, Any], out: Outputs, threads: int) -> dict[str, Any]:
    params = system_params(cfg)
    if cfg["engine"] == "dyson":
        return _oracle_dyson(cfg, params, out)
    return _oracle_moments(cfg, params, out)


def cmd_steering(cfg: dict[str, Any], out: Outputs, threads: int) -> dict[str, Any]:
    params = system_params(cfg).with_(thermal=0.0, efficiency=1.0)
    if cfg["thermal"] != 0.0:
        raise ConfigError("thermal", "steering runs in vacuum (thermal = 0)")
    etas = cfg["efficiencies"]
    if not etas or any(not 0.0 < e <= 1.0 for e in etas):
        raise ConfigError("efficiencies", "values must lie in (0, 1]")
    het = simulate_diffusive_ensemble(params, DiffusiveConfig("heterodyne"), threads=threads)
    summary = []
    for eta in etas:
        if eta >= 1.0:
            direct = simulate_pure_jump_ensemble(params, threads=threads)
        else:
            direct = simulate_mixed_jump_ensemble(params.with_(efficiency=eta), threads=threads)
        curve = steering_value(direct, het, params.rabi_half)
        out.csv(
            f"steering_eta{eta:.3f}.csv",
            {"t": curve.t_grid, "S": curve.s, "f1_mean": curve.f1_mean, "f2_mean": curve.f2_mean, "stderr": curve.stderr, "envelope": curve.envelope},
            f"direct efficiency={eta!r}; heterodyne efficiency=1",
        )
        summary.append(curve.steady_envelope())
        log.info("eta = %g: steady envelope of S = %.4f", eta, summary[-1])
    out.csv("steering_summary.csv", {"efficiency": np.array(etas), "steady_envelope": np.array(summary)}, "steady envelope: mean over the final third")
    return {"n_traj": params.n_traj, "steady_envelope": dict(zip(map(str, etas), summary))}


def _fixed_values(words: list[str]) -> dict[str, float]:
    fixed = {}
    for w in words:
        name, sep, value = w.partition("=")
        if not sep:
            raise ConfigError("fixed", f"expected name=value, got {w!r}")
        try:
            fixed[name.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError("fixed", f"bad value in {w!r}") from exc
    return fixed


def _read_series(key: str, path: str) -> TimestampSeries:
    if not Path(path).is_file():
        raise ConfigError(key, f"file not found: {path}")
    try:
        return TimestampSeries.read(path).in_gamma_units()
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc


def cmd_g2(cfg: dict[str, Any], out: Outputs, threads: int) -> dict[str, Any]:
    if bool(cfg["input_a"]) != bool(cfg["input_b"]):
        raise ConfigError("input_b" if cfg["input_a"] else "input_a", "give both input files or neither")
    extra: dict[str, Any] = {}
    if cfg["input_a"]:
        a = _read_series("input_a", cfg["input_a"])
        b = _read_series("input_b", cfg["input_b"])
    else:
        params = system_params(cfg)
        try:
            setup = DetectorSetup(cfg["detector_efficiency"], cfg["snr_det"])
        except ValueError as exc:
            raise ConfigError("detector_efficiency" if "efficiency" in str(exc) else "snr_det", str(exc)) from exc
        if cfg["t_int"] <= 0:
            raise ConfigError("t_int", "must be > 0")
        a, b = synthetic_streams(params, setup, cfg["t_int"], params.seed)
        if cfg["write_streams"]:
            a.write(out.path("streams/A.txt"))
            out.files.append(out.root / "streams/A.txt.json")
            b.write(out.path("streams/B.txt"))
            out.files.append(out.root / "streams/B.txt.json")
        extra["synthetic"] = True
    if cfg["bin_width"] <= 0:
        raise ConfigError("bin_width", "must be > 0")
    if cfg["tau_max"] < cfg["bin_width"]:
        raise ConfigError("tau_max", "must be at least one bin width")
    est = estimate_g2(a, b, cfg["bin_width"], cfg["tau_max"])
    est.to_csv(out.path("g2.csv"), out.header(f"bin_width={cfg['bin_width']!r}; counts A={len(a)}, B={len(b)}"))
    fixed = _fixed_values(cfg["fixed"])
    guess = {"rabi_half": cfg["guess_rabi_half"], "detuning": cfg["guess_detuning"], "a": 1.0, "b": 0.0, "c": 0.0, "snr_det": cfg["guess_snr_det"]}
    unknown = set(fixed) - set(guess)
    if unknown:
        raise ConfigError("fixed", f"unknown parameter {sorted(unknown)[0]!r}")
    try:
        fit = fit_g2(est.select(-cfg["fit_tau_max"], cfg["fit_tau_max"]), guess, fixed)
    except ValueError as exc:
        raise ConfigError("fit_tau_max", str(exc)) from exc
    out.text("fit.txt", fit.report() + "\n")
    out.text("fit.json", fit.to_json() + "\n")
    window = tuple(cfg["snr_window"])
    if len(window) != 2 or window[0] >= window[1]:
        raise ConfigError("snr_window", "expected two increasing values")
    if window[1] <= cfg["tau_max"]:
        extra["measured_snr"] = measured_snr(est, window)
        log.info("measured SNR in |tau| in %s: %.3f", window, extra["measured_snr"])
    log.info("fit: Omega = %.4f +- %.4f, Delta = %.4f +- %.4f", fit.rabi_half, fit.stderr["rabi_half"], fit.detuning, fit.stderr["detuning"])
    extra.update({"clicks_a": len(a), "clicks_b": len(b), "reduced_chi2": fit.reduced_chi2})
    return extra


COMMANDS = {"simulate": cmd_simulate, "oracle": cmd_oracle, "steering": cmd_steering, "g2": cmd_g2}


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unravel", description="Quantum-trajectory unravelings of a driven two-level emitter.")
    parser.add_argument("--version", action="version", version=f"unravel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline", argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="INI file (sections [common] and [%s]) or a manifest.json" % name)
        p.add_argument("--seed", type=str, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
        p.add_argument("--out-dir", default="unravel_out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", default=False, help="debug logging")
        for key, spec in _schema(name).items():
            if key == "seed":
                continue
            extra = f" (one of {', '.join(spec.choices)})" if spec.choices else ""
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="VALUE", help=spec.help + extra)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args["command"]
    logging.basicConfig(level=logging.DEBUG if args["verbose"] else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = {k: v for k, v in args.items() if k not in GLOBAL_FLAGS}
    if "seed" in args:
        overrides["seed"] = args["seed"]
    threads = args["threads"]
    start = time.perf_counter()
    try:
        if threads < 1:
            raise ConfigError("threads", "must be >= 1")
        file_values = _read_config_file(args["config"], command) if args.get("config") else {}
        cfg = resolve_config(command, file_values, overrides)
        out = Outputs(Path(args["out_dir"]), command, cfg)
        extra = COMMANDS[command](cfg, out, threads)
        manifest = out.manifest(threads, time.perf_counter() - start, extra)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    log.info("wrote %d files and %s", len(set(out.files)), manifest)
    return EXIT_OK


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
