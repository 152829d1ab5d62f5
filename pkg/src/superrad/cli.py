"""Command-line entry point.

    superrad --mode simulate --config nd3.json --out-dir runs/nd3
    superrad --mode fit --input runs/nd3/trace.csv --out-dir runs/nd3
    superrad --mode compare --input runs/nd3/trace.csv --out-dir runs/nd3
    superrad --mode g2 --config nd4.json --out-dir runs/g2
    superrad --mode dd-estimate --out-dir runs/dd

The config is JSON; every section is optional and flags override it. Units
follow the file boundary: ns, ps, MHz (ordinary frequency) and nm. Exit
codes: 0 success, 2 invalid input, 3 fit did not converge, 4 I/O error.
"""
from __future__ import annotations

import argparse
import enum
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .coherence import ensemble_g2_time_integrated, g2_zero_ensemble, g2_zero_gaussian
from .ensemble import DEFAULT_CENTRE, DEFAULT_SPREAD, domain_ensemble
from .errors import CapabilityError, DomainError, FitError, ValidationError
from .fitting import (
    BULK_ISC_0,
    BULK_ISC_1,
    FitConfig,
    Loss,
    compare_models,
    fit_superradiant,
    lifetime_1e,
    simulate_trace,
    uniform_edges,
)
from .ladder import ALL_UP, MAX_SPINS, MIXED, RateParams
from .physics import BULK_GAMMA, DipoleGeometry, SeparationConvention, dipole_dipole_strength, isc_lifetime_ratio, mean_separation
from .propagate import IrfSpec
from .samples import reference_sample
from .units import mhz_to_rate, nm_to_m, ns_to_s, ps_to_s, rate_to_mhz

log = logging.getLogger("superrad")

EXIT_OK, EXIT_INVALID, EXIT_FIT, EXIT_IO = 0, 2, 3, 4


class Mode(enum.Enum):
    SIMULATE = "simulate"
    FIT = "fit"
    G2 = "g2"
    COMPARE = "compare"
    DD_ESTIMATE = "dd-estimate"


class ConfigError(ValidationError):
    """Invalid run configuration; the message starts with the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------- config parsing


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(name, "must be an object")
    return value


def _unknown(section: dict, allowed, path: str):
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


def _num(section: dict, key: str, path: str, default=None, lo=None, hi=None, strict_lo=False, integer=False):
    value = section.get(key, default)
    where = f"{path}.{key}" if path else key
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(where, "must be finite")
    if integer:
        if int(value) != value:
            raise ConfigError(where, f"expected an integer, got {value!r}")
        value = int(value)
    if lo is not None and (value <= lo if strict_lo else value < lo):
        raise ConfigError(where, f"must be {'>' if strict_lo else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(where, f"must be <= {hi}, got {value!r}")
    return value


def _pair(section: dict, key: str, path: str, default=None, lo=0.0):
    value = section.get(key, default)
    where = f"{path}.{key}"
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(where, "expected a two-element list")
    a = _num({"0": value[0]}, "0", where, lo=lo)
    b = _num({"1": value[1]}, "1", where, lo=lo)
    if not a < b:
        raise ConfigError(where, "first element must be smaller than the second")
    return (a, b)


def _numbers(section: dict, key: str, path: str, default):
    value = section.get(key, default)
    where = f"{path}.{key}"
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(where, "expected a non-empty list of numbers")
    return [_num({str(k): v}, str(k), where, lo=0.0, strict_lo=True) for k, v in enumerate(value)]


@dataclass
class RunConfig:
    """Validated run description, in SI units with angular rates."""

    mode: Mode
    seed: int | None = None
    out_dir: Path = Path("superrad-out")
    input: Path | None = None
    # physics
    gamma: float = mhz_to_rate(3.3)
    gamma_isc_0: float = BULK_ISC_0
    gamma_isc_1: float = BULK_ISC_1
    gamma_d_0: float = mhz_to_rate(39.0)
    gamma_d_1: float = mhz_to_rate(420.0)
    # ensemble
    n_max: int = 10
    p0: float = 0.5
    centre: float = DEFAULT_CENTRE
    spread: float = DEFAULT_SPREAD
    initial: str = "mixed"
    # histogram and detector
    t_start: float = -2e-9
    t_stop: float = 200e-9
    bin_width: float = 16e-12
    irf_fwhm: float = 110e-12
    peak_counts: float = 1e5
    background: float = 0.0
    # fit
    fit: FitConfig = field(default_factory=FitConfig)
    t0: float = 0.0
    # g2
    taus: tuple = (0.1e-9, 0.5e-9, 1e-9, 2e-9, 3e-9, 5e-9, 10e-9, 20e-9)
    g2_means: tuple = tuple(float(x) for x in range(1, 101))
    # dipole-dipole estimate
    separation: float = 10e-9
    density: float | None = None
    sample: str | None = None

    def rate_params(self) -> RateParams:
        return RateParams(self.gamma, self.gamma_isc_0, self.gamma_isc_1, self.gamma_d_0, self.gamma_d_1)

    def ensemble(self):
        return domain_ensemble(self.n_max, self.p0, self.centre, self.spread)

    def edges(self) -> np.ndarray:
        return uniform_edges(self.t_start, self.t_stop, self.bin_width)

    def irf(self) -> IrfSpec:
        return IrfSpec.gaussian(self.irf_fwhm)


TOP_LEVEL = ("mode", "seed", "sample", "params", "ensemble", "grid", "irf", "simulate", "fit", "g2", "dd", "output", "input")


def parse_config(raw: dict, mode: str | None = None) -> RunConfig:
    """Validate a config mapping; every problem is reported with its field path."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _unknown(raw, TOP_LEVEL, "")
    mode_value = mode or raw.get("mode")
    if mode_value is None:
        raise ConfigError("mode", "missing")
    try:
        cfg = RunConfig(Mode(str(mode_value).lower().replace("_", "-")))
    except ValueError:
        raise ConfigError("mode", f"unknown mode {mode_value!r}; choose from {[m.value for m in Mode]}") from None

    if "seed" in raw:
        cfg.seed = _num(raw, "seed", "", lo=0, integer=True)
    if "sample" in raw:
        if not isinstance(raw["sample"], str):
            raise ConfigError("sample", "expected a sample name such as 'ND3'")
        try:
            s = reference_sample(raw["sample"])
        except ValidationError as exc:
            raise ConfigError("sample", str(exc)) from None
        cfg.sample = s.name
        cfg.gamma = mhz_to_rate(s.gamma_mhz)
        cfg.gamma_d_0, cfg.gamma_d_1 = mhz_to_rate(s.gamma_d_0_mhz), mhz_to_rate(s.gamma_d_1_mhz)
        cfg.n_max, cfg.p0 = s.n_max, s.p0

    p = _section(raw, "params")
    _unknown(p, ("gamma_mhz", "isc_0_mhz", "isc_1_mhz", "dephasing_0_mhz", "dephasing_1_mhz"), "params")
    if "gamma_mhz" in p:
        cfg.gamma = mhz_to_rate(_num(p, "gamma_mhz", "params", lo=0, strict_lo=True))
    for key, attr in (("isc_0_mhz", "gamma_isc_0"), ("isc_1_mhz", "gamma_isc_1"), ("dephasing_0_mhz", "gamma_d_0"), ("dephasing_1_mhz", "gamma_d_1")):
        if key in p:
            setattr(cfg, attr, mhz_to_rate(_num(p, key, "params", lo=0)))

    e = _section(raw, "ensemble")
    _unknown(e, ("n_max", "p0", "centre", "spread", "initial"), "ensemble")
    cfg.n_max = _num(e, "n_max", "ensemble", cfg.n_max, lo=1, hi=MAX_SPINS, integer=True)
    cfg.p0 = _num(e, "p0", "ensemble", cfg.p0, lo=0, hi=1)
    cfg.centre = _num(e, "centre", "ensemble", cfg.centre, lo=0, hi=1, strict_lo=True)
    cfg.spread = _num(e, "spread", "ensemble", cfg.spread, lo=0, strict_lo=True)
    cfg.initial = e.get("initial", cfg.initial)
    if cfg.initial not in ("mixed", "allup"):
        raise ConfigError("ensemble.initial", "must be 'mixed' or 'allup'")

    g = _section(raw, "grid")
    _unknown(g, ("start_ns", "stop_ns", "bin_ps"), "grid")
    cfg.t_start = ns_to_s(_num(g, "start_ns", "grid", cfg.t_start * 1e9))
    cfg.t_stop = ns_to_s(_num(g, "stop_ns", "grid", cfg.t_stop * 1e9))
    cfg.bin_width = ps_to_s(_num(g, "bin_ps", "grid", cfg.bin_width * 1e12, lo=0, strict_lo=True))
    if not cfg.t_stop > cfg.t_start:
        raise ConfigError("grid.stop_ns", "must exceed grid.start_ns")
    n_bins = (cfg.t_stop - cfg.t_start) / cfg.bin_width
    if not 100 <= n_bins <= 10**6:
        raise ConfigError("grid.bin_ps", f"gives {n_bins:.0f} bins; need 100 to 1e6")

    i = _section(raw, "irf")
    _unknown(i, ("fwhm_ps",), "irf")
    cfg.irf_fwhm = ps_to_s(_num(i, "fwhm_ps", "irf", cfg.irf_fwhm * 1e12, lo=0))

    s = _section(raw, "simulate")
    _unknown(s, ("peak_counts", "background"), "simulate")
    cfg.peak_counts = _num(s, "peak_counts", "simulate", cfg.peak_counts, lo=0, strict_lo=True)
    cfg.background = _num(s, "background", "simulate", cfg.background, lo=0)

    f = _section(raw, "fit")
    _unknown(f, ("n_range", "loss", "dephasing_bounds_mhz", "tail_window_ns", "t0_ns", "gamma_mhz"), "fit")
    n_range = f.get("n_range", [1, 60])
    if not isinstance(n_range, (list, tuple)) or len(n_range) != 2:
        raise ConfigError("fit.n_range", "expected [lo, hi]")
    lo = _num({"0": n_range[0]}, "0", "fit.n_range", lo=1, hi=MAX_SPINS, integer=True)
    hi = _num({"1": n_range[1]}, "1", "fit.n_range", lo=1, hi=MAX_SPINS, integer=True)
    if lo > hi:
        raise ConfigError("fit.n_range", "lo must not exceed hi")
    try:
        loss = Loss(f.get("loss", Loss.POISSON_NLL.value))
    except ValueError:
        raise ConfigError("fit.loss", f"choose from {[x.value for x in Loss]}") from None
    d_lo, d_hi = _pair(f, "dephasing_bounds_mhz", "fit", (1.0, 3000.0), lo=1e-6)
    window = _pair(f, "tail_window_ns", "fit")
    fixed = {}
    if "gamma_mhz" in f:
        fixed["gamma"] = mhz_to_rate(_num(f, "gamma_mhz", "fit", lo=0, strict_lo=True))
    cfg.t0 = ns_to_s(_num(f, "t0_ns", "fit", 0.0))
    cfg.fit = FitConfig(
        n_range=(lo, hi),
        dephasing_bounds={k: (mhz_to_rate(d_lo), mhz_to_rate(d_hi)) for k in (0, 1)},
        tail_window=None if window is None else (ns_to_s(window[0]), ns_to_s(window[1])),
        loss=loss,
        fixed=fixed,
        gamma_isc_0=cfg.gamma_isc_0,
        gamma_isc_1=cfg.gamma_isc_1,
        seed=cfg.seed or 0,
    )

    q = _section(raw, "g2")
    _unknown(q, ("taus_ns", "mean_sizes"), "g2")
    if "taus_ns" in q:
        cfg.taus = tuple(ns_to_s(t) for t in _numbers(q, "taus_ns", "g2", None))
    if "mean_sizes" in q:
        cfg.g2_means = tuple(_numbers(q, "mean_sizes", "g2", None))
        if max(cfg.g2_means) > MAX_SPINS:
            raise ConfigError("g2.mean_sizes", f"values must not exceed {MAX_SPINS}")

    d = _section(raw, "dd")
    _unknown(d, ("separation_nm", "density_m3"), "dd")
    cfg.separation = nm_to_m(_num(d, "separation_nm", "dd", cfg.separation * 1e9, lo=0, strict_lo=True))
    cfg.density = _num(d, "density_m3", "dd", None, lo=0, strict_lo=True)

    o = _section(raw, "output")
    _unknown(o, ("out_dir",), "output")
    if "out_dir" in o:
        cfg.out_dir = Path(o["out_dir"])
    if "input" in raw:
        cfg.input = Path(raw["input"])
    return cfg


def _override(raw: dict, args) -> dict:
    """Fold command-line flags into the raw config so one validator sees everything."""
    raw = json.loads(json.dumps(raw))
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.n_max is not None:
        raw.setdefault("ensemble", {})["n_max"] = args.n_max
        if args.mode in ("fit", "compare"):
            lo = raw.setdefault("fit", {}).get("n_range", [1, 60])[0]
            raw["fit"]["n_range"] = [min(lo, args.n_max), args.n_max]
    if args.gamma_mhz is not None:
        raw.setdefault("params", {})["gamma_mhz"] = args.gamma_mhz
        if args.mode in ("fit", "compare"):
            raw.setdefault("fit", {})["gamma_mhz"] = args.gamma_mhz
    if args.irf_ps is not None:
        raw.setdefault("irf", {})["fwhm_ps"] = args.irf_ps
    if args.out_dir is not None:
        raw.setdefault("output", {})["out_dir"] = args.out_dir
    if args.input is not None:
        raw["input"] = args.input
    return raw


def _check_paths(cfg: RunConfig):
    if cfg.mode in (Mode.FIT, Mode.COMPARE):
        if cfg.input is None:
            raise ConfigError("input", f"mode {cfg.mode.value} needs --input")
        if not cfg.input.is_file():
            raise FileNotFoundError(f"input file {cfg.input} not found")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")


# ---------------------------------------------------------------- modes


def _describe_trace(trace) -> dict:
    lt = lifetime_1e(trace)
    return {"source_id": trace.source_id, "bins": len(trace), "bin_ps": trace.dt * 1e12, "lifetime_1e_ns": lt * 1e9}


def run_simulate(cfg: RunConfig) -> dict:
    spec = ALL_UP if cfg.initial == "allup" else MIXED
    trace = simulate_trace(
        cfg.ensemble(),
        cfg.rate_params(),
        cfg.edges(),
        irf=cfg.irf(),
        peak_counts=cfg.peak_counts,
        background=cfg.background,
        seed=cfg.seed,
        spec=spec,
        source_id=cfg.sample or "synthetic",
    )
    io.write_decay_csv(trace, cfg.out_dir / "trace.csv")
    summary = _describe_trace(trace)
    io.plot_decay(cfg.out_dir / "decay", trace, lifetime=summary["lifetime_1e_ns"] * 1e-9, title=trace.source_id)
    io.write_kv(cfg.out_dir / "simulate.txt", summary)
    return summary


def _load_trace(cfg: RunConfig, irf_flag: bool):
    trace = io.ingest_decay_csv(cfg.input)
    if irf_flag:
        trace = replace(trace, irf=cfg.irf())
    return trace


def run_fit(cfg: RunConfig, irf_flag: bool = False) -> dict:
    trace = _load_trace(cfg, irf_flag)
    try:
        result = fit_superradiant(trace, cfg.fit, cfg.t0)
    except FitError as exc:
        if exc.best is not None:
            io.emit_results(exc.best, cfg.out_dir, "fit_unconverged", trace)
        raise
    io.emit_results(result, cfg.out_dir, "fit", trace)
    return _fit_summary(result)


def _fit_summary(result) -> dict:
    return {
        "n_max": result.n_max,
        "gamma_mhz": rate_to_mhz(result.gamma),
        "gamma_d_0_mhz": rate_to_mhz(result.gamma_d_0),
        "gamma_d_1_mhz": rate_to_mhz(result.gamma_d_1),
        "p0": result.p0,
        "residual": result.residual,
    }


def run_compare(cfg: RunConfig, irf_flag: bool = False) -> dict:
    trace = _load_trace(cfg, irf_flag)
    comparison = compare_models(trace, cfg.fit, cfg.t0)
    io.emit_results(comparison, cfg.out_dir, "compare", trace)
    if "superradiant" in comparison.results:
        io.emit_results(comparison.results["superradiant"], cfg.out_dir, "fit", trace, formats=("kv", "csv"))
    summary = {f"{k}.ls_ratio": v for k, v in comparison.ls_ratios().items()}
    summary.update({f"{k}.error": v for k, v in comparison.errors.items()})
    return summary


def run_g2(cfg: RunConfig) -> dict:
    ens = cfg.ensemble()
    means = np.asarray(cfg.g2_means)
    values = np.array([g2_zero_gaussian(m, m / 2.0) for m in means])
    io.plot_g2_vs_n(cfg.out_dir / "g2_vs_n", means, values)
    spec = ALL_UP if cfg.initial == "allup" else MIXED
    curve = ensemble_g2_time_integrated(ens, cfg.rate_params(), cfg.taus, spec)
    io.emit_results(curve, cfg.out_dir, "g2_tau")
    summary = {"g2_zero_ensemble": g2_zero_ensemble(ens)}
    summary.update({f"g2_tau_{t * 1e9:g}ns": v for t, v in zip(curve.delays, curve.values)})
    io.write_kv(cfg.out_dir / "g2.txt", summary)
    return summary


def run_dd(cfg: RunConfig) -> dict:
    separation = cfg.separation
    if cfg.density is not None:
        separation = mean_separation(cfg.density, SeparationConvention.WIGNER_SEITZ)
    v = dipole_dipole_strength(DipoleGeometry(separation, cfg.gamma))
    summary = {
        "separation_nm": separation * 1e9,
        "gamma_mhz": rate_to_mhz(cfg.gamma),
        "v_dd_mhz": rate_to_mhz(v),
        "v_dd_over_gamma": v / cfg.gamma,
        "isc_lifetime_ratio": isc_lifetime_ratio(cfg.gamma_isc_0 / BULK_GAMMA, cfg.gamma_isc_1 / BULK_GAMMA),
    }
    if cfg.density is not None:
        summary["cube_root_separation_nm"] = mean_separation(cfg.density, SeparationConvention.CUBE_ROOT) * 1e9
    io.write_kv(cfg.out_dir / "dd.txt", summary)
    return summary


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superrad", description="Collective emission in NV nanodiamond ensembles.")
    ap.add_argument("--mode", choices=[m.value for m in Mode], help="what to run (overrides the config)")
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--input", help="decay-trace CSV for fit and compare")
    ap.add_argument("--out-dir", help="directory for all output files")
    ap.add_argument("--seed", type=int, help="Poisson noise seed for simulate")
    ap.add_argument("--n-max", type=int, help="largest domain size (fit: upper end of the search)")
    ap.add_argument("--gamma-mhz", type=float, help="radiative rate gamma/2pi in MHz (fit: pins gamma)")
    ap.add_argument("--irf-ps", type=float, help="Gaussian IRF FWHM in ps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"{args.config}: line {exc.lineno}: {exc.msg}") from None
        if args.mode is None and "mode" not in raw:
            raise ConfigError("mode", "missing; pass --mode or set it in the config")
        cfg = parse_config(_override(raw, args), args.mode)
        _check_paths(cfg)
        runners = {
            Mode.SIMULATE: lambda: run_simulate(cfg),
            Mode.FIT: lambda: run_fit(cfg, args.irf_ps is not None),
            Mode.COMPARE: lambda: run_compare(cfg, args.irf_ps is not None),
            Mode.G2: lambda: run_g2(cfg),
            Mode.DD_ESTIMATE: lambda: run_dd(cfg),
        }
        summary = runners[cfg.mode]()
    except FitError as exc:
        print(f"error: fit did not converge: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ValidationError, DomainError, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for key, value in summary.items():
        print(f"{key}={value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
