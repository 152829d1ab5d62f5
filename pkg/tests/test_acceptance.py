"""One test per acceptance criterion, at the stated tolerances.

Measured values are printed in the "measured values" section of the pytest
summary.
"""
import json
import time

import numpy as np
import pytest

from superrad.cli import main
from superrad.coherence import (
    ensemble_g2_time_integrated,
    g2_zero_allup,
    g2_zero_from_state,
    g2_zero_gaussian,
    g2_zero_mixed,
)
from superrad.fitting import BULK_ISC_0, BULK_ISC_1, FitConfig, compare_models, fit_superradiant, lifetime_1e, simulate_trace, uniform_edges
from superrad.io import read_kv
from superrad.ladder import (
    ALL_UP,
    MIXED,
    InitialKind,
    InitialStateSpec,
    RateParams,
    build_index,
    build_rate_matrix,
    fluorescence_weights,
    initial_state,
)
from superrad.oracle import lindblad_evolve_exact
from superrad.physics import BULK_GAMMA, DipoleGeometry, dipole_dipole_strength, isc_lifetime_ratio
from superrad.propagate import evolve, observe, peak_rate, scaling_exponent
from superrad.samples import REFERENCE_SAMPLES
from superrad.units import mhz_to_rate, rate_to_mhz

MHZ = mhz_to_rate(1.0)
EDGES = uniform_edges(-2e-9, 200e-9, 16e-12)


def _check_fit(fit: dict, s, report, tag):
    """``fit`` holds ``n_max, gamma, gamma_d_0, gamma_d_1, p0`` with angular rates."""
    n = int(fit["n_max"])
    g, d0, d1 = (rate_to_mhz(fit[k]) for k in ("gamma", "gamma_d_0", "gamma_d_1"))
    report(
        tag,
        f"{s.name}: N={n} (true {s.n_max}), gamma={g:.3f} MHz (true {s.gamma_mhz}), gd0={d0:.1f} "
        f"(true {s.gamma_d_0_mhz}), gd1={d1:.1f} (true {s.gamma_d_1_mhz}), p0={fit['p0']:.3f} (true {s.p0})",
    )
    assert abs(n - s.n_max) <= 2
    assert g == pytest.approx(s.gamma_mhz, rel=0.10)
    assert d0 == pytest.approx(s.gamma_d_0_mhz, rel=0.30)
    assert d1 == pytest.approx(s.gamma_d_1_mhz, rel=0.30)
    assert abs(fit["p0"] - s.p0) <= 0.1


def test_criterion_01_conservation(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_p = worst_x = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 21))
        params = RateParams(
            mhz_to_rate(rng.uniform(1, 20)),
            mhz_to_rate(rng.uniform(0, 20)),
            mhz_to_rate(rng.uniform(0, 20)),
            mhz_to_rate(10 ** rng.uniform(-1, 3.5)),
            mhz_to_rate(10 ** rng.uniform(-1, 3.5)),
        )
        sigma = int(rng.integers(0, 2))
        idx = build_index(n)
        spec = [MIXED, ALL_UP][int(rng.integers(0, 2))]
        s0 = initial_state(idx, spec, sigma)
        horizon = 10.0 / params.tail_rate(sigma)
        traj = evolve(build_rate_matrix(idx, params, sigma), s0, np.linspace(0, horizon, 25))
        p0, x0 = s0.total_probability(), s0.excitation_count()
        for i in range(len(traj)):
            s = traj.state(i)
            worst_p = max(worst_p, abs(s.total_probability() - p0))
            worst_x = max(worst_x, abs(s.excitation_count() - x0) / x0)
    elapsed = time.perf_counter() - start
    report(1, f"max probability drift {worst_p:.2e}, max relative excitation drift {worst_x:.2e}, {elapsed:.1f} s")
    assert worst_p < 1e-8 and worst_x < 1e-8
    assert elapsed < 60


@pytest.mark.parametrize("gd_mhz", [0.0, 1.0, 100.0, 1e4])
def test_criterion_02_single_spin(gd_mhz, report):
    for sigma in (0, 1):
        params = RateParams(5 * MHZ, BULK_ISC_0, BULK_ISC_1, gd_mhz * MHZ, gd_mhz * MHZ)
        k = params.tail_rate(sigma)
        idx = build_index(1)
        t = np.linspace(0, 20 / k, 200)
        f = observe(build_rate_matrix(idx, params, sigma), initial_state(idx, ALL_UP, sigma).vector(), fluorescence_weights(idx, params), t)[:, 0]
        shape = f * k / params.gamma  # unit-area pulse shape
        want = k * np.exp(-k * t)
        rel = np.max(np.abs(shape - want) / want)
        assert rel < 1e-9
    report(2, f"gamma_d={gd_mhz:g} MHz: max relative deviation {rel:.1e}")


@pytest.mark.parametrize("n", [2, 3, 4])
def test_criterion_03_oracle_equivalence(n, report):
    params = RateParams(5 * MHZ)
    idx = build_index(n)
    rng = np.random.default_rng(n)
    w = rng.random(n + 1)
    specs = [ALL_UP, MIXED, InitialStateSpec(InitialKind.CUSTOM, tuple(w / w.sum()))]
    times = np.linspace(0, 200e-9, 41)
    worst = 0.0
    for spec in specs:
        s = initial_state(idx, spec)
        exact = lindblad_evolve_exact(n, params, s, times)
        ladder = evolve(build_rate_matrix(idx, params), s, times)
        worst = max(worst, np.abs(exact.populations - ladder.populations).max())
    if n == 2:
        g = params.gamma
        ladder = evolve(build_rate_matrix(idx, params), initial_state(idx, ALL_UP), times)
        analytic = 2 * g * times * np.exp(-2 * g * times)
        np.testing.assert_allclose(ladder.populations[:, idx[1, 0]], analytic, rtol=0, atol=1e-9)
    report(3, f"N={n}: max population difference {worst:.1e}")
    assert worst < 1e-9


def test_criterion_04_superradiant_scaling(report):
    params = RateParams(5 * MHZ)
    ns = range(4, 41)
    slope = scaling_exponent(ns, params)
    delays = [peak_rate(n, params)[1] for n in ns]
    report(4, f"peak exponent {slope:.3f}; smallest burst delay {min(delays) * 1e9:.3f} ns")
    assert slope == pytest.approx(2.0, abs=0.2)
    assert min(delays) > 0


def test_criterion_05_g2_closed_forms(report):
    worst = 0.0
    for n in range(1, 61):
        idx = build_index(n)
        up = g2_zero_from_state(initial_state(idx, ALL_UP))
        mixed = g2_zero_from_state(initial_state(idx, MIXED))
        worst = max(worst, abs(up - (2 - 2 / n)), abs(mixed - 6 * (n - 1) * (n + 3) / (5 * n * (n + 2))))
        assert up == pytest.approx(g2_zero_allup(n), abs=1e-12)
        assert mixed == pytest.approx(g2_zero_mixed(n), abs=1e-12)
    means = np.arange(1.0, 101.0)
    curve = np.array([g2_zero_gaussian(m, m / 2) for m in means])
    report(5, f"max closed-form deviation {worst:.1e}; Gaussian curve {curve[0]:.3f} .. {curve[-1]:.4f}")
    assert worst < 1e-12
    assert np.all(np.diff(curve) > 0) and curve.max() <= 1.2


def test_criterion_06_reference_lifetimes(report):
    start = time.perf_counter()
    for s in REFERENCE_SAMPLES.values():
        trace = simulate_trace(s.ensemble(), s.rate_params(), EDGES, seed=None)
        lt = lifetime_1e(trace) * 1e9
        report(6, f"{s.name}: 1/e lifetime {lt:.2f} ns (reference {s.lifetime_ns} ns, {lt / s.lifetime_ns - 1:+.1%})")
        assert lt == pytest.approx(s.lifetime_ns, rel=0.25)
    assert time.perf_counter() - start < 300


@pytest.mark.parametrize("name", ["ND2", "ND3"])
def test_criterion_07_round_trip_fit(name, report):
    s = REFERENCE_SAMPLES[name]
    cfg = FitConfig(n_range=(1, 30))
    trace = simulate_trace(s.ensemble(), s.rate_params(), EDGES, peak_counts=1e5, seed=1)
    r = fit_superradiant(trace, cfg)
    _check_fit(r.as_dict(), s, report, 7)
    again = fit_superradiant(simulate_trace(s.ensemble(), s.rate_params(), EDGES, peak_counts=1e5, seed=1), cfg)
    assert again.as_dict() == r.as_dict()


def test_criterion_08_model_comparison(report):
    s = REFERENCE_SAMPLES["ND4"]
    trace = simulate_trace(s.ensemble(), s.rate_params(), EDGES, peak_counts=1e5, seed=4)
    cmp = compare_models(trace, FitConfig(n_range=(1, 70)))
    assert not cmp.errors
    sr = cmp.results["superradiant"]
    ratios = cmp.ls_ratios()
    report(
        8,
        f"ND4: superradiant N={sr.n_max}; least-squares ratios biexponential {ratios['biexponential']:.1f}, "
        f"deformed exponential {ratios['deformed_exponential']:.1f}",
    )
    for name in ("biexponential", "deformed_exponential"):
        assert cmp.results[name].residual > sr.residual
        assert cmp.results[name].ls_residual > sr.ls_residual
    assert ratios["deformed_exponential"] > 5


def test_criterion_09_time_integrated_g2(report):
    s = REFERENCE_SAMPLES["ND4"]
    taus = np.array([0.5, 1, 2, 3, 5, 10, 20]) * 1e-9
    g = ensemble_g2_time_integrated(s.ensemble(), s.rate_params(), taus).values
    g0 = g2_zero_gaussian(50, 25)
    report(9, "ND4 g2(tau): " + ", ".join(f"{t * 1e9:g} ns -> {v:.4f}" for t, v in zip(taus, g)))
    report(9, f"Gaussian(50, 25) ensemble g2(0) = {g0:.4f}")
    assert g[0] > 1
    assert np.all(np.diff(g) <= 0)
    late = taus >= 3e-9
    assert np.all(np.abs(g[late] - 1) < g[0] - 1)
    assert 1.1 <= g0 <= 1.2


def test_criterion_10_auxiliary_formulas(report):
    v = dipole_dipole_strength(DipoleGeometry(10e-9, 5 * MHZ))
    ratio = isc_lifetime_ratio(1.8 / 12.2, 9.4 / 12.2)
    direct = (1 + 1.8 / 12.2) / (1 + 9.4 / 12.2)
    report(10, f"V_dd = 2pi x {rate_to_mhz(v):.4f} MHz; ISC lifetime ratio {ratio:.6f} (direct substitution {direct:.6f})")
    assert rate_to_mhz(v) == pytest.approx(8.56, rel=0.01)
    assert abs(ratio - direct) < 1e-3
    assert isc_lifetime_ratio(BULK_ISC_0 / BULK_GAMMA, BULK_ISC_1 / BULK_GAMMA) == pytest.approx(direct, abs=1e-12)


def test_criterion_11_cli_end_to_end(tmp_path, report):
    s = REFERENCE_SAMPLES["ND3"]
    cfg = tmp_path / "nd3.json"
    cfg.write_text(json.dumps({"sample": "ND3", "seed": 1, "fit": {"n_range": [1, 30]}}))
    out = tmp_path / "run"
    assert main(["--mode", "simulate", "--config", str(cfg), "--out-dir", str(out)]) == 0
    trace_csv = out / "trace.csv"
    assert main(["--mode", "fit", "--config", str(cfg), "--input", str(trace_csv), "--out-dir", str(out)]) == 0
    _check_fit(read_kv(out / "fit.txt"), s, report, 11)
    assert main(["--mode", "compare", "--config", str(cfg), "--input", str(trace_csv), "--out-dir", str(out)]) == 0
    assert (out / "compare.csv").exists() and (out / "fit_decay.svg").exists()
