import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superrad.ensemble import domain_ensemble
from superrad.errors import FitError, ValidationError
from superrad.fitting import (
    BULK_ISC_0,
    BULK_ISC_1,
    DecayTrace,
    FitConfig,
    Loss,
    compare_models,
    estimate_background,
    fit_biexponential,
    fit_deformed_exponential,
    fit_superradiant,
    lifetime_1e,
    simulate_trace,
    tail_fit_gamma,
    tail_fit_rate,
    uniform_edges,
)
from superrad.ladder import RateParams
from superrad.propagate import IrfSpec, convolve_samples
from superrad.units import mhz_to_rate

MHZ = mhz_to_rate(1.0)
EDGES = uniform_edges(-2e-9, 100e-9, 16e-12)


def exp_trace(taus, amps, edges=EDGES, irf=IrfSpec.gaussian(110e-12), seed=None, bg=0.0):
    t0, t1 = np.maximum(edges[:-1], 0), np.maximum(edges[1:], 0)
    mu = sum(a * tau * (np.exp(-t0 / tau) - np.exp(-t1 / tau)) for tau, a in zip(taus, amps))
    mu = convolve_samples(mu, float(np.diff(edges).mean()), irf) + bg
    counts = mu if seed is None else np.random.default_rng(seed).poisson(mu).astype(float)
    return DecayTrace(edges, counts, irf)


def test_trace_validation():
    with pytest.raises(ValidationError):
        DecayTrace(np.arange(3.0), np.ones(3))
    with pytest.raises(ValidationError):
        DecayTrace(np.array([0, 2, 1.0]), np.ones(2))
    with pytest.raises(ValidationError):
        DecayTrace(np.arange(3.0), np.array([1.0, -1.0]))
    with pytest.raises(ValidationError):
        DecayTrace(np.array([0, 1, 3.0]), np.ones(2)).dt


@settings(max_examples=15)
@given(st.floats(0.5, 50.0))
def test_lifetime_1e_single_exponential(tau_ns):
    edges = uniform_edges(-2e-9, max(200e-9, 10 * tau_ns * 1e-9), 16e-12)
    tr = exp_trace([tau_ns * 1e-9], [1e14], edges)
    assert lifetime_1e(tr) * 1e9 == pytest.approx(tau_ns, rel=0.02)


def test_tail_rate_pure_exponential():
    tau = 12e-9
    tr = exp_trace([tau], [1e5 / 16e-12], seed=3)  # ~1e5 counts in the first bin
    assert tail_fit_rate(tr) == pytest.approx(1 / tau, rel=0.01)


def test_tail_gamma_two_projections():
    gamma = 5 * MHZ
    k0, k1 = gamma + BULK_ISC_0, gamma + BULK_ISC_1
    tr = exp_trace([1 / k0, 1 / k1], [4e16, 4e16], uniform_edges(-2e-9, 200e-9, 16e-12), seed=4)
    assert tail_fit_gamma(tr) == pytest.approx(gamma, rel=0.02)


def test_flat_trace_is_rejected():
    edges = uniform_edges(-5e-9, 100e-9, 16e-12)
    flat = DecayTrace(edges, np.full(edges.size - 1, 50.0))
    assert estimate_background(flat) == 50.0
    with pytest.raises(FitError):
        tail_fit_rate(flat)
    with pytest.raises(FitError):
        lifetime_1e(flat)
    with pytest.raises(FitError):
        fit_superradiant(flat, FitConfig(n_range=(1, 3)))


def test_fit_config_validation():
    with pytest.raises(ValidationError):
        FitConfig(n_range=(5, 2))
    with pytest.raises(ValidationError):
        FitConfig(n_range=(0, 2))
    with pytest.raises(ValidationError):
        FitConfig(dephasing_bounds={0: (0, 1), 1: (1, 2)})
    with pytest.raises(ValidationError):
        FitConfig(polarization_bounds=(0.5, 1.2))
    with pytest.raises(ValidationError):
        FitConfig(fixed={"temperature": 1})
    assert FitConfig(loss="least_squares").loss is Loss.LEAST_SQUARES


def test_simulate_trace_scaling_and_seed():
    p = RateParams(4.8 * MHZ, BULK_ISC_0, BULK_ISC_1, 20 * MHZ, 260 * MHZ)
    ens = domain_ensemble(5, 0.5)
    mean = simulate_trace(ens, p, EDGES, peak_counts=1e4)
    assert mean.counts.max() == pytest.approx(1e4)
    a = simulate_trace(ens, p, EDGES, peak_counts=1e4, seed=7)
    b = simulate_trace(ens, p, EDGES, peak_counts=1e4, seed=7)
    np.testing.assert_array_equal(a.counts, b.counts)
    assert np.all(a.counts == np.round(a.counts))


def test_biexponential_recovery():
    tr = exp_trace([1e-9, 10e-9], [3e14, 3e13], seed=5)
    r = fit_biexponential(tr)
    assert r.params["rate_fast"] == pytest.approx(1e9, rel=0.03)
    assert r.params["rate_slow"] == pytest.approx(1e8, rel=0.03)


def test_deformed_exponential_pinned_coupling():
    tr = exp_trace([5e-9], [1e14], seed=6)
    r = fit_deformed_exponential(tr, coupling=0.0)
    assert r.params["tau"] == pytest.approx(5e-9, rel=0.02)
    with pytest.raises(ValidationError):
        fit_deformed_exponential(tr, coupling=-1.0)


@pytest.fixture(scope="module")
def small_trace():
    p = RateParams(2.5 * MHZ, BULK_ISC_0, BULK_ISC_1, 27 * MHZ, 270 * MHZ)
    return simulate_trace(domain_ensemble(2, 0.56), p, uniform_edges(-2e-9, 150e-9, 32e-12), seed=11)


def test_superradiant_fit_is_deterministic(small_trace):
    cfg = FitConfig(n_range=(1, 4), seed=1)
    a = fit_superradiant(small_trace, cfg)
    b = fit_superradiant(small_trace, cfg)
    assert a.as_dict() == b.as_dict()
    assert a.n_max == 2
    assert a.residual <= a.initial_residual
    assert 0.46 <= a.p0 <= 0.66


def test_compare_models_table(small_trace):
    cmp = compare_models(small_trace, FitConfig(n_range=(2, 2)))
    rows = {r["model"]: r for r in cmp.table()}
    assert set(rows) == {"superradiant", "biexponential", "deformed_exponential"}
    assert rows["superradiant"]["ls_ratio"] == 1.0
    edges = uniform_edges(0, 1e-9, 1e-11)
    with pytest.raises(ValidationError):
        compare_models(DecayTrace(edges, np.zeros(edges.size - 1)))
