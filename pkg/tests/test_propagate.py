import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from superrad.errors import ValidationError
from superrad.ladder import ALL_UP, MIXED, RateParams, build_index, build_rate_matrix, fluorescence_weights, initial_state
from superrad.propagate import (
    FluorescenceTrace,
    IrfSpec,
    TimeGrid,
    convolve_irf,
    convolve_samples,
    evolve,
    fluorescence,
    fluorescence_series,
    observe,
    peak_rate,
)
from superrad.units import mhz_to_rate

MHZ = mhz_to_rate(1.0)
P = RateParams(5 * MHZ, 1.8 * MHZ, 9.4 * MHZ, 40 * MHZ, 400 * MHZ)


def test_time_grid():
    g = TimeGrid(0.0, 1e-9, 11)
    assert g.times()[-1] == 1e-9
    assert TimeGrid(1e-12, 1e-9, 4, "log").times()[0] == pytest.approx(1e-12)
    with pytest.raises(ValidationError):
        TimeGrid(1e-9, 0.0, 4)
    with pytest.raises(ValidationError):
        TimeGrid(0.0, 1e-9, 4, "log")


def test_evolve_methods_agree():
    idx = build_index(6)
    A = build_rate_matrix(idx, P, 1)
    v0 = initial_state(idx, MIXED, 1)
    times = np.linspace(0, 50e-9, 21)
    a = evolve(A, v0, times, "expm").states
    b = evolve(A, v0, times, "ode").states
    np.testing.assert_allclose(a, b, atol=1e-8)
    with pytest.raises(ValidationError):
        evolve(A, v0, times, "magic")
    with pytest.raises(ValidationError):
        evolve(A[:-1, :-1], v0, times)


@given(n=st.integers(1, 15), sigma=st.sampled_from([0, 1]), gd=st.floats(0, 2000))
def test_observe_matches_dense_exponential(n, sigma, gd):
    params = RateParams(5 * MHZ, 1.8 * MHZ, 9.4 * MHZ, gd * MHZ, gd * MHZ)
    idx = build_index(n)
    A = build_rate_matrix(idx, params, sigma)
    v0 = initial_state(idx, MIXED, sigma).vector()
    c = fluorescence_weights(idx, params)
    times = np.array([0.0, 0.1e-9, 1e-9, 7e-9, 60e-9])
    got = observe(A, v0, c, times)[:, 0]
    want = np.array([c @ expm(A * t) @ v0 for t in times])
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12 * want.max())


def test_observe_multiple_columns():
    idx = build_index(5)
    A = build_rate_matrix(idx, P, 0, sparse=True)
    V = np.column_stack([initial_state(idx, s, 0).vector() for s in (MIXED, ALL_UP)])
    C = np.vstack([fluorescence_weights(idx, P), np.eye(idx.extended_dim)[idx.dim + 2]])
    times = np.linspace(0, 20e-9, 7)
    both = observe(A, V, C, times)
    assert both.shape == (7, 2, 2)
    for k in range(2):
        np.testing.assert_allclose(both[:, :, k], observe(A, V[:, k], C, times), rtol=1e-12)


def test_fluorescence_of_single_spin():
    idx = build_index(1)
    s = initial_state(idx, ALL_UP)
    assert fluorescence(s, P) == pytest.approx(P.gamma)
    traj = evolve(build_rate_matrix(idx, P, 0), s, np.linspace(0, 10e-9, 5))
    f = fluorescence_series(traj, P)
    k = P.tail_rate(0)
    np.testing.assert_allclose(f.rates, P.gamma * np.exp(-k * f.times), rtol=1e-12)


def test_irf_discretization_and_convolution():
    irf = IrfSpec.gaussian(110e-12)
    offsets, w = irf.discretize(16e-12)
    assert w.sum() == pytest.approx(1.0)
    assert np.sum(offsets * w) == pytest.approx(0.0, abs=1e-12)
    # delta response leaves the signal alone
    x = np.exp(-np.arange(200) / 30.0)
    np.testing.assert_allclose(convolve_samples(x, 16e-12, IrfSpec.gaussian(0.0)), x)
    # convolution preserves area away from the edges
    y = np.zeros(400)
    y[200] = 1.0
    assert convolve_samples(y, 16e-12, irf).sum() == pytest.approx(1.0)
    measured = IrfSpec.measured([1, 2, 1], 16e-12, t0=-16e-12)
    np.testing.assert_allclose(convolve_samples(y, 16e-12, measured)[199:202], [0.25, 0.5, 0.25])
    with pytest.raises(ValidationError):
        measured.discretize(8e-12)
    with pytest.raises(ValidationError):
        IrfSpec.measured([0, 0], 1e-12)


def test_convolve_irf_requires_uniform_grid():
    tr = FluorescenceTrace(np.array([0, 1, 3.0]), np.ones(3))
    with pytest.raises(ValidationError):
        convolve_irf(tr, IrfSpec.gaussian(1.0))
    with pytest.raises(ValidationError):
        FluorescenceTrace(np.arange(3.0), -np.ones(3))


def test_peak_rate_delayed_burst():
    params = RateParams(MHZ)
    f2, t2 = peak_rate(2, params)
    assert t2 == 0.0  # N = 2: the initial rate 2 gamma is already maximal
    f10, t10 = peak_rate(10, params)
    assert t10 > 0 and f10 > 10 * params.gamma
