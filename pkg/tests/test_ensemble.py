import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given
from hypothesis import strategies as st

from superrad.ensemble import (
    DomainEnsemble,
    DomainSets,
    GaussianDomainSpec,
    domain_ensemble,
    ensemble_from_gaussian,
    ensemble_from_sets,
    ensemble_observables,
    sigma_observables,
    total_fluorescence,
)
from superrad.errors import DomainError, ValidationError
from superrad.ladder import MIXED, RateParams, build_index, build_rate_matrix, fluorescence_weights, initial_state
from superrad.propagate import observe
from superrad.units import mhz_to_rate

MHZ = mhz_to_rate(1.0)
P = RateParams(4 * MHZ, 1.8 * MHZ, 9.4 * MHZ, 20 * MHZ, 260 * MHZ)


def test_sets_weight_by_spin_count():
    ens = ensemble_from_sets(DomainSets(s0=(2, 2), s1=(4,)))
    assert ens.weights == {(0, 2): pytest.approx(0.5), (1, 4): pytest.approx(0.5)}
    assert ens.p0 == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        DomainSets()
    with pytest.raises(ValidationError):
        DomainSets(s0=(0,))


@given(st.lists(st.integers(1, 30), min_size=1, max_size=8), st.lists(st.integers(1, 30), max_size=8))
def test_sets_weights_sum_to_one(s0, s1):
    ens = ensemble_from_sets(DomainSets(tuple(s0), tuple(s1)))
    assert sum(ens.weights.values()) == pytest.approx(1.0, abs=1e-12)
    assert ens.p0 == pytest.approx(sum(s0) / (sum(s0) + sum(s1)))


def test_ensemble_validation():
    with pytest.raises(ValidationError):
        DomainEnsemble({(0, 1): 0.5})
    with pytest.raises(ValidationError):
        DomainEnsemble({(0, 1): 1.5, (1, 1): -0.5})
    with pytest.raises(ValidationError):
        GaussianDomainSpec(mean=10, variance=1, max_size=5)
    with pytest.raises(ValidationError):
        ensemble_from_gaussian(GaussianDomainSpec(2, 1, 4), GaussianDomainSpec(2, 1, 4), 1.2)
    with pytest.raises(DomainError):
        domain_ensemble(0, 0.5)


@given(st.integers(1, 100), st.floats(0, 1))
def test_domain_ensemble_polarization(n_max, p0):
    ens = domain_ensemble(n_max, p0)
    assert ens.p0 == pytest.approx(p0, abs=1e-9)
    assert ens.max_size <= n_max


def test_mix():
    a, b = domain_ensemble(4, 1.0), domain_ensemble(4, 0.0)
    assert a.mix(b, 0.3).p0 == pytest.approx(0.3)


def test_size_mixture_equals_sum_of_separate_domains():
    sizes = {2: 0.2, 5: 0.5, 7: 0.3}
    times = np.linspace(0, 30e-9, 50)
    joint = sigma_observables(sizes, P, 1, MIXED, times)
    separate = 0
    for n, p in sizes.items():
        idx = build_index(n)
        A = build_rate_matrix(idx, P, 1, sparse=True)
        separate = separate + p * observe(A, initial_state(idx, MIXED, 1).vector(), fluorescence_weights(idx, P), times)[:, 0]
    np.testing.assert_allclose(joint[:, 0], separate, rtol=1e-9)


def test_cumulative_photons_integrate_fluorescence():
    ens = domain_ensemble(8, 0.5)
    times = np.linspace(0, 400e-9, 40001)
    obs = ensemble_observables(ens, P, MIXED, times)
    assert obs[-1, 1] == pytest.approx(trapezoid(obs[:, 0], times), rel=1e-5)
    tr = total_fluorescence(ens, P, grid=times)
    np.testing.assert_allclose(tr.rates, obs[:, 0])
    with pytest.raises(ValidationError):
        total_fluorescence(ens, P)
