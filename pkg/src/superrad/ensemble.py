"""Mixtures of collective domains over spin projection and domain size."""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ValidationError
from .ladder import (
    EMITTED,
    MAX_SPINS,
    MIXED,
    InitialStateSpec,
    RateParams,
    build_index,
    build_rate_matrix,
    check_sigma,
    fluorescence_weights,
    initial_state,
)
from .propagate import FluorescenceTrace, _as_times, observe


@dataclass(frozen=True)
class DomainSets:
    """Multisets of domain sizes for ``sigma = 0`` (``s0``) and ``sigma = +-1`` (``s1``)."""

    s0: tuple = ()
    s1: tuple = ()

    def __post_init__(self):
        s0 = tuple(int(n) for n in self.s0)
        s1 = tuple(int(n) for n in self.s1)
        if not s0 and not s1:
            raise ValidationError("at least one domain is required")
        if any(n < 1 for n in s0 + s1):
            raise ValidationError("domain sizes must be >= 1")
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "s1", s1)


@dataclass(frozen=True)
class DomainEnsemble:
    """Probabilities ``p[(sigma, N)]`` of finding a domain of size ``N`` with spin ``sigma``."""

    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (sigma, n), p in self.weights.items():
            key = (check_sigma(sigma), int(n))
            if key[1] < 1:
                raise ValidationError("domain sizes must be >= 1")
            if p < 0 or not np.isfinite(p):
                raise ValidationError(f"weight for {key} must be finite and >= 0")
            if p > 0:
                clean[key] = clean.get(key, 0.0) + float(p)
        total = sum(clean.values())
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"ensemble weights sum to {total!r}, not 1")
        object.__setattr__(self, "weights", dict(sorted(clean.items())))

    @property
    def p0(self) -> float:
        """Fraction of the ensemble in ``m_s = 0``."""
        return float(sum(p for (s, _), p in self.weights.items() if s == 0))

    def sizes(self, sigma) -> dict:
        sigma = check_sigma(sigma)
        return {n: p for (s, n), p in self.weights.items() if s == sigma}

    @property
    def max_size(self) -> int:
        return max(n for _, n in self.weights)

    def mix(self, other: "DomainEnsemble", a: float) -> "DomainEnsemble":
        """``a * self + (1 - a) * other``."""
        w = {k: a * p for k, p in self.weights.items()}
        for k, p in other.weights.items():
            w[k] = w.get(k, 0.0) + (1 - a) * p
        return DomainEnsemble(w)


@dataclass(frozen=True)
class GaussianDomainSpec:
    mean: float
    variance: float
    max_size: int
    min_size: int = 1

    def __post_init__(self):
        if not self.mean > 0 or not self.variance > 0:
            raise ValidationError("Gaussian domain mean and variance must be > 0")
        if not 1 <= self.min_size <= self.max_size:
            raise ValidationError("need 1 <= min_size <= max_size")
        if self.max_size > MAX_SPINS:
            raise ValidationError(f"max_size exceeds the cap of {MAX_SPINS}")
        if self.mean > self.max_size:
            raise ValidationError("Gaussian mean must not exceed max_size")

    def probabilities(self) -> dict:
        """Truncated Gaussian evaluated at integer sizes, renormalized."""
        n = np.arange(self.min_size, self.max_size + 1)
        logw = -((n - self.mean) ** 2) / (2.0 * self.variance)
        w = np.exp(logw - logw.max())
        w /= w.sum()
        return {int(k): float(p) for k, p in zip(n, w) if p > 0}


def ensemble_from_sets(sets: DomainSets) -> DomainEnsemble:
    """Spin-count weighted probabilities: ``p[N] = N * count(N) / total spins``."""
    total = sum(sets.s0) + sum(sets.s1)
    weights = {}
    for sigma, members in ((0, sets.s0), (1, sets.s1)):
        for n in members:
            weights[(sigma, n)] = weights.get((sigma, n), 0.0) + n / total
    # rounding can leave the sum a few ulps away from 1
    scale = sum(weights.values())
    return DomainEnsemble({k: v / scale for k, v in weights.items()})


def ensemble_from_gaussian(
    spec0: GaussianDomainSpec, spec1: GaussianDomainSpec, pol_target: float
) -> DomainEnsemble:
    """Gaussian size distributions per projection, split so that ``p0 = pol_target``."""
    if not 0.0 <= pol_target <= 1.0:
        raise ValidationError(f"polarization {pol_target!r} outside [0, 1]")
    weights = {}
    for sigma, spec, frac in ((0, spec0, pol_target), (1, spec1, 1.0 - pol_target)):
        if frac == 0:
            continue
        for n, p in spec.probabilities().items():
            weights[(sigma, n)] = frac * p
    return DomainEnsemble(weights)


DEFAULT_CENTRE = 0.45
DEFAULT_SPREAD = 0.15


def domain_ensemble(
    n_max: int, p0: float, centre: float = DEFAULT_CENTRE, spread: float = DEFAULT_SPREAD
) -> DomainEnsemble:
    """Size distribution shared by every sample, parametrized by its largest domain.

    Gaussian over ``1..n_max`` with mean ``centre * n_max`` and standard
    deviation ``spread * n_max``, identical for both projections and split
    so that the ``sigma = 0`` fraction is ``p0``. The defaults were chosen
    once so that forward simulation of the tabulated sample parameters
    lands on their measured 1/e lifetimes; they are not refit per sample.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    if not 0 < centre <= 1 or not spread > 0:
        raise ValidationError("need 0 < centre <= 1 and spread > 0")
    sd = spread * n_max
    spec = GaussianDomainSpec(mean=centre * n_max, variance=sd * sd, max_size=n_max)
    return ensemble_from_gaussian(spec, spec, p0)


class _Memo:
    """Small thread-safe LRU map."""

    def __init__(self, maxsize: int = 128):
        self._data = OrderedDict()
        self._lock = threading.Lock()
        self.maxsize = maxsize

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        return None

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self):
        with self._lock:
            self._data.clear()


_cache = _Memo(maxsize=512)


def _quantize(x: float) -> float:
    return float(f"{x:.10g}")


def sigma_observables(sizes: dict, params: RateParams, sigma, spec: InitialStateSpec, times):
    """Fluorescence and cumulative photon count of a size mixture for one ``sigma``.

    ``sizes`` maps domain size to (unnormalized) weight. All sizes share one
    index of the largest size: smaller domains start in lower ladders and
    population never moves to larger ``J``, so one propagation of the
    weighted initial vector gives the weighted sum of the traces.
    Returns an array of shape ``(len(times), 2)``.
    """
    sigma = check_sigma(sigma)
    times = _as_times(times)
    key = (
        sigma,
        tuple((int(n), _quantize(p)) for n, p in sorted(sizes.items())),
        # only the rates acting on this projection, so fits varying the other one reuse entries
        tuple(_quantize(x) for x in (params.gamma, params.isc(sigma), params.dephasing(sigma))),
        spec,
        times.size,
        hash(times.tobytes()),
    )
    hit = _cache.get(key)
    if hit is not None:
        return hit
    n_top = max(sizes)
    index = build_index(n_top)
    v0 = np.zeros(index.extended_dim)
    for n, p in sizes.items():
        v0 += p * initial_state(index, spec, sigma, n_spins=n).vector()
    A = build_rate_matrix(index, params, sigma, sparse=True)
    obs = np.zeros((2, index.extended_dim))
    obs[0] = fluorescence_weights(index, params)
    obs[1, index.dim + EMITTED] = 1.0
    try:
        result = observe(A, v0, obs, times)
    except NumericalError as exc:
        raise NumericalError(f"propagation failed for sigma={sigma}, N<={n_top}: {exc}") from exc
    result.setflags(write=False)
    _cache.put(key, result)
    return result


def ensemble_observables(ensemble: DomainEnsemble, params: RateParams, spec: InitialStateSpec, times):
    """Sum of :func:`sigma_observables` over both projections."""
    times = _as_times(times)
    total = np.zeros((times.size, 2))
    for sigma in (0, 1):
        sizes = ensemble.sizes(sigma)
        if sizes:
            total += sigma_observables(sizes, params, sigma, spec, times)
    return total


def total_fluorescence(
    ensemble: DomainEnsemble, params: RateParams, spec: InitialStateSpec = MIXED, grid=None
) -> FluorescenceTrace:
    """``F(t) = sum over (sigma, N) of p[sigma, N] F_N(t)``."""
    if grid is None:
        raise ValidationError("a time grid is required")
    times = _as_times(grid.times() if hasattr(grid, "times") else grid)
    obs = ensemble_observables(ensemble, params, spec, times)
    meta = {"params": params, "p0": ensemble.p0, "max_size": ensemble.max_size}
    return FluorescenceTrace(times, obs[:, 0], meta)
