"""Second-order coherence of collective emission.

Everything here works in the diagonal (population) sector of the Dicke
ladder. A photon detection maps ``P[J, M] -> w1(J, M) P[J, M]`` moved to
``M - 1``; the photon rate of a state is ``sum w1 P + n_nc`` in units of
``gamma``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from .ensemble import DomainEnsemble, GaussianDomainSpec, ensemble_from_gaussian
from .errors import DomainError, ValidationError
from .ladder import (
    MAX_SPINS,
    MIXED,
    NC,
    InitialStateSpec,
    LadderIndex,
    LadderState,
    RateParams,
    build_index,
    build_rate_matrix,
    emission_weight,
    initial_state,
)
from .propagate import _as_times, observe


class G2Kind(enum.Enum):
    ZERO_DELAY = "zero_delay"
    DELAYED = "delayed"
    TIME_INTEGRATED = "time_integrated"


@dataclass(frozen=True)
class G2Curve:
    """Sampled ``g2`` values.

    ``numerator`` and ``denominator`` hold the unnormalized correlator and
    the product of intensities when they are available.
    """

    delays: np.ndarray
    values: np.ndarray
    kind: G2Kind
    numerator: np.ndarray | None = None
    denominator: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if d.shape != v.shape:
            raise ValidationError("delays and values differ in length")
        if np.any(v < -1e-12):
            raise ValidationError("g2 values must be non-negative")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "values", np.maximum(v, 0.0))


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"N must be a positive integer, got {n!r}")
    return int(n)


def g2_zero_allup(n: int) -> float:
    """``2 - 2/N`` for the fully inverted Dicke state."""
    n = _check_n(n)
    return 2.0 - 2.0 / n


def g2_zero_mixed(n: int) -> float:
    """``6 (N-1)(N+3) / (5 N (N+2))`` for the maximally mixed top ladder."""
    n = _check_n(n)
    return 6.0 * (n - 1) * (n + 3) / (5.0 * n * (n + 2))


def g2_zero_ensemble(ensemble: DomainEnsemble) -> float:
    """Weighted sum of per-domain :func:`g2_zero_mixed`; domains are mutually incoherent."""
    return float(sum(p * g2_zero_mixed(n) for (_, n), p in ensemble.weights.items()))


def g2_zero_gaussian(mean: float, variance: float | None = None, max_size: int = MAX_SPINS) -> float:
    """Ensemble ``g2(0)`` for Gaussian domain sizes (variance defaults to ``mean / 2``)."""
    variance = mean / 2.0 if variance is None else variance
    spec = GaussianDomainSpec(mean=mean, variance=variance, max_size=max_size)
    return g2_zero_ensemble(ensemble_from_gaussian(spec, spec, 0.5))


def photon_jump(index: LadderIndex) -> sp.csr_matrix:
    """Unnormalized detection update ``S- rho S+`` on the extended vector."""
    tj, tm = index.two_j, index.two_m
    src = np.flatnonzero(tm > -tj)
    dst = np.array([index.position(j, m - 2) for j, m in zip(tj[src], tm[src])], dtype=np.int64)
    w = emission_weight(tj[src], tm[src])
    n = index.extended_dim
    return sp.csr_matrix((w, (dst, src)), shape=(n, n))


def _intensity_row(index: LadderIndex) -> np.ndarray:
    c = np.zeros(index.extended_dim)
    c[: index.dim] = emission_weight(index.two_j, index.two_m)
    c[index.dim + NC] = 1.0
    return c


def _check_prepared(state: LadderState):
    if state.n_nc > 1e-12:
        raise ValidationError(
            "g2 needs a freshly prepared state with n_nc = 0; the non-collective "
            "count carries no photon-number distribution"
        )
    if abs(state.total_probability() - 1.0) > 1e-9:
        raise ValidationError("state must be normalized")


def g2_zero_from_state(state: LadderState) -> float:
    """``sum P w2 / (sum P w1)^2`` with ``w2 = w1(J, M) w1(J, M-1)``, over all ladders."""
    idx = state.index
    w1 = emission_weight(idx.two_j, idx.two_m)
    w1_next = emission_weight(idx.two_j, idx.two_m - 2)
    first = float(w1 @ state.populations)
    if first <= 0:
        raise DomainError("state has no collective excitation")
    return float((w1 * w1_next) @ state.populations) / first**2


def _correlators(state0: LadderState, params: RateParams, times):
    """Correlator ``G2(0, t)``, intensities ``I(0)`` and ``I(t)`` in units of gamma."""
    _check_prepared(state0)
    idx = state0.index
    A = build_rate_matrix(idx, params, state0.sigma, sparse=True)
    v0 = state0.vector()
    c = _intensity_row(idx)
    i0 = float(c @ v0)
    if i0 <= 0:
        raise DomainError("state has no excitation")
    V = np.column_stack([photon_jump(idx) @ v0, v0])
    out = observe(A, V, c[None, :], times)[:, 0, :]
    return out[:, 0], i0, out[:, 1]


def g2_delayed(state0: LadderState, params: RateParams, delays) -> G2Curve:
    """``g2(0, t) = G2(0, t) / (I(0) I(t))`` after pulsed preparation of ``state0``.

    Without re-excitation the single emitter never emits a second photon,
    so ``N = 1`` gives zero at every delay.
    """
    t = _as_times(delays.times() if hasattr(delays, "times") else delays)
    num, i0, it = _correlators(state0, params, t)
    den = i0 * it
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return G2Curve(t, g, G2Kind.DELAYED, num, den)


def _windowed(num, den, grid, taus):
    cn = cumulative_trapezoid(num, grid, initial=0.0)
    cd = cumulative_trapezoid(den, grid, initial=0.0)
    pos = np.searchsorted(grid, taus)
    return cn[pos], cd[pos]


def _fine_grid(taus, window, n_fine):
    grid = np.union1d(np.linspace(0.0, window, n_fine), taus)
    return grid


def _check_taus(taus, window):
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus <= 0) or not np.all(np.isfinite(taus)):
        raise DomainError("tau values must be positive and finite")
    window = float(taus.max()) if window is None else float(window)
    if taus.max() > window * (1 + 1e-12):
        raise DomainError(f"tau {taus.max():.3g} s beyond the simulated window {window:.3g} s")
    return taus, window


def g2_time_integrated(
    state0: LadderState, params: RateParams, taus, window: float | None = None, n_fine: int = 4001
) -> G2Curve:
    """Time-integrated autocorrelation over a symmetric coincidence window.

    ``g(tau) = int_{-tau}^{tau} G2(0, t) dt / int_{-tau}^{tau} I(0) I(t) dt``;
    both integrands are even in ``t``, so the half window is used. As
    ``tau -> 0`` this tends to :func:`g2_zero_from_state`.
    """
    taus, window = _check_taus(taus, window)
    grid = _fine_grid(taus, window, n_fine)
    num, i0, it = _correlators(state0, params, grid)
    wn, wd = _windowed(num, i0 * it, grid, taus)
    return G2Curve(taus, wn / wd, G2Kind.TIME_INTEGRATED, wn, wd)


def ensemble_g2_time_integrated(
    ensemble: DomainEnsemble,
    params: RateParams,
    taus,
    spec: InitialStateSpec = MIXED,
    window: float | None = None,
    n_fine: int = 4001,
) -> G2Curve:
    """``sum p[sigma, N] g(tau)[sigma, N]``, the time-integrated analogue of the ensemble sum.

    One propagation per ``sigma`` carries every domain size as a separate column.
    """
    taus, window = _check_taus(taus, window)
    grid = _fine_grid(taus, window, n_fine)
    total = np.zeros(taus.size)
    for sigma in (0, 1):
        sizes = ensemble.sizes(sigma)
        if not sizes:
            continue
        ns = sorted(sizes)
        idx = build_index(max(ns))
        A = build_rate_matrix(idx, params, sigma, sparse=True)
        c = _intensity_row(idx)
        jump = photon_jump(idx)
        v0 = np.column_stack([initial_state(idx, spec, sigma, n_spins=n).vector() for n in ns])
        V = np.hstack([jump @ v0, v0])
        out = observe(A, V, c[None, :], grid)[:, 0, :]
        i0 = c @ v0
        for k, n in enumerate(ns):
            if i0[k] <= 0:
                continue
            wn, wd = _windowed(out[:, k], i0[k] * out[:, len(ns) + k], grid, taus)
            total += sizes[n] * wn / wd
    return G2Curve(taus, total, G2Kind.TIME_INTEGRATED, metadata={"p0": ensemble.p0})
