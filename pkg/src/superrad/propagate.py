"""Time evolution of ladder populations and the resulting fluorescence.

Two propagation routes are provided:

* :func:`evolve` returns full states on a time grid. It steps with the dense
  matrix exponential ``expm(A dt)`` (scaling and squaring) and falls back to a
  stiff sparse ODE solver for large indices.
* :func:`observe` returns only a few linear observables (fluorescence,
  cumulative photon count, ...) at many times. It uses uniformization, i.e. the
  Poisson-weighted power series of the non-negative matrix ``I + A / q``, which
  needs one sparse mat-vec per term and is unconditionally stable for Markov
  generators. This is the route used inside fits.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.special import erf, gammaln

from . import _kernels
from .errors import NumericalError, ValidationError
from .ladder import (
    ALL_UP,
    EMITTED,
    NC,
    LadderIndex,
    LadderState,
    RateParams,
    build_index,
    build_rate_matrix,
    clamp_negative,
    emission_weight,
    fluorescence_weights,
    initial_state,
)

DENSE_LIMIT = 2000
# Poisson window half-width in standard deviations; tail mass beyond is < 1e-20
SERIES_SPREAD = 10.0
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


class Spacing(enum.Enum):
    LINEAR = "linear"
    LOG = "log"


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_points: int
    spacing: Spacing = Spacing.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "spacing", Spacing(self.spacing))
        if not (self.t_end > self.t_start >= 0):
            raise ValidationError("time grid needs t_end > t_start >= 0")
        if self.n_points < 2:
            raise ValidationError("time grid needs at least 2 points")
        if self.spacing is Spacing.LOG and self.t_start <= 0:
            raise ValidationError("log-spaced grid needs t_start > 0")

    def times(self) -> np.ndarray:
        if self.spacing is Spacing.LOG:
            return np.geomspace(self.t_start, self.t_end, self.n_points)
        return np.linspace(self.t_start, self.t_end, self.n_points)


def _as_times(grid) -> np.ndarray:
    t = grid.times() if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValidationError("times must be a non-empty, non-decreasing array >= 0")
    return t


class IrfShape(enum.Enum):
    GAUSSIAN = "gaussian"
    MEASURED = "measured"


@dataclass(frozen=True)
class IrfSpec:
    """Detector response.

    Gaussian: ``fwhm`` in seconds. Measured: ``kernel`` samples spaced by
    ``kernel_dt``, the first sample sitting at delay ``kernel_t0``.
    """

    shape: IrfShape = IrfShape.GAUSSIAN
    fwhm: float = 110e-12
    kernel: tuple | None = None
    kernel_dt: float | None = None
    kernel_t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "shape", IrfShape(self.shape))
        if self.shape is IrfShape.GAUSSIAN:
            if not self.fwhm >= 0:
                raise ValidationError("IRF FWHM must be >= 0")
        else:
            if self.kernel is None or self.kernel_dt is None or self.kernel_dt <= 0:
                raise ValidationError("measured IRF needs kernel samples and kernel_dt > 0")
            k = np.asarray(self.kernel, dtype=float)
            if np.any(k < 0) or k.sum() <= 0:
                raise ValidationError("IRF kernel must be non-negative with positive area")
            object.__setattr__(self, "kernel", tuple(k / k.sum()))

    @classmethod
    def gaussian(cls, fwhm: float) -> "IrfSpec":
        return cls(IrfShape.GAUSSIAN, fwhm=fwhm)

    @classmethod
    def measured(cls, kernel, dt: float, t0: float = 0.0) -> "IrfSpec":
        return cls(IrfShape.MEASURED, fwhm=0.0, kernel=tuple(kernel), kernel_dt=dt, kernel_t0=t0)

    def discretize(self, dt: float):
        """Return ``(offsets, weights)``: unit-area kernel on a grid of spacing ``dt``."""
        if self.shape is IrfShape.GAUSSIAN:
            sigma = self.fwhm / FWHM_PER_SIGMA
            if sigma < 1e-3 * dt:
                return np.array([0]), np.array([1.0])
            half = int(np.ceil(8 * sigma / dt)) + 1
            offsets = np.arange(-half, half + 1)
            edges = (np.arange(-half, half + 2) - 0.5) * dt
            cdf = 0.5 * (1 + erf(edges / (np.sqrt(2) * sigma)))
            w = np.diff(cdf)
        else:
            if not np.isclose(self.kernel_dt, dt, rtol=1e-6, atol=0.0):
                raise ValidationError(
                    f"measured IRF spacing {self.kernel_dt:g} s differs from grid spacing {dt:g} s"
                )
            first = int(round(self.kernel_t0 / dt))
            w = np.asarray(self.kernel)
            offsets = first + np.arange(w.size)
        return offsets, w / w.sum()


def convolve_samples(values: np.ndarray, dt: float, irf: IrfSpec) -> np.ndarray:
    """Convolve uniformly sampled values with the IRF; zero signal before the first sample."""
    offsets, w = irf.discretize(dt)
    values = np.asarray(values, dtype=float)
    n = values.size
    full = np.convolve(values, w)
    # full[k] pairs with output index k + offsets[0]
    out = np.zeros(n)
    lo = offsets[0]
    src = np.arange(full.size) + lo
    keep = (src >= 0) & (src < n)
    out[src[keep]] = full[keep]
    return out


@dataclass
class FluorescenceTrace:
    times: np.ndarray
    rates: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.times.shape != self.rates.shape:
            raise ValidationError("times and rates must have the same length")
        if np.any(self.rates < -1e-12 * max(1.0, np.abs(self.rates).max(initial=0))):
            raise ValidationError("fluorescence rates must be >= 0")

    def normalized(self) -> "FluorescenceTrace":
        return FluorescenceTrace(self.times, self.rates / self.rates.max(), dict(self.metadata))


def uniform_spacing(times: np.ndarray, rtol: float = 1e-6) -> float:
    dts = np.diff(times)
    if dts.size == 0 or dts[0] <= 0 or not np.allclose(dts, dts[0], rtol=rtol, atol=0):
        raise ValidationError("operation requires a uniform time grid")
    return float(dts[0])


def convolve_irf(trace: FluorescenceTrace, irf: IrfSpec) -> FluorescenceTrace:
    """Smear a model trace with the detector response."""
    dt = uniform_spacing(trace.times)
    out = convolve_samples(trace.rates, dt, irf)
    meta = dict(trace.metadata, irf=irf)
    return FluorescenceTrace(trace.times.copy(), out, meta)


@dataclass
class Trajectory:
    """Extended state vectors (rows) at each time."""

    index: LadderIndex
    times: np.ndarray
    states: np.ndarray
    sigma: int = 0

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> LadderState:
        return LadderState.from_vector(self.index, self.states[i], self.sigma)

    @property
    def populations(self) -> np.ndarray:
        return self.states[:, : self.index.dim]

    @property
    def n_nc(self) -> np.ndarray:
        return self.states[:, self.index.dim + NC]

    @property
    def emitted(self) -> np.ndarray:
        return self.states[:, self.index.dim + EMITTED]


def _check_finite(block, t):
    if not np.all(np.isfinite(block)):
        raise NumericalError(f"non-finite state encountered at t={t:.4g} s")


def evolve(A, v0: LadderState, grid, method: str = "auto") -> Trajectory:
    """Propagate ``v0`` with ``dv/dt = A v`` and return states on the grid.

    ``method`` is ``"expm"``, ``"ode"`` or ``"auto"`` (expm up to
    ``DENSE_LIMIT`` states).
    """
    times = _as_times(grid)
    vec = v0.vector()
    n = vec.size
    if A.shape != (n, n):
        raise ValidationError(f"generator shape {A.shape} does not match state size {n}")
    if method == "auto":
        method = "expm" if n <= DENSE_LIMIT else "ode"
    if method == "expm":
        states = _evolve_expm(A, vec, times)
    elif method == "ode":
        states = _evolve_ode(A, vec, times)
    else:
        raise ValidationError(f"unknown propagation method {method!r}")
    for i, t in enumerate(times):
        _check_finite(states[i], t)
        states[i] = clamp_negative(states[i])
    return Trajectory(v0.index, times, states, v0.sigma)


def _evolve_expm(A, vec, times):
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    out = np.empty((times.size, vec.size))
    cache = {}
    t_prev, v = 0.0, vec
    for i, t in enumerate(times):
        step = t - t_prev
        if step > 0:
            key = float(np.format_float_scientific(step, precision=12))
            prop = cache.get(key)
            if prop is None:
                prop = expm(dense * step)
                cache[key] = prop
            v = prop @ v
        out[i] = v
        t_prev = t
    return out


def _evolve_ode(A, vec, times):
    mat = sp.csr_matrix(A)
    sol = solve_ivp(
        lambda t, y: mat @ y,
        (0.0, float(times[-1])),
        vec,
        method="BDF",
        t_eval=times,
        jac=mat,
        rtol=1e-10,
        atol=1e-14,
    )
    if not sol.success:
        raise NumericalError(f"stiff integrator failed: {sol.message}")
    return sol.y.T.copy()


def _poisson_window(lam: float):
    span = SERIES_SPREAD * np.sqrt(lam) + 40.0
    lo = max(0, int(lam - span))
    k = np.arange(lo, int(np.ceil(lam + span)) + 1)
    return lo, np.exp(k * np.log(lam) - lam - gammaln(k + 1.0)) if lam > 0 else np.ones(1)


def _downward_closure(pattern, seeds: np.ndarray) -> np.ndarray:
    """Seeds plus every state reachable from them through the generator."""
    active = seeds.copy()
    while True:
        grown = active | (pattern @ active.astype(np.int8) > 0)
        if np.array_equal(grown, active):
            return active
        active = grown


def observe(A, v0, observables, times, prune_tol: float = 1e-20) -> np.ndarray:
    """Evaluate ``observables @ expm(A t) @ v0`` for every ``t`` by uniformization.

    ``A`` must be a Markov-type generator (non-negative off-diagonal entries).
    ``v0`` may be a vector or a matrix whose columns are vectors;
    ``observables`` is a matrix of row vectors. Returns an array of shape
    ``(len(times), n_obs[, n_columns])``.

    Time is split into stages of doubling length. After each stage, states
    whose population has fallen below ``prune_tol`` (relative to the column
    mass) and that cannot be refilled are dropped, which lowers the
    uniformization rate once fast, high-J states have emptied.
    """
    times = _as_times(times)
    A = sp.csr_matrix(A)
    C = np.atleast_2d(np.asarray(observables, dtype=float))
    V = np.asarray(v0, dtype=float)
    squeeze = V.ndim == 1
    if squeeze:
        V = V[:, None]
    n_obs, m = C.shape[0], V.shape[1]
    out = np.empty((times.size, n_obs, m))
    pattern = (abs(A) > 0).astype(np.int8).tocsr()
    pattern.setdiag(0)
    pattern.eliminate_zeros()
    rates = np.maximum(-A.diagonal(), 0.0)
    mass = np.abs(V).sum(axis=0)
    mass[mass == 0] = 1.0

    state = V.T.copy()  # row-major: one row per column vector
    active = np.ones(A.shape[0], dtype=bool)
    t_now, i = 0.0, 0
    while i < times.size:
        sub = np.flatnonzero(active)
        q = float(rates[sub].max(initial=0.0))
        Cs = np.ascontiguousarray(C[:, sub])
        ws = np.ascontiguousarray(state[:, sub])
        if q == 0.0:
            out[i:] = (Cs @ ws.T)[None]
            break
        q *= 1.0 + 1e-12
        # first stage resolves the fastest rate; later stages double in length
        t_end = max(t_now * 2.0, t_now + 256.0 / q)
        j = int(np.searchsorted(times, t_end, side="right"))
        if j >= times.size:
            t_end = max(t_now * 2.0, t_now + 256.0 / q)
            j = times.size
        lam_end = q * (t_end - t_now)
        n_terms = int(np.ceil(lam_end + SERIES_SPREAD * np.sqrt(lam_end) + 40.0)) + 1
        end_lo, end_w = _poisson_window(lam_end)
        n_terms = max(n_terms, end_lo + end_w.size)
        As = A[sub][:, sub]
        P = (sp.identity(sub.size, format="csr") + As / q).tocsr()
        proj, end = _kernels.power_series(
            P.indptr, P.indices, P.data, ws, Cs, n_terms, end_w, end_lo
        )
        if not np.all(np.isfinite(proj)):
            raise NumericalError("non-finite values in uniformization series")
        out[i:j] = _kernels.poisson_mix(proj, q * (times[i:j] - t_now), SERIES_SPREAD)
        i, t_now = j, t_end
        state = np.zeros_like(state)
        state[:, sub] = end
        seeds = (np.abs(state) > prune_tol * mass[:, None]).any(axis=0)
        active = _downward_closure(pattern, seeds)
    return out[..., 0] if squeeze else out


def fluorescence(state: LadderState, params: RateParams) -> float:
    """Photon emission rate ``gamma (n_nc + sum (J(J+1) - M(M-1)) P[J, M])``."""
    w = emission_weight(state.index.two_j, state.index.two_m)
    return float(params.gamma * (state.n_nc + w @ state.populations))


def fluorescence_series(traj: Trajectory, params: RateParams) -> FluorescenceTrace:
    c = fluorescence_weights(traj.index, params)
    return FluorescenceTrace(traj.times, traj.states @ c, {"sigma": traj.sigma})


def peak_rate(n: int, params: RateParams, n_points: int = 4000) -> tuple[float, float]:
    """Peak fluorescence and its time for ``n`` fully inverted spins.

    Only ``params.gamma`` is used: the burst is evaluated under pure collective
    decay.
    """
    bare = RateParams(params.gamma)
    index = build_index(n)
    A = build_rate_matrix(index, bare, 0, sparse=True)
    v0 = initial_state(index, ALL_UP).vector()
    c = fluorescence_weights(index, bare)
    # the burst occurs near ln(N) / (N gamma); cover several times that
    t_end = (2.0 * np.log(n + 1) + 4.0) / (n * params.gamma) * 2.0
    times = np.linspace(0.0, t_end, n_points)
    f = observe(A, v0, c, times)[:, 0]
    i = int(np.argmax(f))
    if 0 < i < n_points - 1:
        # parabolic refinement through the three samples around the maximum
        y0, y1, y2 = f[i - 1 : i + 2]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            shift = 0.5 * (y0 - y2) / denom
            dt = times[1] - times[0]
            return float(y1 - 0.25 * (y0 - y2) * shift), float(times[i] + shift * dt)
    return float(f[i]), float(times[i])


def peak_rate_scaling(n: int, params: RateParams) -> float:
    """Maximum over time of the fluorescence of ``n`` fully inverted spins."""
    return peak_rate(n, params)[0]


def scaling_exponent(ns, params: RateParams) -> float:
    """Least-squares slope of log(peak rate) against log(N)."""
    ns = np.asarray(list(ns), dtype=float)
    peaks = np.array([peak_rate_scaling(int(n), params) for n in ns])
    slope, _ = np.polyfit(np.log(ns), np.log(peaks), 1)
    return float(slope)
