"""Decay-histogram fitting: tail rate, 1/e lifetime, the superradiant ensemble
model and two non-collective baselines.

All fits share the same forward pipeline: photons per bin from the model,
discrete convolution with the instrument response, plus a constant
background. Linear amplitudes are solved in an inner step so the outer
searches only see the nonlinear rates.
"""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit, minimize, minimize_scalar, nnls

from .ensemble import (
    DEFAULT_CENTRE,
    DEFAULT_SPREAD,
    DomainEnsemble,
    domain_ensemble,
    sigma_observables,
)
from .errors import FitError, ValidationError
from .ladder import MAX_SPINS, MIXED, InitialStateSpec, RateParams
from .physics import BULK_ISC_0, BULK_ISC_1
from .propagate import IrfSpec, convolve_samples
from .units import mhz_to_rate

log = logging.getLogger(__name__)

PREPULSE_GUARD = 0.5e-9
# floor on expected counts; keeps the Poisson gradient finite where a model predicts ~0
_MU_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class DecayTrace:
    """Photon-count histogram. Times are relative to the excitation pulse."""

    bin_edges: np.ndarray
    counts: np.ndarray
    irf: IrfSpec = field(default_factory=lambda: IrfSpec.gaussian(110e-12))
    background: float | None = None
    source_id: str = ""

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise ValidationError("need len(bin_edges) == len(counts) + 1")
        if counts.size == 0:
            raise ValidationError("trace is empty")
        if not np.all(np.diff(edges) > 0):
            raise ValidationError("bin edges must be strictly increasing")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise ValidationError("counts must be finite and >= 0")
        if self.background is not None and not self.background >= 0:
            raise ValidationError("background must be >= 0")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def dt(self) -> float:
        """Bin width; the histogram must be uniform."""
        w = np.diff(self.bin_edges)
        if np.ptp(w) > 1e-6 * w.mean():
            raise ValidationError("bins are not uniform")
        return float(w.mean())

    def __len__(self):
        return self.counts.size


class Loss(enum.Enum):
    LEAST_SQUARES = "least_squares"
    POISSON_NLL = "poisson_nll"


PARAM_NAMES = ("n_max", "gamma", "gamma_d_0", "gamma_d_1", "p0")


@dataclass(frozen=True)
class FitConfig:
    """Search space and settings of :func:`fit_superradiant`.

    Rates are angular (rad/s); ``tail_window`` is a ``(start, stop)`` pair in
    seconds after excitation, ``None`` meaning ``(20 ns, end of trace)``.
    ``fixed`` pins any of ``n_max, gamma, gamma_d_0, gamma_d_1, p0``.
    """

    n_range: tuple = (1, 60)
    dephasing_bounds: dict = field(
        default_factory=lambda: {0: (mhz_to_rate(1.0), mhz_to_rate(3000.0)), 1: (mhz_to_rate(1.0), mhz_to_rate(3000.0))}
    )
    polarization_bounds: tuple = (0.0, 1.0)
    tail_window: tuple | None = None
    loss: Loss = Loss.POISSON_NLL
    fixed: dict = field(default_factory=dict)
    gamma_isc_0: float = BULK_ISC_0
    gamma_isc_1: float = BULK_ISC_1
    grid_points: int = 8
    max_sweeps: int = 8
    xtol: float = 1e-4
    refine_top: int = 3
    seed: int = 0
    initial: InitialStateSpec = MIXED
    centre: float = DEFAULT_CENTRE
    spread: float = DEFAULT_SPREAD

    def __post_init__(self):
        lo, hi = (int(x) for x in self.n_range)
        if not 1 <= lo <= hi <= MAX_SPINS:
            raise ValidationError(f"n_range must satisfy 1 <= lo <= hi <= {MAX_SPINS}")
        object.__setattr__(self, "n_range", (lo, hi))
        bounds = {}
        for sigma in (0, 1):
            b_lo, b_hi = self.dephasing_bounds[sigma]
            if not 0 < b_lo <= b_hi:
                raise ValidationError("dephasing bounds must satisfy 0 < lo <= hi")
            bounds[sigma] = (float(b_lo), float(b_hi))
        object.__setattr__(self, "dephasing_bounds", bounds)
        p_lo, p_hi = self.polarization_bounds
        if not 0.0 <= p_lo <= p_hi <= 1.0:
            raise ValidationError("polarization bounds must lie in [0, 1]")
        if self.tail_window is not None and not 0 <= self.tail_window[0] < self.tail_window[1]:
            raise ValidationError("tail window must be an increasing pair of times >= 0")
        object.__setattr__(self, "loss", Loss(self.loss))
        unknown = set(self.fixed) - set(PARAM_NAMES)
        if unknown:
            raise ValidationError(f"unknown fixed parameters: {sorted(unknown)}")
        if self.gamma_isc_0 < 0 or self.gamma_isc_1 < 0:
            raise ValidationError("ISC rates must be >= 0")
        if self.grid_points < 2 or self.max_sweeps < 1 or self.refine_top < 1 or not self.xtol > 0:
            raise ValidationError("need grid_points >= 2, max_sweeps >= 1, refine_top >= 1, xtol > 0")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of one model fit.

    ``params`` holds model-specific values for the baseline models; the
    named fields are filled by the superradiant fit. ``residual`` is the
    configured loss; ``ls_residual`` is the sum of squared residuals of the
    same best fit, which makes models comparable under either loss.
    """

    model: str
    residual: float
    ls_residual: float
    n_max: int | None = None
    gamma: float | None = None
    gamma_d_0: float | None = None
    gamma_d_1: float | None = None
    p0: float | None = None
    params: dict = field(default_factory=dict)
    per_model_scores: dict = field(default_factory=dict)
    covariance_estimate: np.ndarray | None = None
    initial_residual: float | None = None
    model_counts: np.ndarray | None = None
    flags: tuple = ()
    n_evals: int = 0

    def as_dict(self) -> dict:
        out = {"model": self.model, "residual": self.residual, "ls_residual": self.ls_residual}
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out.update(self.params)
        if self.flags:
            out["flags"] = ";".join(self.flags)
        return out


# ---------------------------------------------------------------- helpers


def estimate_background(trace: DecayTrace, t0: float = 0.0) -> float:
    """Mean counts of bins that end well before the pulse; falls back to ``trace.background`` or 0."""
    pre = trace.bin_edges[1:] <= t0 - PREPULSE_GUARD
    if pre.sum() >= 3:
        return float(trace.counts[pre].mean())
    return float(trace.background or 0.0)


def _loss(mu, k, kind: Loss) -> float:
    if kind is Loss.LEAST_SQUARES:
        return float(np.sum((mu - k) ** 2))
    mu = np.maximum(mu, _MU_FLOOR)
    # Poisson deviance: zero for a perfect model, so residuals stay >= 0
    term = mu - k
    pos = k > 0
    term[pos] += k[pos] * np.log(k[pos] / mu[pos])
    return float(2.0 * term.sum())


def _solve_amplitudes(basis, k, bg, kind: Loss, lower=None, upper=None):
    """Non-negative amplitudes ``x`` minimizing the loss of ``basis @ x + bg``.

    ``lower``/``upper`` optionally bound the fraction ``x[0] / sum(x)`` when
    there are two basis vectors.
    """
    x, _ = nnls(basis, k - bg)
    two = basis.shape[1] == 2
    bounded = two and lower is not None and (lower > 0 or upper < 1)
    if kind is Loss.LEAST_SQUARES and not bounded:
        return x
    if two:
        # reparametrize as (scale, fraction) so fraction bounds are box bounds
        s0 = max(x.sum(), 1e-12 * max(k.max(), 1.0))
        f0 = x[0] / x.sum() if x.sum() > 0 else 0.5
        lo, hi = (0.0, 1.0) if lower is None else (lower, upper)
        f0 = min(max(f0, lo), hi)

        def fun(z):
            s, f = z
            mu = s * (f * basis[:, 0] + (1 - f) * basis[:, 1]) + bg
            g = _dloss(mu, k, kind)
            d_s = g @ (f * basis[:, 0] + (1 - f) * basis[:, 1])
            d_f = g @ (s * (basis[:, 0] - basis[:, 1]))
            return _loss(mu, k, kind), np.array([d_s, d_f])

        res = minimize(fun, [s0, f0], jac=True, method="L-BFGS-B", bounds=[(0, None), (lo, hi)])
        s, f = res.x
        return np.array([s * f, s * (1 - f)])

    def fun(z):
        mu = basis @ z + bg
        g = _dloss(mu, k, kind)
        return _loss(mu, k, kind), basis.T @ g

    start = np.maximum(x, 1e-12 * max(k.max(), 1.0))
    res = minimize(fun, start, jac=True, method="L-BFGS-B", bounds=[(0, None)] * basis.shape[1])
    return res.x


def _dloss(mu, k, kind: Loss):
    if kind is Loss.LEAST_SQUARES:
        return 2.0 * (mu - k)
    return 2.0 * (1.0 - k / np.maximum(mu, _MU_FLOOR))


# ---------------------------------------------------------------- forward models


def model_bin_photons(ensemble: DomainEnsemble, params: RateParams, edges, spec=MIXED, sigma=None):
    """Expected photons per bin of a unit-size ensemble excited at ``t = 0``.

    ``sigma`` restricts to one projection, with its size distribution
    renormalized to unit weight.
    """
    edges = np.asarray(edges, dtype=float)
    pos = edges > 0
    times = np.concatenate([[0.0], edges[pos]])
    cumulative = np.zeros(edges.size)
    for s in (0, 1) if sigma is None else (sigma,):
        sizes = ensemble.sizes(s)
        if not sizes:
            continue
        if sigma is not None:
            total = sum(sizes.values())
            sizes = {n: p / total for n, p in sizes.items()}
        cumulative[pos] += sigma_observables(sizes, params, s, spec, times)[1:, 1]
    return np.diff(cumulative)


def simulate_trace(
    ensemble: DomainEnsemble,
    params: RateParams,
    bin_edges,
    irf: IrfSpec | None = None,
    peak_counts: float | None = 1e5,
    background: float = 0.0,
    seed: int | None = None,
    spec: InitialStateSpec = MIXED,
    source_id: str = "synthetic",
) -> DecayTrace:
    """Forward-simulated histogram, scaled so its expected maximum is ``peak_counts``.

    With a ``seed`` the counts are Poisson draws; without one they are the
    expected values.
    """
    irf = IrfSpec.gaussian(110e-12) if irf is None else irf
    edges = np.asarray(bin_edges, dtype=float)
    dt = float(np.diff(edges).mean())
    signal = convolve_samples(model_bin_photons(ensemble, params, edges, spec), dt, irf)
    if peak_counts is not None:
        signal = signal * (peak_counts / signal.max())
    mu = signal + background
    counts = mu if seed is None else np.random.default_rng(seed).poisson(mu).astype(float)
    return DecayTrace(edges, counts, irf, background if background else None, source_id)


def uniform_edges(t_start: float, t_stop: float, dt: float) -> np.ndarray:
    n = int(round((t_stop - t_start) / dt))
    return t_start + dt * np.arange(n + 1)


def _exp_bins(rate, edges):
    """Bin integrals of ``exp(-rate t)`` for ``t >= 0``."""
    e = np.maximum(edges, 0.0)
    if rate <= 0:
        return np.diff(e)
    return (np.exp(-rate * e[:-1]) - np.exp(-rate * e[1:])) / rate


def _sampled_bins(f, edges, sub=8):
    """Bin integrals of ``f(t)`` (zero for ``t < 0``) by midpoint sub-sampling."""
    w = np.diff(edges)
    frac = (np.arange(sub) + 0.5) / sub
    t = edges[:-1, None] + w[:, None] * frac[None, :]
    vals = np.where(t >= 0, f(np.maximum(t, 0.0)), 0.0)
    return vals.mean(axis=1) * w


# ---------------------------------------------------------------- rates and lifetimes


def _tail_selection(trace: DecayTrace, window, t0):
    t = trace.centers - t0
    if window is None:
        window = (20e-9, t[-1] + 1.0)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    return sel, t


def _fit_tail(trace, window, t0, offsets):
    """Best shared rate ``x`` for ``sum_i A_i exp(-(x + offsets_i) t)`` on the tail window."""
    bg = estimate_background(trace, t0)
    sel, t = _tail_selection(trace, window, t0)
    k = trace.counts[sel]
    edges = np.concatenate([trace.bin_edges[:-1][sel], [trace.bin_edges[1:][sel][-1]]]) - t0 if sel.any() else None
    above = k > bg + 3.0 * np.sqrt(max(bg, 1.0))
    if edges is None or above.sum() < 10:
        raise FitError("insufficient tail statistics: fewer than 10 bins above background")
    span = edges[-1] - edges[0]
    width = float(np.diff(edges).mean())
    lo, hi = np.log(1e-3 / span), np.log(1.0 / width)
    cache = {}

    def profile(logx):
        x = np.exp(logx)
        basis = np.column_stack([_exp_bins(x + o, edges) for o in offsets])
        amps = _solve_amplitudes(basis, k, bg, Loss.POISSON_NLL)
        cache[logx] = amps
        return _loss(basis @ amps + bg, k, Loss.POISSON_NLL)

    # coarse scan then bounded refinement keeps the 1-D search off local minima
    grid = np.linspace(lo, hi, 41)
    vals = [profile(g) for g in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(profile, bounds=(a, b), method="bounded", options={"xatol": 1e-8})
    x = float(np.exp(res.x))
    if res.x <= lo + 1e-3 or res.x >= hi - 1e-3:
        raise FitError("tail decay not resolved inside the window (rate at search bound)")
    amps = cache.get(res.x)
    if amps is None or amps.sum() <= 0:
        raise FitError("no decaying component found in the tail")
    return x


def tail_fit_rate(trace: DecayTrace, window=None, t0: float = 0.0) -> float:
    """Single-exponential decay rate (1/s) of the tail."""
    return _fit_tail(trace, window, t0, (0.0,))


def tail_fit_gamma(
    trace: DecayTrace,
    window=None,
    isc: tuple = (BULK_ISC_0, BULK_ISC_1),
    t0: float = 0.0,
) -> float:
    """Radiative rate ``gamma`` from the late-time tail.

    The tail is modeled as one exponential per projection with rates
    ``gamma + isc[i]`` and free amplitudes, so ``gamma`` comes out with the
    dark decay already removed. Pass a single ISC rate to fit one
    exponential and subtract it.
    """
    isc = tuple(np.atleast_1d(np.asarray(isc, dtype=float)))
    x = _fit_tail(trace, window, t0, isc)
    if x <= 0:
        raise FitError("fitted radiative rate is not positive")
    return x


def lifetime_1e(trace: DecayTrace, window: float = 1e-9, t0: float = 0.0) -> float:
    """1/e time of a single exponential fitted over ``[t_peak, t_peak + window]``."""
    bg = estimate_background(trace, t0)
    y = trace.counts - bg
    t = trace.centers
    after = t >= t0
    if not after.any() or y[after].max() <= 0:
        raise FitError("no peak above background")
    i = int(np.flatnonzero(after)[np.argmax(y[after])])
    sel = (t >= t[i]) & (t <= t[i] + window)
    if sel.sum() < 5:
        raise FitError(f"only {sel.sum()} bins in the lifetime window; need 5")
    ts, ys = t[sel] - t[i], y[sel]
    sigma = np.sqrt(np.maximum(trace.counts[sel], 1.0))
    # log-linear estimate seeds the nonlinear fit
    good = ys > 0
    guess = window
    if good.sum() >= 2:
        slope = np.polyfit(ts[good], np.log(ys[good]), 1)[0]
        if slope < 0:
            guess = -1.0 / slope
    try:
        p, _ = curve_fit(
            lambda x, a, tau: a * np.exp(-x / tau), ts, ys, p0=[ys[0], guess], sigma=sigma, maxfev=5000
        )
    except RuntimeError as exc:
        raise FitError(f"lifetime fit failed: {exc}") from exc
    if not p[1] > 0:
        raise FitError("lifetime fit returned a non-positive time constant")
    return float(p[1])


# ---------------------------------------------------------------- superradiant fit


class _Problem:
    """Shared data for one fit: trace, background, convolution, loss."""

    def __init__(self, trace: DecayTrace, loss: Loss, t0: float = 0.0):
        self.trace = trace
        self.dt = trace.dt
        self.t0 = t0
        self.edges = trace.bin_edges - t0
        self.k = trace.counts
        self.bg = estimate_background(trace, t0)
        self.loss = loss
        self.evals = 0

    def convolve(self, photons):
        return convolve_samples(photons, self.dt, self.trace.irf)

    def score(self, basis, lower=None, upper=None):
        self.evals += 1
        amps = _solve_amplitudes(basis, self.k, self.bg, self.loss, lower, upper)
        mu = basis @ amps + self.bg
        return _loss(mu, self.k, self.loss), amps, mu


def _log_grid(lo, hi, n):
    return np.linspace(np.log(lo), np.log(hi), n)


class _Profile:
    """Model for one largest domain size: per-sigma bases cached by log dephasing rate."""

    def __init__(self, problem: _Problem, config: FitConfig, n: int, gamma: float):
        self.problem = problem
        self.config = config
        self.n = n
        self.gamma = gamma
        self.sizes = domain_ensemble(n, 0.5, config.centre, config.spread)
        self.cache = ({}, {})
        fixed = config.fixed
        self.p_bounds = config.polarization_bounds
        if "p0" in fixed:
            self.p_bounds = (float(fixed["p0"]),) * 2
        self.axes = []
        self.free = []
        for sigma in (0, 1):
            name = f"gamma_d_{sigma}"
            if name in fixed:
                self.axes.append(np.array([np.log(float(fixed[name]))]))
            else:
                self.axes.append(_log_grid(*config.dephasing_bounds[sigma], config.grid_points))
                self.free.append(sigma)

    def basis(self, sigma, x):
        hit = self.cache[sigma].get(x)
        if hit is None:
            g_d = float(np.exp(x))
            params = RateParams(self.gamma, self.config.gamma_isc_0, self.config.gamma_isc_1, g_d, g_d)
            photons = model_bin_photons(self.sizes, params, self.problem.edges, self.config.initial, sigma=sigma)
            hit = self.cache[sigma][x] = self.problem.convolve(photons)
        return hit

    def evaluate(self, x0, x1):
        basis = np.column_stack([self.basis(0, x0), self.basis(1, x1)])
        return self.problem.score(basis, *self.p_bounds)

    def scan(self):
        """Grid search plus one line-search sweep from the best point on each side of the diagonal.

        The sweep makes residuals of different sizes comparable; the grid
        alone is too coarse to rank them.
        """
        self.first = None
        self.starts = {}
        for x0 in self.axes[0]:
            for x1 in self.axes[1]:
                val = self.evaluate(x0, x1)[0]
                if self.first is None:
                    self.first = val
                side = x0 <= x1
                if side not in self.starts or val < self.starts[side][0]:
                    self.starts[side] = (val, x0, x1)
        self.starts = {side: self._sweep(*start, sweeps=1)[0] for side, start in self.starts.items()}
        self.residual = min(v[0] for v in self.starts.values())
        return self.residual

    def _sweep(self, val, x0, x1, sweeps):
        """Coordinate-wise bounded Brent searches; returns ``((val, x0, x1), still_moving)``."""
        config = self.config
        x = [x0, x1]
        moved = bool(self.free)
        for _ in range(sweeps):
            if not moved:
                break
            moved = False
            for s in self.free:
                b_lo, b_hi = np.log(config.dephasing_bounds[s])
                step = (b_hi - b_lo) / (config.grid_points - 1)
                lo, hi = max(b_lo, x[s] - step), min(b_hi, x[s] + step)

                def line(z, s=s):
                    y = list(x)
                    y[s] = float(z)
                    return self.evaluate(*y)[0]

                res = minimize_scalar(line, bounds=(lo, hi), method="bounded", options={"xatol": config.xtol})
                if res.fun < val:
                    moved = moved or abs(res.x - x[s]) > config.xtol
                    x[s], val = float(res.x), float(res.fun)
        return (val, x[0], x[1]), moved

    def refine(self, both_sides: bool = True):
        """Continue the line searches to convergence; returns the best result dict."""
        starts = sorted(self.starts.values())
        if not both_sides:
            starts = starts[:1]
        best, converged = None, True
        for start in starts:
            point, moving = self._sweep(*start, sweeps=self.config.max_sweeps)
            if best is None or point[0] <= best[0]:
                best, converged = point, not moving
        val, x0, x1 = best
        _, amps, mu = self.evaluate(x0, x1)
        total = amps.sum()
        return {
            "n_max": self.n,
            "residual": val,
            "gamma_d_0": float(np.exp(x0)),
            "gamma_d_1": float(np.exp(x1)),
            "p0": float(amps[0] / total) if total > 0 else 0.5,
            "mu": mu,
            "converged": converged,
        }


def _search_n(evaluate, lo: int, hi: int) -> dict:
    """Minimize ``evaluate(n)`` over the integers in ``[lo, hi]``.

    Small ranges are enumerated. Larger ones get a geometric coarse pass,
    then the bracket around the current minimum is sampled until every
    integer in it has been seen.
    """
    seen = {}
    if hi - lo <= 8:
        for n in range(lo, hi + 1):
            seen[n] = evaluate(n)
        return seen
    for n in np.unique(np.round(np.geomspace(lo, hi, 9)).astype(int)):
        seen[int(n)] = evaluate(int(n))
    while True:
        ranked = sorted(seen)
        best = min(seen, key=seen.get)
        pos = ranked.index(best)
        left = ranked[max(pos - 1, 0)]
        right = ranked[min(pos + 1, len(ranked) - 1)]
        gaps = [m for m in range(left, right + 1) if m not in seen]
        if not gaps:
            return seen
        pick = np.unique(np.round(np.linspace(left, right, 6)).astype(int))
        for m in [int(m) for m in pick if m not in seen] or gaps[:1]:
            seen[m] = evaluate(m)


def fit_superradiant(trace: DecayTrace, config: FitConfig | None = None, t0: float = 0.0) -> FitResult:
    """Fit the superradiant ensemble model to a decay histogram.

    ``gamma`` comes from :func:`tail_fit_gamma` unless pinned. Every
    candidate largest domain size is scored on a log grid of the two
    dephasing rates (polarization and amplitude are solved in an inner
    step); the ``config.refine_top`` best sizes are then refined by
    coordinate-wise bounded line searches. The two projections differ only through their ISC rates,
    so the refinement starts from the best grid point on each side of
    ``gamma_d_0 = gamma_d_1`` to avoid the label-swapped basin.
    """
    config = FitConfig() if config is None else config
    if len(trace) < 100:
        raise ValidationError("need at least 100 bins")
    problem = _Problem(trace, config.loss, t0)
    if "gamma" in config.fixed:
        gamma = float(config.fixed["gamma"])
    else:
        gamma = tail_fit_gamma(trace, config.tail_window, (config.gamma_isc_0, config.gamma_isc_1), t0)
    lo, hi = config.n_range
    if "n_max" in config.fixed:
        lo = hi = int(config.fixed["n_max"])

    profiles = {}

    def scan(n):
        profiles[n] = _Profile(problem, config, n, gamma)
        val = profiles[n].scan()
        log.debug("n_max=%d grid residual=%.6g", n, val)
        return val

    seen = _search_n(scan, lo, hi)
    first = profiles[lo].first
    ranked = sorted(seen, key=seen.get)[: config.refine_top]
    refined = [profiles[n].refine(both_sides=(k == 0)) for k, n in enumerate(ranked)]
    best = min(refined, key=lambda r: r["residual"])

    flags = []
    n_best = best["n_max"]
    if n_best == hi and hi > lo:
        flags.append("n_max_at_bound")
        warnings.warn(f"best n_max={n_best} sits at the upper search bound", stacklevel=2)
    if n_best == 1:
        flags.append("dephasing_unidentifiable")
    result = FitResult(
        model="superradiant",
        residual=best["residual"],
        ls_residual=float(np.sum((best["mu"] - problem.k) ** 2)),
        n_max=n_best,
        gamma=gamma,
        gamma_d_0=best["gamma_d_0"],
        gamma_d_1=best["gamma_d_1"],
        p0=best["p0"],
        per_model_scores={"superradiant": best["residual"]},
        initial_residual=first,
        model_counts=best["mu"],
        flags=tuple(flags),
        n_evals=problem.evals,
    )
    if not best["converged"]:
        raise FitError("dephasing search still moving after max_sweeps", best=result)
    return result


# ---------------------------------------------------------------- baseline models


def _fit_parametric(problem: _Problem, make_basis, starts, bounds, max_evals=2000):
    """Outer Nelder-Mead over log-parameters with inner linear amplitudes; best of several starts."""
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def objective(z):
        z = np.clip(z, lo, hi)
        return problem.score(make_basis(z))[0]

    best = None
    for s in starts:
        res = minimize(
            objective, np.clip(s, lo, hi), method="Nelder-Mead", bounds=bounds,
            options={"xatol": 1e-7, "fatol": 1e-10, "maxfev": max_evals},
        )
        if best is None or res.fun < best.fun:
            best = res
    z = np.clip(best.x, lo, hi)
    val, amps, mu = problem.score(make_basis(z))
    return z, val, amps, mu, best


def _rate_bounds(problem: _Problem):
    span = problem.edges[-1] - max(problem.edges[0], 0.0)
    return np.log(0.1 / span), np.log(2.0 / problem.dt)


def fit_biexponential(trace: DecayTrace, loss: Loss = Loss.LEAST_SQUARES, t0: float = 0.0) -> FitResult:
    """Two exponentials with free amplitudes and rates, IRF-convolved, on the estimated background."""
    problem = _Problem(trace, Loss(loss), t0)
    lo, hi = _rate_bounds(problem)

    def make_basis(z):
        return np.column_stack([problem.convolve(_exp_bins(np.exp(x), problem.edges)) for x in z])

    starts = [np.array([a, b]) for a, b in ((lo + 0.6 * (hi - lo), lo + 0.3 * (hi - lo)), (lo + 0.8 * (hi - lo), lo + 0.5 * (hi - lo)), (lo + 0.45 * (hi - lo), lo + 0.2 * (hi - lo)))]
    z, val, amps, mu, res = _fit_parametric(problem, make_basis, starts, [(lo, hi)] * 2)
    rates = np.exp(z)
    order = np.argsort(-rates)
    return FitResult(
        model="biexponential",
        residual=val,
        ls_residual=float(np.sum((mu - problem.k) ** 2)),
        params={
            "rate_fast": float(rates[order[0]]),
            "rate_slow": float(rates[order[1]]),
            "amp_fast": float(amps[order[0]]),
            "amp_slow": float(amps[order[1]]),
        },
        per_model_scores={"biexponential": val},
        model_counts=mu,
        n_evals=problem.evals,
    )


def deformed_exponential(t, tau: float, a: float):
    """``exp(-t / tau) exp(-a sqrt(t / tau))``: dipole-dipole quenching on top of free decay."""
    x = np.asarray(t, dtype=float) / tau
    return np.exp(-x - a * np.sqrt(x))


def fit_deformed_exponential(
    trace: DecayTrace, coupling: float | None = None, loss: Loss = Loss.LEAST_SQUARES, t0: float = 0.0
) -> FitResult:
    """Fit ``I0 exp(-t/tau) exp(-a sqrt(t/tau))``; ``coupling`` pins ``a``, otherwise it is fitted."""
    problem = _Problem(trace, Loss(loss), t0)
    lo, hi = _rate_bounds(problem)
    tau_bounds = (-hi, -lo)  # log tau

    def make_basis(z):
        tau = np.exp(z[0])
        a = coupling if coupling is not None else float(np.exp(z[1]) - 1e-3)
        photons = _sampled_bins(lambda t: deformed_exponential(t, tau, max(a, 0.0)), problem.edges)
        return problem.convolve(photons)[:, None]

    if coupling is not None:
        if coupling < 0:
            raise ValidationError("coupling must be >= 0")
        starts = [np.array([x]) for x in np.linspace(*tau_bounds, 5)[1:-1]]
        bounds = [tau_bounds]
    else:
        a_bounds = (np.log(1e-3), np.log(100.0))
        starts = [np.array([x, y]) for x in np.linspace(*tau_bounds, 5)[1:-1] for y in (np.log(1e-3), np.log(1.0))]
        bounds = [tau_bounds, a_bounds]
    z, val, amps, mu, res = _fit_parametric(problem, make_basis, starts, bounds)
    a = coupling if coupling is not None else float(np.exp(z[1]) - 1e-3)
    return FitResult(
        model="deformed_exponential",
        residual=val,
        ls_residual=float(np.sum((mu - problem.k) ** 2)),
        params={"tau": float(np.exp(z[0])), "coupling": max(a, 0.0), "amplitude": float(amps[0])},
        per_model_scores={"deformed_exponential": val},
        model_counts=mu,
        n_evals=problem.evals,
    )


@dataclass(frozen=True, eq=False)
class ModelComparison:
    results: dict
    errors: dict

    def ls_ratios(self, reference: str = "superradiant") -> dict:
        """Least-squares residual of each model divided by that of ``reference``."""
        ref = self.results.get(reference)
        if ref is None or ref.ls_residual <= 0:
            return {}
        return {name: r.ls_residual / ref.ls_residual for name, r in self.results.items()}

    def table(self) -> list:
        rows = []
        ratios = self.ls_ratios()
        for name in ("superradiant", "biexponential", "deformed_exponential"):
            if name in self.results:
                r = self.results[name]
                rows.append({"model": name, "residual": r.residual, "ls_residual": r.ls_residual, "ls_ratio": ratios.get(name, float("nan"))})
            elif name in self.errors:
                rows.append({"model": name, "error": self.errors[name]})
        return rows


def compare_models(trace: DecayTrace, config: FitConfig | None = None, t0: float = 0.0) -> ModelComparison:
    """Fit all three models with the same loss, background and IRF; sub-fit failures are recorded."""
    config = FitConfig() if config is None else config
    if len(trace) == 0 or trace.counts.sum() <= 0:
        raise ValidationError("trace holds no counts")
    fits = {
        "superradiant": lambda: fit_superradiant(trace, config, t0),
        "biexponential": lambda: fit_biexponential(trace, config.loss, t0),
        "deformed_exponential": lambda: fit_deformed_exponential(trace, None, config.loss, t0),
    }
    results, errors = {}, {}
    for name, run in fits.items():
        try:
            results[name] = run()
        except FitError as exc:
            errors[name] = str(exc)
            if exc.best is not None:
                results[name] = exc.best
        except ValidationError as exc:
            errors[name] = str(exc)
    scores = {name: r.residual for name, r in results.items()}
    results = {name: replace(r, per_model_scores=scores) for name, r in results.items()}
    return ModelComparison(results, errors)
