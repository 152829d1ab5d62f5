"""Dicke-ladder state space and the rate-equation generator.

A domain of ``N`` collectively decaying spins is described by the populations
``P[J, M]`` of the symmetric states of every collective subspace
``J = 1/2, 1, ..., N/2`` (spins lost to dephasing or intersystem crossing leave
the domain one at a time, so all smaller ladders are reachable). Half-integers
are stored as the integers ``2J`` and ``2M`` throughout.

The generator acts on an extended vector: the ladder populations followed by
four bookkeeping rows,

``n_nc``
    mean number of excited spins that have left the collective space;
``vacant``
    probability that the domain has no collective spin left (intersystem
    crossing out of ``J = 1/2``);
``emitted``
    cumulative number of emitted photons; its time derivative is the
    fluorescence rate;
``dark``
    cumulative number of excitations lost through intersystem crossing.

With these rows both ``sum(P) + vacant`` and
``sum((J + M) P) + n_nc + emitted + dark`` are exact invariants.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NumericalError, ValidationError

MAX_SPINS = 100

N_EXTRA = 4
NC, VACANT, EMITTED, DARK = range(N_EXTRA)

SIGMA_LABELS = (0, 1)

NEGATIVE_CLAMP = 1e-12


def _twice(x) -> int:
    """Return ``2 x`` as an int, insisting that ``x`` is a half-integer."""
    two_x = 2 * float(x)
    k = round(two_x)
    if abs(two_x - k) > 1e-9:
        raise DomainError(f"{x!r} is not a half-integer")
    return int(k)


def check_sigma(sigma) -> int:
    """Normalize a spin-projection label to 0 (m_s = 0) or 1 (m_s = +-1)."""
    s = abs(int(sigma))
    if s not in SIGMA_LABELS:
        raise DomainError(f"spin projection must be 0 or +-1, got {sigma!r}")
    return s


@dataclass(frozen=True)
class LadderIndex:
    """Bijection between ``(2J, 2M)`` pairs and vector positions.

    Ladders are stored by increasing ``J``; inside a ladder ``M`` increases
    from ``-J`` to ``J``.
    """

    max_spins: int
    two_j: np.ndarray = field(repr=False, compare=False)
    two_m: np.ndarray = field(repr=False, compare=False)
    offsets: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.two_j)

    @property
    def extended_dim(self) -> int:
        return self.dim + N_EXTRA

    def position(self, two_j: int, two_m: int) -> int:
        if two_j not in self.offsets:
            raise DomainError(f"2J={two_j} not in index with N={self.max_spins}")
        if abs(two_m) > two_j or (two_j - two_m) % 2:
            raise DomainError(f"2M={two_m} invalid for 2J={two_j}")
        return self.offsets[two_j] + (two_m + two_j) // 2

    def __getitem__(self, jm) -> int:
        j, m = jm
        return self.position(_twice(j), _twice(m))

    def ladder_slice(self, two_j: int) -> slice:
        start = self.offsets[two_j]
        return slice(start, start + two_j + 1)

    @property
    def excitations(self) -> np.ndarray:
        """Collective excitation number ``J + M`` of every entry."""
        return (self.two_j + self.two_m) // 2


def index_dimension(n: int) -> int:
    return (n * n + 3 * n) // 2


def build_index(n: int) -> LadderIndex:
    """Index all collective subspaces of a domain of ``n`` spins."""
    if int(n) != n or n < 1:
        raise DomainError(f"number of spins must be a positive integer, got {n!r}")
    n = int(n)
    if n > MAX_SPINS:
        raise DomainError(f"N={n} exceeds the implementation cap of {MAX_SPINS}")
    two_j, two_m, offsets = [], [], {}
    for tj in range(1, n + 1):
        offsets[tj] = len(two_j)
        for tm in range(-tj, tj + 1, 2):
            two_j.append(tj)
            two_m.append(tm)
    return LadderIndex(
        max_spins=n,
        two_j=np.asarray(two_j, dtype=np.int64),
        two_m=np.asarray(two_m, dtype=np.int64),
        offsets=offsets,
    )


def emission_weight(two_j, two_m):
    """``J(J+1) - M(M-1)``, the expectation of S+ S- in ``|J, M>``.

    Works elementwise on integer arrays of ``2J`` and ``2M``.
    """
    two_j = np.asarray(two_j)
    two_m = np.asarray(two_m)
    return (two_j * (two_j + 2) - two_m * (two_m - 2)) / 4.0


def collective_rate(j, m, gamma: float) -> float:
    """Collective photon emission rate ``gamma (J(J+1) - M(M-1))`` of ``|J, M>``."""
    tj, tm = _twice(j), _twice(m)
    if tj < 0 or abs(tm) > tj or (tj - tm) % 2:
        raise DomainError(f"|M| <= J violated or mismatched parity: J={j}, M={m}")
    return float(gamma * emission_weight(tj, tm))


@dataclass(frozen=True)
class RateParams:
    """Per-spin-projection rates, all angular frequencies in rad/s."""

    gamma: float
    gamma_isc_0: float = 0.0
    gamma_isc_1: float = 0.0
    gamma_d_0: float = 0.0
    gamma_d_1: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "gamma_isc_0", "gamma_isc_1", "gamma_d_0", "gamma_d_1"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
        if self.gamma <= 0:
            raise ValidationError("gamma must be > 0")

    def isc(self, sigma) -> float:
        return self.gamma_isc_0 if check_sigma(sigma) == 0 else self.gamma_isc_1

    def dephasing(self, sigma) -> float:
        return self.gamma_d_0 if check_sigma(sigma) == 0 else self.gamma_d_1

    def tail_rate(self, sigma) -> float:
        """Decay rate of an isolated excited spin, ``gamma + gamma_isc``."""
        return self.gamma + self.isc(sigma)


class InitialKind(enum.Enum):
    MAXIMALLY_MIXED = "mixed"
    ALL_UP = "allup"
    CUSTOM = "custom"


@dataclass(frozen=True)
class InitialStateSpec:
    kind: InitialKind = InitialKind.MAXIMALLY_MIXED
    custom_weights: tuple | None = None

    def __post_init__(self):
        kind = InitialKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is InitialKind.CUSTOM:
            if self.custom_weights is None:
                raise ValidationError("custom initial state needs custom_weights")
            w = np.asarray(self.custom_weights, dtype=float)
            if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
                raise ValidationError("custom weights must be non-negative and sum to 1")
            object.__setattr__(self, "custom_weights", tuple(float(x) for x in w))


MIXED = InitialStateSpec(InitialKind.MAXIMALLY_MIXED)
ALL_UP = InitialStateSpec(InitialKind.ALL_UP)


@dataclass
class LadderState:
    """Populations of one domain (or a mixture of domains) for one ``sigma``."""

    index: LadderIndex
    populations: np.ndarray
    sigma: int = 0
    n_nc: float = 0.0
    vacant: float = 0.0
    emitted: float = 0.0
    dark: float = 0.0

    def __post_init__(self):
        self.sigma = check_sigma(self.sigma)
        self.populations = np.asarray(self.populations, dtype=float)
        if self.populations.shape != (self.index.dim,):
            raise ValidationError(
                f"populations have shape {self.populations.shape}, "
                f"index expects ({self.index.dim},)"
            )

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.populations, [self.n_nc, self.vacant, self.emitted, self.dark]]
        )

    @classmethod
    def from_vector(cls, index: LadderIndex, v, sigma=0) -> "LadderState":
        v = clamp_negative(np.asarray(v, dtype=float))
        d = index.dim
        return cls(index, v[:d].copy(), sigma, *map(float, v[d:d + N_EXTRA]))

    def population(self, j, m) -> float:
        return float(self.populations[self.index[j, m]])

    def total_probability(self) -> float:
        """Collective probability plus the vacant sink; conserved."""
        return float(self.populations.sum() + self.vacant)

    def excitation_count(self) -> float:
        """Excitations in the domain plus those already emitted or lost dark."""
        collective = float(self.index.excitations @ self.populations)
        return collective + self.n_nc + self.emitted + self.dark


def clamp_negative(v: np.ndarray, tol: float = NEGATIVE_CLAMP) -> np.ndarray:
    """Zero tiny negative round-off; larger negatives are a failed integration."""
    if not np.all(np.isfinite(v)):
        raise NumericalError("non-finite values in propagated state")
    worst = v.min(initial=0.0)
    if worst < -tol:
        raise NumericalError(f"population {worst:.3e} below -{tol:g}")
    return np.where(v < 0, 0.0, v)


def initial_state(
    index: LadderIndex,
    spec: InitialStateSpec = MIXED,
    sigma=0,
    n_spins: int | None = None,
) -> LadderState:
    """Populate the top ladder ``J = n_spins / 2`` of a domain.

    ``n_spins`` defaults to the index size; a smaller value places a smaller
    domain inside a larger index, which evolves identically because population
    never moves to larger ``J``.
    """
    n = index.max_spins if n_spins is None else int(n_spins)
    if n < 1 or n > index.max_spins:
        raise DomainError(f"domain size {n} outside 1..{index.max_spins}")
    pops = np.zeros(index.dim)
    top = index.ladder_slice(n)
    if spec.kind is InitialKind.MAXIMALLY_MIXED:
        pops[top] = 1.0 / (n + 1)
    elif spec.kind is InitialKind.ALL_UP:
        pops[index.position(n, n)] = 1.0
    else:
        w = np.asarray(spec.custom_weights)
        if w.size != n + 1:
            raise ValidationError(f"custom weights need {n + 1} entries (M=-J..J), got {w.size}")
        pops[top] = w
    return LadderState(index, pops, sigma)


def build_rate_matrix(index: LadderIndex, params: RateParams, sigma=0, sparse: bool = False):
    """Generator of the extended population vector for spin projection ``sigma``.

    Per ladder entry ``(J, M)``: collective decay to ``(J, M-1)`` at
    ``gamma (J(J+1) - M(M-1))``; dephasing+projection to ``(J-1/2, M-1/2)`` at
    ``2J gamma_d (1 - (M/J)^2)``, which also feeds ``n_nc``; intersystem crossing
    to ``(J-1/2, M-1/2)`` (or the vacant sink from ``J = 1/2``) at
    ``(J+M) gamma_isc``. ``n_nc`` decays at ``gamma + gamma_isc``.

    Returns a dense array, or CSR when ``sparse`` is true.
    """
    sigma = check_sigma(sigma)
    g = params.gamma
    g_isc = params.isc(sigma)
    g_d = params.dephasing(sigma)
    d = index.dim
    nc, vac, emi, drk = (d + k for k in range(N_EXTRA))
    tj, tm = index.two_j, index.two_m
    src = np.arange(d)

    rows, cols, vals = [], [], []

    def add(r, c, v):
        v = np.asarray(v, dtype=float)
        keep = v != 0
        rows.append(np.asarray(r)[keep])
        cols.append(np.asarray(c)[keep])
        vals.append(v[keep])

    w1 = g * emission_weight(tj, tm)
    deph = g_d * tj * (1.0 - (tm / tj) ** 2)
    isc = g_isc * (tj + tm) / 2.0

    add(src, src, -(w1 + deph + isc))

    # collective decay inside a ladder; w1 vanishes at M = -J
    down = tm > -tj
    add(src[down] - 1, src[down], w1[down])
    add(np.full(d, emi), src, w1)

    # dephasing+projection and ISC both land on (J-1/2, M-1/2)
    lower = (tj > 1) & (tm > -tj)
    dest = np.zeros(d, dtype=np.int64)
    for two_j in range(2, index.max_spins + 1):
        sl = index.ladder_slice(two_j)
        # (J, M) -> position of (J-1/2, M-1/2) in ladder 2J-1
        dest[sl] = index.offsets[two_j - 1] + (tm[sl] - 1 + (two_j - 1)) // 2
    add(dest[lower], src[lower], deph[lower] + isc[lower])
    add(np.full(d, nc), src, deph)
    single = tj == 1
    add(np.full(int(single.sum()), vac), src[single], isc[single])
    add(np.full(d, drk), src, isc)

    add([nc], [nc], [-(g + g_isc)])
    add([emi], [nc], [g])
    add([drk], [nc], [g_isc])

    n = index.extended_dim
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    return mat if sparse else mat.toarray()


def dephasing_outflux(state: LadderState, params: RateParams) -> float:
    """Rate at which spins leave the collective space into ``n_nc``."""
    g_d = params.dephasing(state.sigma)
    tj, tm = state.index.two_j, state.index.two_m
    return float(g_d * np.sum((1.0 - (tm / tj) ** 2) * tj * state.populations))


def fluorescence_weights(index: LadderIndex, params: RateParams) -> np.ndarray:
    """Row vector ``c`` with ``F = c . v`` on the extended vector."""
    c = np.zeros(index.extended_dim)
    c[: index.dim] = params.gamma * emission_weight(index.two_j, index.two_m)
    c[index.dim + NC] = params.gamma
    return c
