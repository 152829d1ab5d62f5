"""Brute-force reference engine for small domains.

Each spin has a ground level ``g``, an excited level ``e`` and, when ISC
is on, a dark level ``D``. The density matrix of all ``N <= 4`` spins is
evolved under the Lindblad equation with

* collective decay, jump operator ``sqrt(gamma) S-``;
* local dephasing, ``sqrt(gamma_d / 2) sz_j`` on each spin, which damps
  single-spin coherences at ``gamma_d``;
* local ISC, ``sqrt(gamma_isc) |D><e|_j``.

Dicke populations of the ladder model are read out by projecting on
symmetric states of the spins that are not dark. Collective decay and ISC
keep a symmetric start inside that sector, so the reduced rate equations
are exact there; local dephasing is not, and only toleranced agreement is
expected.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, factorial, sqrt

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import CapabilityError, DomainError, ValidationError
from .ladder import LadderState, RateParams, _twice, build_index, check_sigma
from .propagate import _as_times

MAX_ORACLE_SPINS = 4
G, E, D = 0, 1, 2


def dicke_state_coefficients(n: int, m) -> float:
    """Normalization ``sqrt((J+M)! (J-M)! / (2J)!)`` of the symmetric state ``|N/2, M>``."""
    if int(n) != n or n < 1:
        raise DomainError("N must be a positive integer")
    tm = _twice(m)
    if abs(tm) > n or (n - tm) % 2:
        raise DomainError(f"|M| <= J violated for N={n}, M={m}")
    up = (n + tm) // 2
    return sqrt(factorial(up) * factorial(n - up) / factorial(n))


@dataclass(frozen=True)
class DickeBasisOperator:
    matrix: np.ndarray
    role: str


def dicke_ladder_operators(n: int) -> dict:
    """``S+``, ``S-``, ``Sz`` on the top ladder ``|N/2, M>``, ordered by increasing ``M``."""
    j = n / 2.0
    ms = np.arange(-j, j + 1)
    lower = np.zeros((ms.size, ms.size))
    for k in range(1, ms.size):
        m = ms[k]
        lower[k - 1, k] = sqrt((j + m) * (j - m + 1))
    return {
        "S-": DickeBasisOperator(lower, "S-"),
        "S+": DickeBasisOperator(lower.T.copy(), "S+"),
        "Sz": DickeBasisOperator(np.diag(ms), "Sz"),
    }


class SpinSpace:
    """Product space of ``n`` spins with ``levels`` local states."""

    def __init__(self, n: int, levels: int):
        if n > MAX_ORACLE_SPINS:
            raise CapabilityError(f"the exact engine handles N <= {MAX_ORACLE_SPINS}, got {n}")
        if n < 1:
            raise DomainError("N must be >= 1")
        self.n = n
        self.levels = levels
        self.dim = levels**n

    def local(self, op: np.ndarray, site: int) -> sp.csr_matrix:
        out = sp.identity(1, format="csr")
        for k in range(self.n):
            out = sp.kron(out, op if k == site else sp.identity(self.levels), format="csr")
        return out

    def ket(self, config) -> int:
        idx = 0
        for level in config:
            idx = idx * self.levels + level
        return idx

    def lowering(self) -> sp.csr_matrix:
        s = np.zeros((self.levels, self.levels))
        s[G, E] = 1.0
        return sum(self.local(s, k) for k in range(self.n)).tocsr()

    def symmetric_state(self, active: tuple, m2: int) -> np.ndarray:
        """``|n_a/2, M>`` on the spins in ``active`` (``m2 = 2M``), the rest dark."""
        n_a = len(active)
        up = (n_a + m2) // 2
        psi = np.zeros(self.dim)
        c = dicke_state_coefficients(n_a, m2 / 2.0) if n_a else 1.0
        for excited in combinations(active, up):
            cfg = [D] * self.n
            for k in active:
                cfg[k] = E if k in excited else G
            psi[self.ket(cfg)] = c
        return psi


def _superop(jumps, dim) -> sp.csr_matrix:
    """Column-stacked Lindblad superoperator with no Hamiltonian."""
    eye = sp.identity(dim, format="csr")
    total = sp.csr_matrix((dim * dim, dim * dim))
    for L in jumps:
        L = sp.csr_matrix(L)
        LdL = (L.conj().T @ L).tocsr()
        total = total + sp.kron(L.conj(), L) - 0.5 * sp.kron(eye, LdL) - 0.5 * sp.kron(LdL.T, eye)
    return total.tocsr()


@dataclass
class OracleTrajectory:
    times: np.ndarray
    states: list
    populations: np.ndarray  # (n_times, ladder dim), ladder-model ordering
    intensity: np.ndarray  # <S+ S-> in units of gamma
    dark: np.ndarray  # expected number of dark spins
    trace: np.ndarray
    min_eigenvalue: np.ndarray
    hermiticity: np.ndarray


class ExactModel:
    """Lindblad model of ``n`` spins for one spin projection."""

    def __init__(self, n: int, params: RateParams, sigma=0):
        sigma = check_sigma(sigma)
        g_isc = params.isc(sigma)
        g_d = params.dephasing(sigma)
        levels = 3 if g_isc > 0 else 2
        self.space = space = SpinSpace(n, levels)
        self.params = params
        self.sigma = sigma
        self.s_minus = space.lowering()
        self.s_plus = self.s_minus.T.conj().tocsr()
        self.intensity_op = (self.s_plus @ self.s_minus).tocsr()
        jumps = [sqrt(params.gamma) * self.s_minus]
        if g_d > 0:
            sz = np.zeros((levels, levels))
            sz[E, E], sz[G, G] = 1.0, -1.0
            jumps += [sqrt(g_d / 2.0) * space.local(sz, k) for k in range(n)]
        if g_isc > 0:
            to_dark = np.zeros((levels, levels))
            to_dark[D, E] = 1.0
            jumps += [sqrt(g_isc) * space.local(to_dark, k) for k in range(n)]
        self.generator = _superop(jumps, space.dim)
        self.index = build_index(n)
        self._projectors = self._ladder_projectors()
        if levels == 3:
            dark = np.zeros((levels, levels))
            dark[D, D] = 1.0
            self.dark_op = sum(space.local(dark, k) for k in range(n)).tocsr()
        else:
            self.dark_op = None

    def _ladder_projectors(self):
        """For each ladder entry, the symmetric kets that make up its population."""
        space, idx = self.space, self.index
        kets = {}
        for pos, (tj, tm) in enumerate(zip(idx.two_j, idx.two_m)):
            n_active = int(tj)
            n_dark = space.n - n_active
            if n_dark and space.levels == 2:
                continue
            vecs = []
            for dark_set in combinations(range(space.n), n_dark):
                active = tuple(k for k in range(space.n) if k not in dark_set)
                vecs.append(space.symmetric_state(active, int(tm)))
            kets[pos] = np.array(vecs)
        return kets

    def density_from_state(self, state: LadderState) -> np.ndarray:
        """Diagonal density matrix of a top-ladder population vector."""
        if state.index.max_spins != self.space.n:
            raise ValidationError("state and model have different N")
        idx = state.index
        top = idx.ladder_slice(idx.max_spins)
        if abs(state.populations.sum() - state.populations[top].sum()) > 1e-15 or state.n_nc:
            raise ValidationError("the oracle accepts populations on the top ladder only")
        rho = np.zeros((self.space.dim, self.space.dim))
        all_spins = tuple(range(self.space.n))
        for p, tm in zip(state.populations[top], idx.two_m[top]):
            if p:
                psi = self.space.symmetric_state(all_spins, int(tm))
                rho += p * np.outer(psi, psi)
        return rho

    def _as_rho(self, rho0):
        if isinstance(rho0, LadderState):
            return self.density_from_state(rho0)
        rho = np.asarray(rho0)
        if rho.shape != (self.space.dim, self.space.dim):
            raise ValidationError("density matrix has the wrong shape")
        return rho

    def propagate(self, rho0, times) -> list:
        times = _as_times(times)
        vec = self._as_rho(rho0).reshape(-1, order="F").astype(complex)
        out, t_prev = [], 0.0
        for t in times:
            if t > t_prev:
                vec = expm_multiply(self.generator * (t - t_prev), vec)
                t_prev = t
            out.append(vec.reshape(self.space.dim, self.space.dim, order="F"))
        return out

    def ladder_populations(self, rho) -> np.ndarray:
        pops = np.zeros(self.index.dim)
        for pos, vecs in self._projectors.items():
            pops[pos] = float(np.real(np.einsum("ki,ij,kj->", vecs, rho, vecs)))
        return pops

    def intensity(self, rho) -> float:
        return float(np.real((self.intensity_op @ rho).trace()))

    def evolve(self, rho0, times) -> OracleTrajectory:
        times = _as_times(times)
        states = self.propagate(rho0, times)
        herm = np.array([np.abs(r - r.conj().T).max() for r in states])
        return OracleTrajectory(
            times=times,
            states=states,
            populations=np.array([self.ladder_populations(r) for r in states]),
            intensity=np.array([self.intensity(r) for r in states]),
            dark=np.array(
                [0.0 if self.dark_op is None else float(np.real((self.dark_op @ r).trace())) for r in states]
            ),
            trace=np.array([float(np.real(r.trace())) for r in states]),
            min_eigenvalue=np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for r in states]),
            hermiticity=herm,
        )


def lindblad_evolve_exact(n: int, params: RateParams, rho0, grid, sigma=0) -> OracleTrajectory:
    """Exact density-matrix evolution for ``n <= 4`` spins; see the module docstring."""
    model = ExactModel(n, params, sigma)
    times = _as_times(grid.times() if hasattr(grid, "times") else grid)
    return model.evolve(rho0, times)


def brute_force_g2(n: int, rho0) -> float:
    """``Tr[S+ S+ S- S- rho] / Tr[S+ S- rho]^2`` by direct operator products."""
    space = SpinSpace(n, 2)
    s_minus = space.lowering().toarray()
    s_plus = s_minus.T
    if isinstance(rho0, LadderState):
        model = ExactModel(n, RateParams(1.0))
        rho = model.density_from_state(rho0)
    else:
        rho = np.asarray(rho0)
    first = float(np.real(np.trace(s_plus @ s_minus @ rho)))
    if first <= 1e-15:
        raise DomainError("state has no excitation")
    second = float(np.real(np.trace(s_plus @ s_plus @ s_minus @ s_minus @ rho)))
    return second / first**2


def brute_force_g2_delayed(n: int, params: RateParams, rho0, times, sigma=0) -> np.ndarray:
    """``Tr[S+S- e^{Lt}(S- rho S+)] / (Tr[S+S- rho] Tr[S+S- e^{Lt} rho])`` by quantum regression."""
    model = ExactModel(n, params, sigma)
    rho = model._as_rho(rho0)
    jumped = (model.s_minus @ rho @ model.s_plus.toarray())
    i0 = model.intensity(rho)
    if i0 <= 1e-15:
        raise DomainError("state has no excitation")
    num = np.array([model.intensity(r) for r in model.propagate(jumped, times)])
    den = np.array([model.intensity(r) for r in model.propagate(rho, times)]) * i0
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def multinomial_check(n: int, m) -> float:
    """``c^2 * C(N, J+M)``, which equals 1 for a normalized symmetric state."""
    c = dicke_state_coefficients(n, m)
    return c * c * comb(n, (n + _twice(m)) // 2)
