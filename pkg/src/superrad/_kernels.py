"""Compiled inner loops for uniformization.

Vectors are stored row-wise: ``V[b]`` is the ``b``-th state vector.
"""
import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def power_series(indptr, indices, data, V, C, n_terms, end_weights, end_lo):
    """Project ``P^k V`` on the rows of ``C`` for ``k < n_terms``.

    Also returns ``sum_k end_weights[k - end_lo] P^k V``, the state at the end
    of the stage.
    """
    m, n = V.shape
    r = C.shape[0]
    proj = np.empty((n_terms, r, m))
    w = V.copy()
    nxt = np.empty_like(w)
    end = np.zeros_like(w)
    end_hi = end_lo + end_weights.size
    for k in range(n_terms):
        for b in range(m):
            wb = w[b]
            for a in range(r):
                acc = 0.0
                for i in range(n):
                    acc += C[a, i] * wb[i]
                proj[k, a, b] = acc
            if end_lo <= k < end_hi:
                ew = end_weights[k - end_lo]
                eb = end[b]
                for i in range(n):
                    eb[i] += ew * wb[i]
        if k + 1 == n_terms:
            break
        for b in range(m):
            wb = w[b]
            nb_ = nxt[b]
            for i in range(n):
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    acc += data[p] * wb[indices[p]]
                nb_[i] = acc
        w, nxt = nxt, w
    return proj, end


@nb.njit(cache=True)
def _mix_flat(proj, lams, spread):
    n_terms, width = proj.shape
    out = np.zeros((lams.size, width))
    for i in range(lams.size):
        lam = lams[i]
        row = out[i]
        if lam == 0.0:
            row[:] = proj[0]
            continue
        span = spread * math.sqrt(lam) + 40.0
        lo = max(0, int(lam - span))
        hi = min(n_terms, int(math.ceil(lam + span)) + 1)
        # walk outward from the mode with the ratio recurrence
        mode = min(max(int(lam), lo), hi - 1)
        p_mode = math.exp(mode * math.log(lam) - lam - math.lgamma(mode + 1.0))
        pk = p_mode
        for k in range(mode, hi):
            src = proj[k]
            for c in range(width):
                row[c] += pk * src[c]
            pk *= lam / (k + 1.0)
        pk = p_mode
        for k in range(mode - 1, lo - 1, -1):
            pk *= (k + 1.0) / lam
            src = proj[k]
            for c in range(width):
                row[c] += pk * src[c]
    return out


def poisson_mix(proj, lams, spread):
    """``out[i] = sum_k Poisson(k; lams[i]) proj[k]`` over a window of ``spread`` sd."""
    n_terms, r, m = proj.shape
    flat = np.ascontiguousarray(proj.reshape(n_terms, r * m))
    return _mix_flat(flat, np.ascontiguousarray(lams, dtype=np.float64), float(spread)).reshape(lams.size, r, m)
