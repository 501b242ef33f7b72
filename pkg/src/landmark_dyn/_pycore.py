"""Pure-Python (numpy) implementation of the numerical hot paths.

Mirrors ``_core.pyx`` function for function. The compiled module is used when
it is importable; this one is the fallback and the reference the compiled
kernels are benchmarked and tested against.
"""

import math

import numpy as np

LAPLACIAN, C1_BESSEL, GAUSSIAN, LOG_MODIFIED, POWER_GAP = range(5)

# 1 - (1+r)e^{-r} = sum_{k>=2} (-1)^k (k-1) r^k / k!
_C1_SERIES = np.array(
    [(-1.0) ** k * (k - 1) / math.factorial(k) for k in range(2, 22)]
)
_C1_SERIES_CUT = 0.1


def _c1_gap_half(r):
    # 1 - (1+r) e^{-r}, accurate for small r
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r < _C1_SERIES_CUT
    if np.any(small):
        rs = r[small]
        acc = np.zeros_like(rs)
        for coef in _C1_SERIES[::-1]:
            acc = (acc + coef) * rs
        out[small] = acc * rs
    big = ~small
    out[big] = 1.0 - (1.0 + r[big]) * np.exp(-r[big])
    return out


def k_gap(kid, params, r):
    """Return K(0) - K(r) for builtin kernel ``kid`` (vectorised)."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if kid == LAPLACIAN:
        out = -np.expm1(-r)
    elif kid == C1_BESSEL:
        out = 2.0 * _c1_gap_half(r)
    elif kid == GAUSSIAN:
        out = -np.expm1(-r * r)
    elif kid == LOG_MODIFIED:
        c, amp, rate = params[0], params[1], params[2]
        out = np.empty_like(r)
        inner = r <= 0.5
        ri = r[inner]
        with np.errstate(divide="ignore", invalid="ignore"):
            gi = ri * ri * (1.0 - np.log(ri)) ** c
        out[inner] = np.where(ri > 0.0, gi, 0.0)
        ro = r[~inner]
        out[~inner] = 1.0 - amp * np.exp(-rate * (ro - 0.5))
    elif kid == POWER_GAP:
        dcoef, gamma, r1, rate = params[0], params[1], params[2], params[3]
        out = np.empty_like(r)
        inner = r <= r1
        out[inner] = dcoef * r[inner] ** gamma
        out[~inner] = 1.0 - 0.5 * np.exp(-rate * (r[~inner] - r1))
    else:
        raise ValueError(f"unknown kernel id {kid}")
    return out[0] if scalar else out


def k_eval(kid, params, r):
    """Return K(r) for builtin kernel ``kid``."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if kid == LAPLACIAN:
        out = np.exp(-r)
    elif kid == C1_BESSEL:
        out = 2.0 * (1.0 + r) * np.exp(-r)
    elif kid == GAUSSIAN:
        out = np.exp(-r * r)
    elif kid == LOG_MODIFIED:
        amp, rate = params[1], params[2]
        out = np.empty_like(r)
        inner = r <= 0.5
        out[inner] = 1.0 - k_gap(kid, params, r[inner])
        out[~inner] = amp * np.exp(-rate * (r[~inner] - 0.5))
    elif kid == POWER_GAP:
        r1, rate = params[2], params[3]
        out = np.empty_like(r)
        inner = r <= r1
        out[inner] = 1.0 - k_gap(kid, params, r[inner])
        out[~inner] = 0.5 * np.exp(-rate * (r[~inner] - r1))
    else:
        raise ValueError(f"unknown kernel id {kid}")
    return out[0] if scalar else out


def k_deriv(kid, params, r):
    """Return K'(r) for builtin kernel ``kid``; callers keep r > 0."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if kid == LAPLACIAN:
        out = -np.exp(-r)
    elif kid == C1_BESSEL:
        out = -2.0 * r * np.exp(-r)
    elif kid == GAUSSIAN:
        out = -2.0 * r * np.exp(-r * r)
    elif kid == LOG_MODIFIED:
        c, amp, rate = params[0], params[1], params[2]
        out = np.empty_like(r)
        inner = r <= 0.5
        ri = r[inner]
        with np.errstate(divide="ignore", invalid="ignore"):
            ell = 1.0 - np.log(ri)
            di = -ri * ell ** (c - 1.0) * (2.0 * ell - c)
        out[inner] = np.where(ri > 0.0, di, 0.0)
        ro = r[~inner]
        out[~inner] = -rate * amp * np.exp(-rate * (ro - 0.5))
    elif kid == POWER_GAP:
        dcoef, gamma, r1, rate = params[0], params[1], params[2], params[3]
        out = np.empty_like(r)
        inner = r <= r1
        out[inner] = -dcoef * gamma * r[inner] ** (gamma - 1.0)
        out[~inner] = -0.5 * rate * np.exp(-rate * (r[~inner] - r1))
    else:
        raise ValueError(f"unknown kernel id {kid}")
    return out[0] if scalar else out


def hamilton_rhs(x, p, kgap, kderiv, k0):
    """Right-hand side of Hamilton's equations for n landmarks.

    Uses sum_j K_ij p_j = K(0) P - sum_{j != i} gap_ij p_j, which avoids the
    cancellation of K(0) p_i against K_ij p_j when colliding landmarks carry
    large opposite momenta. ``kgap`` and ``kderiv`` act elementwise.
    """
    n = x.shape[0]
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    off = ~np.eye(n, dtype=bool)
    gmat = np.zeros((n, n))
    gmat[off] = kgap(dist[off])
    dx = float(k0) * p.sum(axis=0)[None, :] - gmat @ p
    coef = np.zeros((n, n))
    coef[off] = kderiv(dist[off]) / dist[off]
    coef *= p @ p.T
    dp = -np.einsum("ij,ijk->ik", coef, diff)
    return dx, dp


def hamiltonian(x, p, kgap, k0):
    """1/2 sum_ij K_ij <p_i,p_j> evaluated as 1/2 K(0)|P|^2 - sum_{i<j} gap_ij <p_i,p_j>."""
    n = x.shape[0]
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    iu = np.triu_indices(n, 1)
    gaps = kgap(dist[iu])
    total_p = p.sum(axis=0)
    return 0.5 * float(k0) * float(total_p @ total_p) - float(np.sum(gaps * (p @ p.T)[iu]))


def min_pair_distance(x):
    n = x.shape[0]
    best = math.inf
    for i in range(n - 1):
        dd = np.sqrt(np.sum((x[i + 1:] - x[i]) ** 2, axis=1))
        best = min(best, float(dd.min()))
    return best


def em_advance(sigma, drift, r, z, sqdt, dt, thresholds, hit, step0):
    """Advance Euler-Maruyama paths over one block of pre-drawn normals.

    Parameters
    ----------
    sigma, drift : callable
        Vectorised coefficient maps.
    r : ndarray, shape (m,)
        Current radii; updated in place.
    z : ndarray, shape (m, k)
        Standard normals, one row per path.
    thresholds : ndarray
        Absorption levels in decreasing order; the last one stops the path.
    hit : ndarray of int64, shape (m, len(thresholds))
        First step index at which ``r <= thresholds[j]``; -1 while unhit.
        Updated in place.
    step0 : int
        Global index of the first step in this block.

    Returns
    -------
    bool
        False if a coefficient produced a non-finite radius.
    """
    last = len(thresholds) - 1
    alive = hit[:, last] < 0
    for k in range(z.shape[1]):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        rr = r[idx]
        rn = rr + drift(rr) * dt + sigma(rr) * sqdt * z[idx, k]
        if not np.all(np.isfinite(rn)):
            return False
        r[idx] = rn
        for j, level in enumerate(thresholds):
            newly = idx[(rn <= level) & (hit[idx, j] < 0)]
            hit[newly, j] = step0 + k + 1
        alive[idx[rn <= thresholds[last]]] = False
    return True
