# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: builtin radial kernels, Hamilton's equations and the
Euler-Maruyama path loop. Same formulas and call signatures as ``_pycore``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, pow, sqrt, isfinite, INFINITY

cnp.import_array()

cdef enum:
    LAPLACIAN = 0
    C1_BESSEL = 1
    GAUSSIAN = 2
    LOG_MODIFIED = 3
    POWER_GAP = 4

cdef double C1_CUT = 0.1
# coefficients of r^k, k = 2..21, in 1 - (1+r)e^{-r}
cdef double C1_COEF[20]


def _init_series():
    cdef int k
    cdef double fact = 1.0
    for k in range(2, 22):
        fact *= k
        C1_COEF[k - 2] = (1.0 if k % 2 == 0 else -1.0) * (k - 1) / fact


_init_series()


cdef inline double c1_gap_half(double r) noexcept nogil:
    cdef double acc = 0.0
    cdef int k
    if r >= C1_CUT:
        return 1.0 - (1.0 + r) * exp(-r)
    for k in range(19, -1, -1):
        acc = (acc + C1_COEF[k]) * r
    return acc * r


cdef inline double gap_c(int kid, const double* prm, double r) noexcept nogil:
    if kid == LAPLACIAN:
        return -expm1(-r)
    elif kid == C1_BESSEL:
        return 2.0 * c1_gap_half(r)
    elif kid == GAUSSIAN:
        return -expm1(-r * r)
    elif kid == LOG_MODIFIED:
        if r <= 0.5:
            if r <= 0.0:
                return 0.0
            return r * r * pow(1.0 - log(r), prm[0])
        return 1.0 - prm[1] * exp(-prm[2] * (r - 0.5))
    else:
        if r <= prm[2]:
            return prm[0] * pow(r, prm[1])
        return 1.0 - 0.5 * exp(-prm[3] * (r - prm[2]))


cdef inline double eval_c(int kid, const double* prm, double r) noexcept nogil:
    if kid == LAPLACIAN:
        return exp(-r)
    elif kid == C1_BESSEL:
        return 2.0 * (1.0 + r) * exp(-r)
    elif kid == GAUSSIAN:
        return exp(-r * r)
    elif kid == LOG_MODIFIED:
        if r <= 0.5:
            return 1.0 - gap_c(kid, prm, r)
        return prm[1] * exp(-prm[2] * (r - 0.5))
    else:
        if r <= prm[2]:
            return 1.0 - prm[0] * pow(r, prm[1])
        return 0.5 * exp(-prm[3] * (r - prm[2]))


cdef inline double deriv_c(int kid, const double* prm, double r) noexcept nogil:
    cdef double ell
    if kid == LAPLACIAN:
        return -exp(-r)
    elif kid == C1_BESSEL:
        return -2.0 * r * exp(-r)
    elif kid == GAUSSIAN:
        return -2.0 * r * exp(-r * r)
    elif kid == LOG_MODIFIED:
        if r <= 0.5:
            if r <= 0.0:
                return 0.0
            ell = 1.0 - log(r)
            return -r * pow(ell, prm[0] - 1.0) * (2.0 * ell - prm[0])
        return -prm[2] * prm[1] * exp(-prm[2] * (r - 0.5))
    else:
        if r <= prm[2]:
            return -prm[0] * prm[1] * pow(r, prm[1] - 1.0)
        return -0.5 * prm[3] * exp(-prm[3] * (r - prm[2]))


cdef inline void coeffs_c(int kid, const double* prm, double r,
                          double* g, double* kv, double* kd) noexcept nogil:
    # gap, K and K' at r > 0 sharing the transcendental calls
    cdef double e, ell, pw
    if kid == LAPLACIAN:
        e = expm1(-r)
        g[0] = -e
        kv[0] = 1.0 + e
        kd[0] = -kv[0]
    elif kid == C1_BESSEL:
        e = exp(-r)
        kv[0] = 2.0 * (1.0 + r) * e
        kd[0] = -2.0 * r * e
        g[0] = 2.0 * c1_gap_half(r) if r < C1_CUT else 2.0 - kv[0]
    elif kid == GAUSSIAN:
        e = expm1(-r * r)
        g[0] = -e
        kv[0] = 1.0 + e
        kd[0] = -2.0 * r * kv[0]
    elif kid == LOG_MODIFIED:
        if r <= 0.5:
            ell = 1.0 - log(r)
            pw = pow(ell, prm[0] - 1.0)
            g[0] = r * r * ell * pw
            kv[0] = 1.0 - g[0]
            kd[0] = -r * pw * (2.0 * ell - prm[0])
        else:
            kv[0] = prm[1] * exp(-prm[2] * (r - 0.5))
            g[0] = 1.0 - kv[0]
            kd[0] = -prm[2] * kv[0]
    else:
        if r <= prm[2]:
            pw = pow(r, prm[1] - 1.0)
            g[0] = prm[0] * r * pw
            kv[0] = 1.0 - g[0]
            kd[0] = -prm[0] * prm[1] * pw
        else:
            kv[0] = 0.5 * exp(-prm[3] * (r - prm[2]))
            g[0] = 1.0 - kv[0]
            kd[0] = -prm[3] * kv[0]


def _params(params):
    buf = np.zeros(4, dtype=np.float64)
    buf[:len(params)] = params
    return buf


def k_gap(int kid, params, r):
    cdef double[::1] prm = _params(params)
    arr = np.asarray(r, dtype=np.float64)
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    cdef double[::1] fv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(fv.shape[0]):
        ov[i] = gap_c(kid, &prm[0], fv[i])
    return out[0] if arr.ndim == 0 else out.reshape(arr.shape)


def k_eval(int kid, params, r):
    cdef double[::1] prm = _params(params)
    arr = np.asarray(r, dtype=np.float64)
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    cdef double[::1] fv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(fv.shape[0]):
        ov[i] = eval_c(kid, &prm[0], fv[i])
    return out[0] if arr.ndim == 0 else out.reshape(arr.shape)


def k_deriv(int kid, params, r):
    cdef double[::1] prm = _params(params)
    arr = np.asarray(r, dtype=np.float64)
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    cdef double[::1] fv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(fv.shape[0]):
        ov[i] = deriv_c(kid, &prm[0], fv[i])
    return out[0] if arr.ndim == 0 else out.reshape(arr.shape)


def hamilton_rhs(const double[:, ::1] x, const double[:, ::1] p, int kid, params):
    """dx_i = K(0) P - sum_{j!=i} gap_ij p_j ; dp_i = -sum_{j!=i} K'(.) (x_i-x_j)/|.| <p_i,p_j>."""
    cdef double[::1] prm = _params(params)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    dx_arr = np.zeros((n, d))
    dp_arr = np.zeros((n, d))
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dp = dp_arr
    cdef Py_ssize_t i, j, k
    cdef double r2, r, gv, kd, pp, coef, diff, tot
    cdef double k0 = eval_c(kid, &prm[0], 0.0)
    with nogil:
        for k in range(d):
            tot = 0.0
            for i in range(n):
                tot += p[i, k]
            for i in range(n):
                dx[i, k] = k0 * tot
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                pp = 0.0
                for k in range(d):
                    diff = x[i, k] - x[j, k]
                    r2 += diff * diff
                    pp += p[i, k] * p[j, k]
                r = sqrt(r2)
                gv = gap_c(kid, &prm[0], r)
                kd = deriv_c(kid, &prm[0], r)
                coef = kd / r * pp
                for k in range(d):
                    dx[i, k] -= gv * p[j, k]
                    dx[j, k] -= gv * p[i, k]
                    diff = x[i, k] - x[j, k]
                    dp[i, k] -= coef * diff
                    dp[j, k] += coef * diff
    return dx_arr, dp_arr


def hamiltonian(const double[:, ::1] x, const double[:, ::1] p, int kid, params):
    """1/2 K(0)|P|^2 - sum_{i<j} gap_ij <p_i,p_j>."""
    cdef double[::1] prm = _params(params)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, r2, pp, diff, tot
    cdef double k0 = eval_c(kid, &prm[0], 0.0)
    with nogil:
        for k in range(d):
            tot = 0.0
            for i in range(n):
                tot += p[i, k]
            total += 0.5 * k0 * tot * tot
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                pp = 0.0
                for k in range(d):
                    diff = x[i, k] - x[j, k]
                    r2 += diff * diff
                    pp += p[i, k] * p[j, k]
                total -= gap_c(kid, &prm[0], sqrt(r2)) * pp
    return total


def min_pair_distance(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best = INFINITY, r2, diff
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for k in range(d):
                    diff = x[i, k] - x[j, k]
                    r2 += diff * diff
                if r2 < best:
                    best = r2
    return sqrt(best)


def em_advance(int kid, params, int dim, double[::1] r, const double[:, ::1] z,
               double sqdt, double dt, const double[::1] thresholds,
               long long[:, ::1] hit, long long step0):
    """Euler-Maruyama for dr = sigma(r) dB + b(r) dt over one block of normals.

    Semantics match ``_pycore.em_advance`` with the radial coefficients
    sigma = sqrt(2 gap), b = ((d-1)K - K0) K' / (K0 + K).
    """
    cdef double[::1] prm = _params(params)
    cdef const double* pp = &prm[0]
    cdef Py_ssize_t m = z.shape[0], nk = z.shape[1], nt = thresholds.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double rr, kv, g, kd, b, s, k0 = eval_c(kid, pp, 0.0)
    cdef int ok = 1
    with nogil:
        for i in range(m):
            if hit[i, nt - 1] >= 0:
                continue
            rr = r[i]
            for k in range(nk):
                coeffs_c(kid, pp, rr, &g, &kv, &kd)
                s = sqrt(2.0 * g) if g > 0.0 else 0.0
                b = ((dim - 1) * kv - k0) * kd / (k0 + kv)
                rr = rr + b * dt + s * sqdt * z[i, k]
                if not isfinite(rr):
                    ok = 0
                    break
                for j in range(nt):
                    if rr <= thresholds[j] and hit[i, j] < 0:
                        hit[i, j] = step0 + k + 1
                if rr <= thresholds[nt - 1]:
                    break
            r[i] = rr
            if not ok:
                break
    return bool(ok)
