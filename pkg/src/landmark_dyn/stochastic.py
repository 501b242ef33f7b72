"""Radial diffusion of two Brownian landmarks and its hitting behaviour at 0.

The separation r_t of two landmarks under Brownian motion of the landmark
metric solves

    dr = sigma(r) dB + b(r) dt,
    sigma(r) = sqrt(2 (K(0) - K(r))),
    b(r) = ((d - 1) K(r) - K(0)) K'(r) / (K(0) + K(r)).

Whether r hits 0 with positive probability is decided by three integral tests
on (sigma, b) near 0 (Cherny-Engelbert). This module evaluates those tests
with the singular-integral engine of :mod:`completeness` and estimates the
hitting probability by Euler-Maruyama Monte Carlo.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats

from . import _backend, _pycore
from . import completeness as cmp
from .kernels import Kernel

HITS_ZERO = "hits_zero_positive_prob"
CONDITIONS_NOT_MET = "conditions_not_met"
INCONCLUSIVE = "inconclusive"

DEFAULT_EPS_HIT = 1e-4
SENSITIVITY_EPS = (1e-3, 1e-4, 1e-5)


class SimulationError(RuntimeError):
    """A coefficient evaluation produced a non-finite radius."""


@dataclass(frozen=True)
class SdeCoeffs:
    """Diffusion and drift maps of the radial SDE (vectorised in r).

    ``kernel`` is None for hand-built coefficient stubs; those always run on
    the numpy path.
    """

    sigma: Callable
    drift: Callable
    d: int
    kernel: Kernel | None = field(default=None, repr=False)


def sde_coeffs(kernel: Kernel, d: int) -> SdeCoeffs:
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    k0 = kernel.k0

    def sigma(r):
        return np.sqrt(2.0 * np.maximum(kernel.gap(r), 0.0))

    def drift(r):
        kv = kernel.eval(r)
        return ((d - 1) * kv - k0) * kernel.deriv(r) / (k0 + kv)

    return SdeCoeffs(sigma, drift, d, kernel)


def rho(kernel: Kernel, d: int, a: float, r):
    """Density of the scale function normalised to rho(a) = 1.

    rho(r) = (gap(a)/gap(r))^(1 - d/2) ((K0 + K(a))/(K0 + K(r)))^(-d/2),
    evaluated in logs. For d = 2 the gap factor drops out.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("rho is defined for r > 0 only")
    k0 = kernel.k0
    with np.errstate(divide="ignore"):
        out = -0.5 * d * (np.log(k0 + kernel.eval(a)) - np.log(k0 + kernel.eval(r)))
        if d != 2:
            out = out + (1.0 - 0.5 * d) * (np.log(kernel.gap(a)) - np.log(kernel.gap(r)))
    return np.exp(out)


def rho_by_quadrature(kernel: Kernel, d: int, a: float, r: float) -> float:
    """exp(int_r^a 2 b / sigma^2), integrated in log r."""
    if not 0 < r <= a:
        raise ValueError("need 0 < r <= a")
    co = sde_coeffs(kernel, d)

    def f(t):
        y = math.exp(t)
        return float(co.drift(y)) / float(kernel.gap(y)) * y

    val, _ = integrate.quad(f, math.log(r), math.log(a), epsabs=0.0, epsrel=1e-12, limit=400)
    return math.exp(val)


class ScaleFunction:
    """s(r) = int_0^r rho, tabulated in t = log r.

    Panels of width ``h`` in t are integrated by 8-point Gauss-Legendre and
    accumulated; s(r) is the table value at the panel below plus a
    Gauss-Legendre integral over the partial panel, so s is smooth in r to
    rounding level. Below the first representable point a power-law head
    s ~ r^(alpha+1) is used.
    """

    _nodes, _weights = np.polynomial.legendre.leggauss(8)

    def __init__(self, kernel: Kernel, d: int, a: float, t_min: float = -690.0, h: float = 0.05):
        self._rho = lambda r: rho(kernel, d, a, r)
        t = np.arange(math.log(a), t_min, -h)[::-1]
        r = np.exp(t)
        with np.errstate(all="ignore"):
            rv = self._rho(r)
        good = np.isfinite(rv) & (rv * r > 0)
        # keep the contiguous representable block ending at a
        bad = np.flatnonzero(~good)
        start = bad[-1] + 1 if bad.size else 0
        if len(t) - start < 8:
            raise cmp.QuadratureError("rho is not representable near r = a")
        t, rv = t[start:], rv[start:]
        # local exponent of rho at the bottom gives the head int_0^{r0} rho
        alpha = (math.log(rv[4]) - math.log(rv[0])) / (t[4] - t[0])
        if alpha <= -1.0:
            raise cmp.QuadratureError("rho is not integrable at 0; s(r) is infinite")
        head = rv[0] * math.exp(t[0]) / (alpha + 1.0)
        panels = self._gl(t[:-1], t[1:])
        self.t = t
        self.cum = head + np.concatenate([[0.0], np.cumsum(panels)])
        self.alpha = alpha

    def _gl(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        half = 0.5 * (hi - lo)
        tt = 0.5 * (hi + lo)[..., None] + half[..., None] * self._nodes
        rr = np.exp(tt)
        return half * np.sum(self._weights * self._rho(rr) * rr, axis=-1)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        tt = np.log(r)
        k = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 1)
        inside = tt >= self.t[0]
        t_in = np.where(inside, tt, self.t[0])
        out = self.cum[k] + self._gl(self.t[k], t_in)
        with np.errstate(over="ignore"):
            below = self.cum[0] * np.exp((self.alpha + 1.0) * np.minimum(tt - self.t[0], 0.0))
        return np.where(inside, out, below)


@dataclass
class CeReport:
    I_rho: cmp.IntegralVerdict
    I_speed: cmp.IntegralVerdict
    I_speed_s: cmp.IntegralVerdict
    conclusion: str
    d: int
    a: float
    heuristic: bool = False

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "a": self.a,
            "heuristic": self.heuristic,
            "I_rho": self.I_rho.to_json(),
            "I_speed": self.I_speed.to_json(),
            "I_speed_s": self.I_speed_s.to_json(),
            "conclusion": self.conclusion,
        }


def ce_conclusion(rho_status: str, speed_status: str, speed_s_status: str) -> str:
    """Combine the three verdicts.

    Hitting 0 with positive probability needs (convergent, divergent,
    convergent). A verdict that certainly contradicts this pattern settles the
    matter; otherwise any inconclusive verdict makes the conclusion inconclusive.
    """
    want = (cmp.CONVERGENT, cmp.DIVERGENT, cmp.CONVERGENT)
    got = (rho_status, speed_status, speed_s_status)
    for w, g in zip(want, got):
        if g not in (w, cmp.INCONCLUSIVE):
            return CONDITIONS_NOT_MET
    if cmp.INCONCLUSIVE in got:
        return INCONCLUSIVE
    return HITS_ZERO


def default_ce_a(kernel: Kernel) -> float:
    # log_modified is defined by its closed form on [0, 1/2] only
    return 0.4 if kernel.name == "log_modified" else 1.0


def ce_classify(kernel: Kernel, d: int = 2, a: float | None = None,
                opts: cmp.QuadOpts | None = None) -> CeReport:
    """Evaluate the three integral conditions on (0, a]."""
    a = default_ce_a(kernel) if a is None else float(a)
    co = sde_coeffs(kernel, d)

    def f_rho(r):
        return float(rho(kernel, d, a, r))

    def speed(r):
        return (1.0 + abs(float(co.drift(r)))) / (f_rho(r) * 2.0 * float(kernel.gap(r)))

    v_rho = cmp.improper_integral(f_rho, a, opts)
    v_speed = cmp.improper_integral(speed, a, opts)
    if v_rho.status == cmp.CONVERGENT:
        s_fun = ScaleFunction(kernel, d, a)
        v_speed_s = cmp.improper_integral(lambda r: speed(r) * float(s_fun(r)), a, opts)
    else:
        v_speed_s = cmp.IntegralVerdict(cmp.INCONCLUSIVE, None, [],
                                        reason="s(r) undefined: integral of rho not finite")
    concl = ce_conclusion(v_rho.status, v_speed.status, v_speed_s.status)
    return CeReport(v_rho, v_speed, v_speed_s, concl, d, a, heuristic=(d != 2 or kernel.heuristic))


# ------------------------------------------------------------ Monte Carlo

def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    z = stats.norm.ppf(0.5 + level / 2.0)
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # the endpoints are exact at k = 0 and k = n; avoid rounding residue there
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return float(lo), float(hi)


@dataclass
class HittingEstimate:
    n_paths: int
    n_hits: int
    horizon: float
    r0: float
    p_hat: float
    ci95: tuple[float, float]
    seed: int
    dt: float = 0.0
    eps_hit: float = DEFAULT_EPS_HIT
    mean_hit_time: float | None = None

    def to_json(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "n_hits": self.n_hits,
            "horizon": self.horizon,
            "r0": self.r0,
            "dt": self.dt,
            "eps_hit": self.eps_hit,
            "p_hat": self.p_hat,
            "ci95": list(self.ci95),
            "mean_hit_time": self.mean_hit_time,
            "seed": self.seed,
        }


def _threads() -> int:
    raw = os.environ.get("LANDMARK_DYN_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"LANDMARK_DYN_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _run_block(coeffs, r0, dt, n_steps, thresholds, seed, first, count, chunk):
    """Simulate paths first..first+count-1; return hit step indices (count, nthr)."""
    gens = [np.random.Generator(np.random.Philox(key=[seed, first + i])) for i in range(count)]
    r = np.full(count, float(r0))
    hit = np.full((count, len(thresholds)), -1, dtype=np.int64)
    sqdt = math.sqrt(dt)
    core = _backend.compiled_module()
    kernel = coeffs.kernel
    use_core = core is not None and kernel is not None and kernel.core_id is not None
    last = len(thresholds) - 1
    step = 0
    while step < n_steps:
        k = min(chunk, n_steps - step)
        z = np.zeros((count, k))
        alive = np.flatnonzero(hit[:, last] < 0)
        if alive.size == 0:
            break
        for i in alive:
            z[i] = gens[i].standard_normal(k)
        if use_core:
            ok = core.em_advance(kernel.core_id, kernel.core_params, coeffs.d, r, z,
                                 sqdt, dt, thresholds, hit, step)
        else:
            ok = _pycore.em_advance(coeffs.sigma, coeffs.drift, r, z, sqdt, dt,
                                    thresholds, hit, step)
        if not ok:
            raise SimulationError("Euler-Maruyama produced a non-finite radius")
        step += k
    return hit


def simulate_hits(kernel_or_coeffs, d: int, r0: float, dt: float, horizon: float,
                  n_paths: int, seed: int, thresholds=(DEFAULT_EPS_HIT,),
                  block: int = 1024, chunk: int = 4096) -> list[HittingEstimate]:
    """Euler-Maruyama paths with absorption, one estimate per threshold.

    Path ``i`` draws its normals from Philox keyed by (seed, i), so results do
    not depend on blocking or on the number of worker threads. All thresholds
    are tracked in one pass; a path stops at the smallest. A step that lands
    at or below a threshold (negative radii included) counts as a hit at that
    step.
    """
    if isinstance(kernel_or_coeffs, SdeCoeffs):
        coeffs = kernel_or_coeffs
    else:
        coeffs = sde_coeffs(kernel_or_coeffs, d)
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    if not (dt > 0 and horizon > 0):
        raise ValueError("dt and horizon must be positive")
    if dt > horizon / 100.0 * (1 + 1e-12):
        raise ValueError("dt must be at most horizon/100")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    thr = np.array(sorted((float(x) for x in thresholds), reverse=True))
    if np.any(thr <= 0) or len(set(thr.tolist())) != len(thr):
        raise ValueError("thresholds must be distinct and positive")
    n_steps = int(round(horizon / dt))

    starts = list(range(0, n_paths, block))
    jobs = [(s, min(block, n_paths - s)) for s in starts]
    workers = min(_threads(), len(jobs))
    run = lambda job: _run_block(coeffs, r0, dt, n_steps, thr, seed, job[0], job[1], chunk)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(run, jobs))
    else:
        hits = [run(job) for job in jobs]
    hit = np.concatenate(hits, axis=0)

    out = []
    for j, level in enumerate(thr):
        col = hit[:, j]
        k = int(np.sum(col >= 0))
        mean_t = float(np.mean(col[col >= 0]) * dt) if k else None
        out.append(HittingEstimate(n_paths, k, float(horizon), float(r0), k / n_paths,
                                   wilson_interval(k, n_paths), int(seed), float(dt),
                                   float(level), mean_t))
    return out


def simulate_paths(kernel_or_coeffs, d: int, r0: float, dt: float, horizon: float,
                   n_paths: int, seed: int, eps_hit: float = DEFAULT_EPS_HIT,
                   **kw) -> HittingEstimate:
    """Monte-Carlo estimate of P(r hits eps_hit before ``horizon``)."""
    return simulate_hits(kernel_or_coeffs, d, r0, dt, horizon, n_paths, seed, (eps_hit,), **kw)[0]


def two_proportion_test(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """One-sided pooled z-test of H1: p1 > p2. Returns (z, p-value)."""
    p1, p2 = k1 / n1, k2 / n2
    pool = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    if se == 0.0:
        return (0.0, 1.0) if p1 == p2 else (math.inf if p1 > p2 else -math.inf, 0.0 if p1 > p2 else 1.0)
    z = (p1 - p2) / se
    return z, float(stats.norm.sf(z))
