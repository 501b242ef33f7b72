"""Convergence analysis of improper integrals with an integrable-or-not
singularity at r = 0, and the geodesic completeness verdict built on it.

The engine works in the variable s = -log r, where the integral over (0, eps]
becomes an integral over [-log eps, inf) of g(s) = f(e^{-s}) e^{-s}. Power-law
integrands f ~ r^alpha give g ~ exp(-(alpha+1) s); logarithmic corrections
such as f ~ 1/(r (1 - log r)^beta) give g ~ (1+s)^(-beta). The tail is
classified by a least-squares fit of

    log g(s) = A - kappa s - mu log(1+s)

over the deepest reachable cutoffs, which captures both families exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .kernels import Kernel

CONVERGENT = "convergent"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"

COMPLETE = "complete"
INCOMPLETE = "incomplete"


class QuadratureError(RuntimeError):
    """The integrand misbehaved at an interior node or quadrature failed."""


@dataclass(frozen=True)
class QuadOpts:
    decades: int = 12
    abs_tol: float = 1e-10
    cauchy_rtol: float = 1e-8
    div_threshold: float = 1e6
    residual_max: float = 0.05
    # deepest s = -log(eps) probed by the tail scan (r ~ 1e-300)
    s_max: float = 690.0
    kappa_tol: float = 1e-6
    mu_tol: float = 1e-6


@dataclass
class IntegralVerdict:
    status: str
    value: float | None
    evidence: list[tuple[float, float]]
    exponent_fit: tuple[float, float, float] | None = None
    tail_fit: dict = field(default_factory=dict)
    reason: str = ""

    def to_json(self) -> dict:
        out = {
            "status": self.status,
            "value": self.value,
            "evidence": [{"eps": e, "partial": p} for e, p in self.evidence],
            "reason": self.reason,
        }
        if self.exponent_fit is not None:
            g, d, res = self.exponent_fit
            out["exponent_fit"] = {"gamma": g, "D": d, "residual": res}
        return out


def _quad(fun, lo, hi, opts):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(fun, lo, hi, epsabs=opts.abs_tol, epsrel=1e-12, limit=400)
    if not math.isfinite(val):
        raise QuadratureError(f"non-finite quadrature result on [{lo:g}, {hi:g}]")
    if caught and err > max(1e3 * opts.abs_tol, 1e-9 * abs(val)):
        raise QuadratureError(f"quadrature on [{lo:g}, {hi:g}] failed: {caught[0].message}")
    return val


def _finite_positive(f, r):
    try:
        v = float(f(r))
    except (ZeroDivisionError, OverflowError, ValueError):
        return False
    return math.isfinite(v) and v > 0.0


def _tail_model(g, s_lo, s_hi):
    """Fit log g = A - kappa s - mu log(1+s) on [s_lo, s_hi]."""
    s = np.geomspace(s_lo, s_hi, 48)
    gv = np.array([g(x) for x in s])
    keep = np.isfinite(gv) & (gv > 0)
    if keep.sum() < 8:
        return None
    s, lg = s[keep], np.log(gv[keep])
    design = np.column_stack([np.ones_like(s), -s, -np.log1p(s)])
    coef, *_ = np.linalg.lstsq(design, lg, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - lg) ** 2)))
    amp, kappa, mu = (float(c) for c in coef)
    return amp, kappa, mu, resid


def _tail_integral(model, s0, opts):
    """Integral of the fitted model over [s0, inf); None when it diverges."""
    amp, kappa, mu, _ = model
    if kappa < -opts.kappa_tol:
        return None
    if abs(kappa) <= opts.kappa_tol:
        if mu <= 1.0 + opts.mu_tol:
            return None
        return math.exp(amp) * (1.0 + s0) ** (1.0 - mu) / (mu - 1.0)
    # exponential decay; integrate the model relative to its value at s0
    lg0 = amp - kappa * s0 - mu * math.log1p(s0)
    if lg0 < -745.0:
        return 0.0
    fun = lambda t: math.exp(-kappa * t - mu * (math.log1p(s0 + t) - math.log1p(s0)))
    val, _ = integrate.quad(fun, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return math.exp(lg0) * val


def improper_integral(integrand: Callable[[float], float], a: float,
                      opts: QuadOpts | None = None) -> IntegralVerdict:
    """Decide whether the integral of ``integrand`` over (0, a] converges.

    The partial integrals over [eps_k, a] with eps_k = a 10^-k (k = 1..decades)
    form the primary evidence; the scan then continues in s = -log r down to
    r ~ 1e-300 (or until the integrand stops being representable) and the
    tail beyond is classified by the fitted model described in the module
    docstring.

    Returns
    -------
    IntegralVerdict
        ``convergent`` carries the value (partial + fitted tail);
        ``divergent`` means blow-up of the partial sums or a non-decaying tail;
        ``inconclusive`` when the fit is poor or the extrapolations disagree.

    Raises
    ------
    QuadratureError
        Non-finite integrand inside the standard cutoff ladder or quadrature failure.
    """
    opts = opts or QuadOpts()
    if not a > 0:
        raise ValueError("upper limit a must be positive")
    f = integrand

    def g(s):
        r = math.exp(-s)
        return float(f(r)) * r

    ladder = [a * 10.0 ** (-k) for k in range(1, opts.decades + 1)]
    for node in [a, a / 2] + ladder:
        if not _finite_positive(f, node):
            raise QuadratureError(f"integrand not finite and positive at r={node:g}")

    total = _quad(f, a / 2, a, opts)
    evidence: list[tuple[float, float]] = []
    s_prev = -math.log(a / 2)
    blown = False
    for eps in ladder:
        s_cut = -math.log(eps)
        total += _quad(g, s_prev, s_cut, opts)
        evidence.append((eps, total))
        s_prev = s_cut
        if total > opts.div_threshold:
            blown = True
            break

    exponent_fit = None
    if not blown:
        rr = np.geomspace(ladder[-1], ladder[-4], 40)
        fv = np.array([float(f(x)) for x in rr])
        slope, icept = np.polyfit(np.log(rr), np.log(fv), 1)
        res = float(np.sqrt(np.mean((slope * np.log(rr) + icept - np.log(fv)) ** 2)))
        exponent_fit = (float(slope), float(math.exp(icept)), res)

    if blown:
        return IntegralVerdict(DIVERGENT, None, evidence, exponent_fit,
                               reason=f"partial integral exceeded {opts.div_threshold:g}")

    # deep scan: cutoffs at s = s_K * 1.5^j until s_max or the integrand underflows
    deep_s = []
    s = s_prev
    while s < opts.s_max:
        s = min(s * 1.5, opts.s_max)
        if not _finite_positive(f, math.exp(-s)):
            break
        deep_s.append(s)
    depth_totals = [(s_prev, total)]
    for s_cut in deep_s:
        total += _quad(g, s_prev, s_cut, opts)
        evidence.append((math.exp(-s_cut), total))
        depth_totals.append((s_cut, total))
        s_prev = s_cut
        if total > opts.div_threshold:
            return IntegralVerdict(DIVERGENT, None, evidence, exponent_fit,
                                   reason=f"partial integral exceeded {opts.div_threshold:g}")

    alpha = exponent_fit[0]
    if alpha <= -1.0 + 1e-9 and exponent_fit[2] < opts.residual_max:
        return IntegralVerdict(DIVERGENT, None, evidence, exponent_fit,
                               reason=f"local integrand exponent {alpha:.6g} <= -1")

    s_end, tot_end = depth_totals[-1]
    model = _tail_model(g, s_end / 4, s_end)
    if model is None:
        return IntegralVerdict(INCONCLUSIVE, None, evidence, exponent_fit,
                               reason="tail fit impossible (integrand underflow)")
    tail_info = dict(zip(("log_amp", "kappa", "mu", "residual"), model))
    if model[3] > opts.residual_max:
        return IntegralVerdict(INCONCLUSIVE, None, evidence, exponent_fit, tail_info,
                               reason="tail model residual too large")
    tail = _tail_integral(model, s_end, opts)
    if tail is None:
        return IntegralVerdict(DIVERGENT, None, evidence, exponent_fit, tail_info,
                               reason=f"non-integrable tail (kappa={model[1]:.3g}, mu={model[2]:.6g})")
    value = tot_end + tail

    # Cauchy check: extrapolating from a shallower cutoff must agree
    s_mid, tot_mid = depth_totals[max(0, len(depth_totals) - 3)]
    model_mid = _tail_model(g, s_mid / 4, s_mid) if s_mid > 0 else None
    tail_mid = _tail_integral(model_mid, s_mid, opts) if model_mid else None
    if tail_mid is not None:
        gap = abs(tot_mid + tail_mid - value)
        tail_info["cauchy_gap"] = gap
        if gap > opts.cauchy_rtol * abs(value) + 10 * opts.abs_tol:
            return IntegralVerdict(INCONCLUSIVE, None, evidence, exponent_fit, tail_info,
                                   reason=f"extrapolated values disagree by {gap:.3g}")
    tail_info["tail"] = tail
    return IntegralVerdict(CONVERGENT, value, evidence, exponent_fit, tail_info,
                           reason="partials Cauchy after tail extrapolation")


@dataclass
class CompletenessReport:
    geodesic: str
    criterion: IntegralVerdict
    a_used: float
    heuristic: bool = False
    gap_exponent: tuple[float, float, float] | None = None

    def to_json(self) -> dict:
        out = {
            "geodesic": self.geodesic,
            "a_used": self.a_used,
            "heuristic": self.heuristic,
            "criterion_status": self.criterion.status,
            "criterion_value": self.criterion.value,
            "reason": self.criterion.reason,
            "evidence": [{"eps": e, "partial": p} for e, p in self.criterion.evidence],
        }
        if self.gap_exponent is not None:
            g, d, res = self.gap_exponent
            out["exponent"] = {"gamma": g, "D": d, "residual": res}
        return out


def criterion_integrand(kernel: Kernel) -> Callable[[float], float]:
    return lambda r: 1.0 / math.sqrt(float(kernel.gap(r)))


def classify_geodesic(kernel: Kernel, a: float = 1.0,
                      opts: QuadOpts | None = None) -> CompletenessReport:
    """Geodesic completeness from divergence of int_0^a dr / sqrt(K(0) - K(r))."""
    verdict = improper_integral(criterion_integrand(kernel), a, opts)
    geo = {DIVERGENT: COMPLETE, CONVERGENT: INCOMPLETE}.get(verdict.status, INCONCLUSIVE)
    try:
        expo = estimate_gap_exponent(kernel)
    except ValueError:
        expo = None
    return CompletenessReport(geo, verdict, a, kernel.heuristic, expo)


def estimate_gap_exponent(kernel: Kernel) -> tuple[float, float, float]:
    """Least-squares fit of log gap = log D + gamma log r on r in [1e-6, 1e-2].

    Returns (gamma, D, rms residual). Raises ValueError when the gap underflows.
    """
    r = np.geomspace(1e-6, 1e-2, 40)
    gv = np.asarray(kernel.gap(r), dtype=float)
    if np.all(gv < 1e-300):
        raise ValueError("gap underflows on [1e-6, 1e-2]; exponent unfittable")
    keep = gv > 1e-300
    if keep.sum() < 3:
        raise ValueError("too few representable gap values to fit an exponent")
    lr, lg = np.log(r[keep]), np.log(gv[keep])
    gamma, icept = np.polyfit(lr, lg, 1)
    res = float(np.sqrt(np.mean((gamma * lr + icept - lg) ** 2)))
    return float(gamma), float(math.exp(icept)), res
