"""Radial cometric kernels.

A kernel is the scalar profile K: [0, inf) -> R with K(x_i, x_j) = K(|x_i - x_j|) I_d.
Everything downstream (Hamiltonian flow, metric, completeness criteria, the
radial SDE) only ever touches this profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _backend, _pycore

VARIANTS = ("laplacian", "c1_bessel", "gaussian", "log_modified", "power_gap", "tabulated")

_CORE_IDS = {
    "laplacian": _pycore.LAPLACIAN,
    "c1_bessel": _pycore.C1_BESSEL,
    "gaussian": _pycore.GAUSSIAN,
    "log_modified": _pycore.LOG_MODIFIED,
    "power_gap": _pycore.POWER_GAP,
}


class KernelError(ValueError):
    """Invalid kernel specification or data."""


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel description, as parsed from a config block."""

    variant: str
    c: float | None = None
    D: float | None = None
    gamma: float | None = None
    samples: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def from_mapping(cls, table: dict) -> "KernelSpec":
        allowed = {"variant", "c", "D", "gamma", "samples"}
        unknown = set(table) - allowed
        if unknown:
            raise KernelError(f"unknown kernel key(s): {sorted(unknown)}")
        if "variant" not in table:
            raise KernelError("kernel block needs a 'variant' key")
        samples = table.get("samples")
        if samples is not None:
            samples = tuple((float(r), float(v)) for r, v in samples)
        return cls(
            variant=str(table["variant"]),
            c=_opt_float(table.get("c")),
            D=_opt_float(table.get("D")),
            gamma=_opt_float(table.get("gamma")),
            samples=samples,
        )

    def to_mapping(self) -> dict:
        out: dict = {"variant": self.variant}
        for key in ("c", "D", "gamma"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.samples is not None:
            out["samples"] = [list(s) for s in self.samples]
        return out


def _opt_float(v):
    return None if v is None else float(v)


@dataclass(frozen=True)
class Kernel:
    """Immutable radial kernel.

    ``eval``, ``deriv`` and ``gap`` accept scalars or arrays. ``gap`` is
    computed directly (not as ``k0 - eval``) so it keeps full relative
    precision as r -> 0, which the completeness integrals depend on.
    """

    name: str
    k0: float
    smoothness_note: str
    c1_at_zero: bool
    _eval: Callable = field(repr=False)
    _deriv: Callable = field(repr=False)
    _gap: Callable = field(repr=False)
    core_id: int | None = None
    core_params: tuple = ()
    heuristic: bool = False
    spec: KernelSpec | None = field(default=None, repr=False, compare=False)

    def eval(self, r):
        return self._eval(r)

    def deriv(self, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0):
            raise ValueError("deriv is defined for r > 0")
        if np.any(r_arr == 0) and not self.c1_at_zero:
            raise ValueError(f"kernel {self.name!r} is not C^1 at 0; deriv needs r > 0")
        return self._deriv(r)

    def gap(self, r):
        return self._gap(r)

    @property
    def compiled(self) -> bool:
        return self.core_id is not None and _backend.COMPILED


def gap(kernel: Kernel, r):
    """K(0) - K(r); nonnegative and zero only at r = 0."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("gap needs r >= 0")
    return kernel.gap(r)


def _builtin(name, params, k0, note, c1, spec):
    kid = _CORE_IDS[name]
    mod = _backend.compiled_module() or _pycore
    prm = tuple(float(v) for v in params)
    return Kernel(
        name=name,
        k0=k0,
        smoothness_note=note,
        c1_at_zero=c1,
        _eval=lambda r: mod.k_eval(kid, prm, r),
        _deriv=lambda r: mod.k_deriv(kid, prm, r),
        _gap=lambda r: mod.k_gap(kid, prm, r),
        core_id=kid,
        core_params=prm,
        spec=spec,
    )


def log_modified_params(c: float) -> tuple[float, float, float]:
    """(c, amplitude, rate) of the exponential continuation past r = 1/2.

    The tail a*exp(-b (r - 1/2)) matches value and slope at r = 1/2.
    """
    ell = 1.0 + np.log(2.0)
    k_half = 1.0 - 0.25 * ell**c
    d_half = -0.5 * ell ** (c - 1.0) * (2.0 * ell - c)
    return c, k_half, -d_half / k_half


def power_gap_params(dcoef: float, gamma: float) -> tuple[float, float, float, float]:
    """(D, gamma, r1, rate): pure power up to K(r1) = 1/2, then a C^1 exponential tail."""
    r1 = (0.5 / dcoef) ** (1.0 / gamma)
    rate = 2.0 * dcoef * gamma * r1 ** (gamma - 1.0)
    return dcoef, gamma, r1, rate


def make_kernel(spec: KernelSpec | dict | str, validate_grid: Sequence[float] | None = None,
                check: bool = True) -> Kernel:
    """Build a kernel from a spec and (by default) validate it.

    Raises
    ------
    KernelError
        Parameter out of range, bad tabulated data, or a failed validation.
    """
    if isinstance(spec, str):
        spec = parse_kernel_spec(spec)
    elif isinstance(spec, dict):
        spec = KernelSpec.from_mapping(spec)
    v = spec.variant
    if v == "laplacian":
        kern = _builtin(v, (), 1.0, "C^0 at 0 (|x| kink)", False, spec)
    elif v == "c1_bessel":
        kern = _builtin(v, (), 2.0, "C^1 at 0", True, spec)
    elif v == "gaussian":
        kern = _builtin(v, (), 1.0, "smooth", True, spec)
    elif v == "log_modified":
        c = spec.c if spec.c is not None else 1.5
        if not 1.0 < c <= 2.0:
            raise KernelError(f"log_modified needs c in (1, 2], got {c}")
        kern = _builtin(v, log_modified_params(c), 1.0,
                        "C^1 at 0; exponential continuation for r > 1/2 (C^1 at 1/2)",
                        True, spec)
    elif v == "power_gap":
        if spec.D is None or spec.gamma is None:
            raise KernelError("power_gap needs D and gamma")
        if spec.D <= 0 or spec.gamma <= 0:
            raise KernelError("power_gap needs D > 0 and gamma > 0")
        kern = _builtin(v, power_gap_params(spec.D, spec.gamma), 1.0,
                        f"K(0)-K(r) = D r^gamma on [0, r1]; C^1 exponential tail",
                        spec.gamma > 1.0, spec)
    elif v == "tabulated":
        kern = _tabulated(spec, check)
    else:
        raise KernelError(f"unknown kernel variant {v!r}; expected one of {VARIANTS}")
    if check:
        report = validate(kern, validate_grid if validate_grid is not None else DEFAULT_GRID)
        if not report.ok:
            raise KernelError(f"kernel {kern.name!r} failed validation: {report.summary()}")
    return kern


def _tabulated(spec: KernelSpec, check: bool) -> Kernel:
    if not spec.samples or len(spec.samples) < 2:
        raise KernelError("tabulated kernel needs at least two samples")
    data = np.array(sorted(spec.samples), dtype=float)
    rs, vs = data[:, 0], data[:, 1]
    if rs[0] != 0.0:
        raise KernelError("tabulated kernel must include the sample r = 0 (K(0))")
    if np.any(np.diff(rs) <= 0):
        raise KernelError("tabulated sample radii must be strictly increasing")
    monotone = bool(np.all(np.diff(vs) < 0) and vs[-1] > 0)
    if check and not monotone:
        raise KernelError("tabulated values must be positive and strictly decreasing")
    k0 = float(vs[0])
    interp = PchipInterpolator(rs, vs, extrapolate=False)
    dinterp = interp.derivative()
    gaps = k0 - vs

    # power-law gap D r^gamma below the smallest positive sample
    if len(rs) >= 3 and gaps[1] > 0 and gaps[2] > 0:
        p_gamma = np.log(gaps[2] / gaps[1]) / np.log(rs[2] / rs[1])
        p_d = gaps[1] / rs[1] ** p_gamma
    elif gaps[1] > 0:
        p_gamma, p_d = 1.0, gaps[1] / rs[1]
    else:
        p_gamma, p_d = 1.0, 0.0
    r_lo, r_hi = (rs[1] if p_d > 0 else 0.0), rs[-1]
    v_hi = vs[-1]
    s_hi = float(dinterp(r_hi))
    rate = -s_hi / v_hi if (s_hi < 0 and v_hi > 0) else 0.0

    def _e(r):
        # evaluated directly: k0 - gap would cancel in the tail
        r = np.asarray(r, dtype=float)
        out = np.where(r < r_lo, k0 - p_d * np.abs(r) ** p_gamma, 0.0)
        mid = (r >= r_lo) & (r <= r_hi)
        out = np.where(mid, np.nan_to_num(interp(np.clip(r, r_lo, r_hi))), out)
        out = np.where(r > r_hi, v_hi * np.exp(-rate * (r - r_hi)), out)
        return out[()] if out.ndim == 0 else out

    def _g(r):
        r = np.asarray(r, dtype=float)
        out = np.where(r < r_lo, p_d * np.abs(r) ** p_gamma, k0 - _e(r))
        return out[()] if out.ndim == 0 else out

    def _d(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = -p_d * p_gamma * np.abs(r) ** (p_gamma - 1.0)
        out = np.where(r < r_lo, low, 0.0)
        mid = (r >= r_lo) & (r <= r_hi)
        out = np.where(mid, np.nan_to_num(dinterp(np.clip(r, r_lo, r_hi))), out)
        out = np.where(r > r_hi, -rate * v_hi * np.exp(-rate * (r - r_hi)), out)
        return out[()] if out.ndim == 0 else out

    return Kernel(
        name="tabulated",
        k0=k0,
        smoothness_note=f"monotone cubic interpolant; gap ~ {p_d:.4g} r^{p_gamma:.4g} below r={r_lo:g}",
        c1_at_zero=p_gamma > 1.0,
        _eval=_e,
        _deriv=_d,
        _gap=_g,
        heuristic=True,
        spec=spec,
    )


def parse_kernel_spec(text: str) -> KernelSpec:
    """Parse ``laplacian``, ``log_modified:c=1.5``, ``power_gap:D=1,gamma=2`` or an
    inline table ``{ variant = "log_modified", c = 1.5 }``."""
    text = text.strip()
    if text.startswith("{"):
        from ._toml import loads

        return KernelSpec.from_mapping(loads(f"kernel = {text}")["kernel"])
    name, _, rest = text.partition(":")
    table: dict = {"variant": name.strip()}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise KernelError(f"bad kernel parameter {item!r}; expected key=value")
            table[key.strip()] = float(val)
    return KernelSpec.from_mapping(table)


# ---------------------------------------------------------------- validation

DEFAULT_GRID = np.concatenate([[0.0], np.geomspace(1e-3, 20.0, 60)])


@dataclass
class ValidationReport:
    positivity: list[float] = field(default_factory=list)
    monotonicity: list[float] = field(default_factory=list)
    derivative_sign: list[float] = field(default_factory=list)
    derivative_mismatch: list[float] = field(default_factory=list)
    k0_mismatch: bool = False
    max_derivative_error: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.positivity or self.monotonicity or self.derivative_sign
                    or self.derivative_mismatch or self.k0_mismatch)

    def summary(self) -> str:
        parts = []
        for label in ("positivity", "monotonicity", "derivative_sign", "derivative_mismatch"):
            bad = getattr(self, label)
            if bad:
                parts.append(f"{label} violated at r={bad[:5]}")
        if self.k0_mismatch:
            parts.append("eval(0) != k0")
        return "; ".join(parts) or "pass"


def validate(kernel: Kernel, grid: Sequence[float], deriv_rtol: float = 1e-6,
             deriv_min_r: float = 1e-3) -> ValidationReport:
    """Check positivity, strict decrease and derivative consistency on ``grid``.

    Derivatives are compared with central differences only where r >= deriv_min_r,
    and only where K itself is not underflowing. The mismatch reported is
    relative to |K'| after subtracting the difference quotient's rounding floor.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 3:
        raise ValueError("validation grid needs at least 3 points")
    if np.any(g < 0) or np.any(np.diff(g) < 0):
        raise ValueError("validation grid must be sorted and nonnegative")
    rep = ValidationReport()
    vals = np.asarray(kernel.eval(g), dtype=float)
    rep.k0_mismatch = bool(kernel.eval(0.0) != kernel.k0)
    rep.positivity = [float(r) for r, v in zip(g, vals) if not v > 0]
    dec = np.diff(vals) < 0
    rep.monotonicity = [float(g[k + 1]) for k in np.flatnonzero(~dec)
                        if vals[k + 1] > 0 or vals[k] > 0]
    pos = g[(g >= deriv_min_r)]
    if pos.size:
        d = np.asarray(kernel.deriv(pos), dtype=float)
        ev = np.asarray(kernel.eval(pos), dtype=float)
        live = ev > 1e-250
        rep.derivative_sign = [float(r) for r, dv, lv in zip(pos, d, live) if lv and not dv < 0]
        h = 1e-6 * np.maximum(pos, 1.0)
        fd = (np.asarray(kernel.eval(pos + h)) - np.asarray(kernel.eval(pos - h))) / (2 * h)
        # central differences cannot resolve below the rounding floor eps*K/h
        floor = 8.0 * np.finfo(float).eps * np.abs(ev) / h
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.maximum(np.abs(fd - d) - floor, 0.0) / np.abs(d)
        rel = np.where(live, rel, 0.0)
        rep.max_derivative_error = float(np.nanmax(rel)) if rel.size else 0.0
        rep.derivative_mismatch = [float(r) for r, e in zip(pos, rel) if not e <= deriv_rtol]
    return rep
