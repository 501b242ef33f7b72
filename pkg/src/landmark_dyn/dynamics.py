"""Hamiltonian geodesic flow on landmark space.

H = 1/2 sum_{i,j} K(|x_i - x_j|) <p_i, p_j>, with Hamilton's equations

    dx_i/dt =  sum_j K(|x_i - x_j|) p_j
    dp_i/dt = -sum_{j != i} K'(|x_i - x_j|) (x_i - x_j)/|x_i - x_j| <p_i, p_j>

The diagonal uses K(0) directly, so K' is never evaluated at 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import _backend, _pycore
from .kernels import Kernel


class CollisionError(ValueError):
    """State is on (or numerically at) the collision set."""


@dataclass
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(np.atleast_2d(np.asarray(self.x, dtype=float)))
        self.p = np.ascontiguousarray(np.atleast_2d(np.asarray(self.p, dtype=float)))
        if self.x.shape != self.p.shape:
            raise ValueError(f"x shape {self.x.shape} != p shape {self.p.shape}")
        if self.x.shape[0] < 2:
            raise ValueError("need at least two landmarks")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def min_distance(self) -> float:
        return min_pair_distance(self.x)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.p.ravel()])

    @classmethod
    def unpack(cls, y, n, d) -> "PhasePoint":
        y = np.asarray(y, dtype=float)
        return cls(y[: n * d].reshape(n, d), y[n * d:].reshape(n, d))

    def to_json(self) -> dict:
        return {"n": self.n, "d": self.d, "x": self.x.tolist(), "p": self.p.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "PhasePoint":
        pt = cls(data["x"], data["p"])
        if "n" in data and data["n"] != pt.n:
            raise ValueError(f"init file says n={data['n']} but x has {pt.n} rows")
        if "d" in data and data["d"] != pt.d:
            raise ValueError(f"init file says d={data['d']} but x has {pt.d} columns")
        return pt


def min_pair_distance(x) -> float:
    core = _backend.compiled_module()
    x = np.ascontiguousarray(x, dtype=float)
    if core is not None:
        return core.min_pair_distance(x)
    return _pycore.min_pair_distance(x)


def hamiltonian(s: PhasePoint, kernel: Kernel) -> float:
    """Energy 1/2 sum_{i,j} K(|x_i-x_j|) <p_i,p_j>, diagonal terms included.

    Evaluated as 1/2 K(0)|P|^2 - sum_{i<j} gap_ij <p_i,p_j> (same quantity,
    no cancellation near collision).
    """
    core = _backend.compiled_module()
    if core is not None and kernel.core_id is not None:
        return core.hamiltonian(s.x, s.p, kernel.core_id, kernel.core_params)
    return _pycore.hamiltonian(s.x, s.p, kernel.gap, kernel.k0)


def rhs(s: PhasePoint, kernel: Kernel) -> tuple[np.ndarray, np.ndarray]:
    """(dx/dt, dp/dt) of Hamilton's equations. Raises CollisionError at a collision."""
    if s.min_distance() <= 0.0:
        raise CollisionError("rhs evaluated at a collided configuration")
    return _rhs_arrays(s.x, s.p, kernel)


def _rhs_arrays(x, p, kernel):
    core = _backend.compiled_module()
    if core is not None and kernel.core_id is not None:
        return core.hamilton_rhs(x, p, kernel.core_id, kernel.core_params)
    return _pycore.hamilton_rhs(x, p, kernel.gap, kernel.deriv, kernel.k0)


def wedge(y, z) -> np.ndarray:
    """Entries y_k z_l - y_l z_k for k < l, in lexicographic (k, l) order."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != z.shape or y.ndim != 1:
        raise ValueError(f"wedge needs two vectors of equal length, got {y.shape}, {z.shape}")
    d = y.shape[0]
    if d < 2:
        return np.zeros(0)
    k, l = np.triu_indices(d, 1)
    return y[k] * z[l] - y[l] * z[k]


@dataclass
class ConservedSet:
    H: float
    P: np.ndarray
    L: np.ndarray


def conserved(s: PhasePoint, kernel: Kernel) -> ConservedSet:
    P = s.p.sum(axis=0)
    L = np.zeros(s.d * (s.d - 1) // 2)
    for xi, pi in zip(s.x, s.p):
        L = L + wedge(xi, pi)
    return ConservedSet(hamiltonian(s, kernel), P, L)


# ------------------------------------------------------------------ integration

@dataclass(frozen=True)
class IntOpts:
    rtol: float = 1e-9
    atol: float = 1e-12
    eps_coll: float = 1e-6
    r_esc: float = 1e6
    max_steps: int = 1_000_000
    method: str = "DOP853"


@dataclass
class Termination:
    kind: str  # reached_t_end | collision | escape | step_failure
    t_event: float | None = None
    pair: tuple[int, int] | None = None
    index: int | None = None
    message: str = ""

    def to_json(self) -> dict:
        out = {"kind": self.kind, "t_event": self.t_event, "message": self.message}
        if self.pair is not None:
            out["pair"] = list(self.pair)
        if self.index is not None:
            out["index"] = self.index
        return out


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray  # shape (len(t), dim)
    termination: Termination
    sol: Callable | None = field(default=None, repr=False)
    nfev: int = 0


class _StepBudgetExceeded(Exception):
    pass


def solve(fun, y0, t_end, opts: IntOpts, events=(), event_kinds=()) -> OdeResult:
    """Adaptive embedded Runge-Kutta with dense output and terminal events.

    ``events`` are scalar functions of (t, y) whose sign change from + to -
    terminates integration; the crossing is located by root finding on the
    dense interpolant. ``event_kinds`` names each event for the Termination.
    """
    budget = [0]
    # each DOP853 step costs 12 evaluations
    limit = 12 * opts.max_steps

    def counted(t, y):
        budget[0] += 1
        if budget[0] > limit:
            raise _StepBudgetExceeded
        return fun(t, y)

    evs = []
    for ev in events:
        def wrapped(t, y, _ev=ev):
            return _ev(t, y)
        wrapped.terminal = True
        wrapped.direction = -1
        evs.append(wrapped)
    try:
        res = solve_ivp(counted, (0.0, t_end), np.asarray(y0, dtype=float), method=opts.method,
                        rtol=opts.rtol, atol=opts.atol, events=evs or None,
                        dense_output=True)
    except _StepBudgetExceeded:
        return OdeResult(np.array([0.0]), np.atleast_2d(y0), Termination(
            "step_failure", message=f"exceeded max_steps={opts.max_steps}"), None, budget[0])
    y = res.y.T.copy()
    t = res.t.copy()
    if res.status == 1:
        for k, te in enumerate(res.t_events):
            if len(te):
                t_ev = float(te[0])
                y_ev = res.y_events[k][0]
                # solve_ivp appends the event state as the final sample
                if t[-1] != t_ev:
                    t = np.append(t, t_ev)
                    y = np.vstack([y, y_ev])
                term = Termination(event_kinds[k] if event_kinds else f"event{k}", t_ev)
                break
    elif res.status == 0:
        term = Termination("reached_t_end")
    else:
        term = Termination("step_failure", float(res.t[-1]), message=res.message)
    return OdeResult(t, y, term, res.sol, res.nfev)


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray  # (m, n, d)
    p: np.ndarray  # (m, n, d)
    conserved_drift: dict
    termination: Termination
    dense: Callable | None = field(default=None, repr=False)
    n: int = 0
    d: int = 0

    @property
    def states(self) -> list[PhasePoint]:
        return [PhasePoint(xx, pp) for xx, pp in zip(self.x, self.p)]

    def at(self, t) -> PhasePoint:
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        return PhasePoint.unpack(self.dense(t), self.n, self.d)


def drift_stats(x, p, kernel) -> dict:
    """Max deviation from t=0 of H, P and L, relative to natural scales.

    H is measured relative to |H(0)|. P and L are vectors that may vanish
    exactly, so they are measured against max(|P(0)|, sum |p_i(0)|) and
    max(|L(0)|, sum |x_i(0)||p_i(0)|).
    """
    first = PhasePoint(x[0], p[0])
    c0 = conserved(first, kernel)
    h_scale = abs(c0.H) or 1.0
    p_norms = np.linalg.norm(p[0], axis=1)
    p_scale = max(np.linalg.norm(c0.P), p_norms.sum()) or 1.0
    l_scale = max(np.linalg.norm(c0.L), float(np.sum(np.linalg.norm(x[0], axis=1) * p_norms))) or 1.0
    dh = dp = dl = 0.0
    for xx, pp in zip(x, p):
        c = conserved(PhasePoint(xx, pp), kernel)
        dh = max(dh, abs(c.H - c0.H) / h_scale)
        dp = max(dp, float(np.max(np.abs(c.P - c0.P), initial=0.0)) / p_scale)
        dl = max(dl, float(np.max(np.abs(c.L - c0.L), initial=0.0)) / l_scale)
    return {"H": dh, "P": dp, "L": dl}


def integrate(s0: PhasePoint, kernel: Kernel, t_end: float,
              opts: IntOpts | None = None) -> Trajectory:
    """Integrate Hamilton's equations from ``s0`` to ``t_end`` or the first event.

    Events: minimum pairwise distance falling to ``eps_coll`` (collision) and
    any |x_i| reaching ``r_esc`` (escape). Both are located on the dense
    output to about 1e-10 in time.
    """
    opts = opts or IntOpts()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if s0.min_distance() <= opts.eps_coll:
        raise CollisionError("initial configuration is within the collision threshold")
    n, d = s0.n, s0.d
    nd = n * d

    def fun(t, y):
        x = y[:nd].reshape(n, d)
        p = y[nd:].reshape(n, d)
        dx, dp = _rhs_arrays(np.ascontiguousarray(x), np.ascontiguousarray(p), kernel)
        return np.concatenate([dx.ravel(), dp.ravel()])

    def coll(t, y):
        return min_pair_distance(y[:nd].reshape(n, d)) - opts.eps_coll

    def esc(t, y):
        return opts.r_esc - float(np.max(np.linalg.norm(y[:nd].reshape(n, d), axis=1)))

    res = solve(fun, s0.pack(), t_end, opts, (coll, esc), ("collision", "escape"))
    xs = res.y[:, :nd].reshape(-1, n, d)
    ps = res.y[:, nd:].reshape(-1, n, d)
    term = res.termination
    last = xs[-1]
    if term.kind == "collision":
        best = None
        for i, j in itertools.combinations(range(n), 2):
            dist = float(np.linalg.norm(last[i] - last[j]))
            if best is None or dist < best[0]:
                best = (dist, (i + 1, j + 1))
        term.pair = best[1]
    elif term.kind == "escape":
        term.index = int(np.argmax(np.linalg.norm(last, axis=1))) + 1
    return Trajectory(res.t, xs, ps, drift_stats(xs, ps, kernel), term, res.sol, n, d)


def time_reversed(s: PhasePoint) -> PhasePoint:
    return PhasePoint(s.x.copy(), -s.p)


def energy_speed(s: PhasePoint, kernel: Kernel) -> float:
    """Riemannian speed sqrt(2H), constant along geodesics."""
    return math.sqrt(2.0 * hamiltonian(s, kernel))
