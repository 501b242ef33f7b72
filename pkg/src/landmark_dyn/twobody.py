"""Two-landmark reduction in center-of-mass coordinates.

With u = x1 - x2, v = (x1 + x2)/2, P = p1 + p2 and Q = (p1 - p2)/2, the
total momentum P is constant, c = |P|^2/4, and

    du/dt = 2 gap(r) Q
    dQ/dt = K'(r) (u/r) (|Q|^2 - c)
    dv/dt = (K(0) + K(r)) P / 2

where r = |u| and gap = K(0) - K. D = gap(r)(|Q|^2 - c) and omega = |u ^ Q|
are conserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import completeness as cmp
from .dynamics import IntOpts, PhasePoint, Termination, solve, wedge
from .kernels import Kernel

NON_COLLAPSING = "non_collapsing"

GLOBAL_EXISTENCE = "global_existence"
FINITE_TIME_COLLISION = "finite_time_collision"
INCONCLUSIVE = "inconclusive"

# omega below this counts as head-on
HEAD_ON_TOL = 1e-12


@dataclass
class TwoBodyState:
    """Reduced state (u, Q) with total momentum P and center of mass v.

    Either ``P`` or ``c`` may be given; with only ``c`` the total momentum is
    taken along the first axis, P = (2 sqrt(c), 0, ...).
    """

    u: np.ndarray
    Q: np.ndarray
    P: np.ndarray | None = None
    v: np.ndarray | None = None
    c: float | None = None

    def __post_init__(self):
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.Q = np.atleast_1d(np.asarray(self.Q, dtype=float))
        d = self.u.shape[0]
        if self.u.shape != (d,) or self.Q.shape != (d,):
            raise ValueError("u and Q must be vectors of the same length")
        if self.P is None:
            c = 0.0 if self.c is None else float(self.c)
            if c < 0:
                raise ValueError("c must be nonnegative")
            self.P = np.zeros(d)
            self.P[0] = 2.0 * math.sqrt(c)
        else:
            self.P = np.atleast_1d(np.asarray(self.P, dtype=float))
            if self.P.shape != (d,):
                raise ValueError("P must have the same length as u")
            c_from_p = float(self.P @ self.P) / 4.0
            if self.c is not None and not math.isclose(self.c, c_from_p, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError(f"c={self.c} inconsistent with |P|^2/4={c_from_p}")
        self.c = float(self.P @ self.P) / 4.0
        self.v = np.zeros(d) if self.v is None else np.atleast_1d(np.asarray(self.v, dtype=float))

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.u))

    def to_json(self) -> dict:
        return {"u": self.u.tolist(), "Q": self.Q.tolist(), "P": self.P.tolist(),
                "v": self.v.tolist(), "c": self.c}


def to_com(s: PhasePoint) -> TwoBodyState:
    if s.n != 2:
        raise ValueError(f"center-of-mass reduction needs n=2, got n={s.n}")
    x1, x2 = s.x
    p1, p2 = s.p
    return TwoBodyState(u=x1 - x2, Q=(p1 - p2) / 2.0, P=p1 + p2, v=(x1 + x2) / 2.0)


def from_com(tb: TwoBodyState) -> PhasePoint:
    x1 = tb.v + tb.u / 2.0
    x2 = tb.v - tb.u / 2.0
    p1 = tb.P / 2.0 + tb.Q
    p2 = tb.P / 2.0 - tb.Q
    return PhasePoint(np.stack([x1, x2]), np.stack([p1, p2]))


def reduced_rhs(tb: TwoBodyState, kernel: Kernel):
    """Return (du/dt, dQ/dt, dv/dt)."""
    r = tb.r
    if r <= 0.0:
        raise ValueError("reduced system is singular at r=0")
    return _reduced(tb.u, tb.Q, tb.P, tb.c, kernel)


def _reduced(u, Q, P, c, kernel):
    r = math.sqrt(float(u @ u))
    g = float(kernel.gap(r))
    du = 2.0 * g * Q
    dQ = float(kernel.deriv(r)) / r * (float(Q @ Q) - c) * u
    dv = 0.5 * (2.0 * kernel.k0 - g) * P
    return du, dQ, dv


def invariants_2b(tb: TwoBodyState, kernel: Kernel) -> tuple[float, float]:
    """Return (D, omega)."""
    D = float(kernel.gap(tb.r)) * (float(tb.Q @ tb.Q) - tb.c)
    omega = float(np.linalg.norm(wedge(tb.u, tb.Q)))
    return D, omega


# ------------------------------------------------------------ collision time

def collision_time(kernel: Kernel, a: float, E: float, c: float = 0.0,
                   opts: cmp.QuadOpts | None = None):
    """Time for head-on data at separation ``a`` to reach r = 0.

    With c = 0 (no total momentum) this is

        T = int_0^a dr / (2 sqrt(E) sqrt(gap(r)))

    where E = gap(r) q^2 is the conserved energy of the relative motion. For
    c > 0 the same separation argument with q^2 = c + E/gap gives

        T = int_0^a dr / (2 sqrt(gap(r)) sqrt(c gap(r) + E)),

    in which ``E`` plays the role of D.

    Returns
    -------
    float or str
        T, or ``NON_COLLAPSING`` when the integral diverges.

    Raises
    ------
    QuadratureError
        The engine could not decide convergence.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if not E > 0:
        raise ValueError("E must be positive")
    if c < 0:
        raise ValueError("c must be nonnegative")

    def f(r):
        g = float(kernel.gap(r))
        return 1.0 / (2.0 * math.sqrt(g) * math.sqrt(c * g + E))

    verdict = cmp.improper_integral(f, a, opts)
    if verdict.status == cmp.CONVERGENT:
        return verdict.value
    if verdict.status == cmp.DIVERGENT:
        return NON_COLLAPSING
    raise cmp.QuadratureError(f"collision-time integral undecided: {verdict.reason}")


def laplacian_exact(b: float, T: float, t: float) -> PhasePoint:
    """Closed-form head-on geodesic of the Laplacian kernel in d = 1.

    x1 = -x2 = log cosh(b (T - t)), p1 = -p2 = -b / tanh(b (T - t)); the two
    landmarks collide at t = T with energy b^2.
    """
    if not (b > 0 and T > 0):
        raise ValueError("b and T must be positive")
    if not 0 <= t < T:
        raise ValueError(f"t must lie in [0, T), got t={t}")
    s = b * (T - t)
    # log cosh s without overflow for large s
    x1 = s + math.log1p(math.exp(-2.0 * s)) - math.log(2.0)
    p1 = -b / math.tanh(s)
    return PhasePoint([[x1], [-x1]], [[p1], [-p1]])


# ------------------------------------------------------------ forecast

@dataclass
class Forecast:
    D: float
    omega: float
    verdict: str
    bound: float | None = None
    predicted_T: float | None = None
    evidence: str = ""

    def to_json(self) -> dict:
        out = {"D": self.D, "omega": self.omega, "verdict": self.verdict}
        if self.bound is not None:
            out["bound"] = self.bound
        if self.predicted_T is not None:
            out["predicted_T"] = self.predicted_T
        out["evidence"] = self.evidence
        return out


def _gap_level(kernel, level, r_hi):
    # smallest r with gap(r) = level, for 0 < level < gap(r_hi)
    return optimize.brentq(lambda r: float(kernel.gap(r)) - level, 0.0, r_hi, xtol=1e-15, rtol=1e-14)


def breakdown_forecast(tb: TwoBodyState, kernel: Kernel,
                       opts: cmp.QuadOpts | None = None) -> Forecast:
    """Decide whether the two-body geodesic can reach collision in finite time.

    Non-head-on data (omega != 0) never collides: for D <= 0 the distance is
    bounded below by omega / sqrt(c), and D > 0 is excluded by a contradiction
    argument. Head-on data follows the scalar analysis of the relative motion.
    """
    r0 = tb.r
    if r0 <= 0:
        raise ValueError("r must be positive")
    D, omega = invariants_2b(tb, kernel)
    c = tb.c
    if omega >= HEAD_ON_TOL:
        if D <= 0:
            # c > 0 here, otherwise |Q|^2 <= 0 would force omega = 0
            return Forecast(D, omega, GLOBAL_EXISTENCE, bound=omega / math.sqrt(c),
                            evidence="Case 1 (D <= 0): r(t) >= omega/sqrt(c)")
        return Forecast(D, omega, GLOBAL_EXISTENCE, evidence="Case 2 (D > 0): no finite-time breakdown")

    report = cmp.classify_geodesic(kernel, opts=opts)
    if report.geodesic == cmp.COMPLETE:
        return Forecast(D, omega, GLOBAL_EXISTENCE,
                        evidence="head-on, criterion integral diverges (complete kernel)")
    inward = float(tb.u @ tb.Q) < 0.0
    if D < 0:
        # q^2 = c + D/gap >= 0 keeps gap(r) >= -D/c
        r_min = _gap_level(kernel, -D / c, r0)
        return Forecast(D, omega, GLOBAL_EXISTENCE, bound=r_min,
                        evidence="head-on with D < 0: turning point where gap(r) = -D/c")
    if not inward:
        return Forecast(D, omega, GLOBAL_EXISTENCE,
                        evidence="head-on outward motion with D >= 0 never reverses")
    if report.geodesic != cmp.INCOMPLETE:
        return Forecast(D, omega, INCONCLUSIVE, evidence=f"kernel classification: {report.criterion.reason}")
    if D == 0 and c == 0:
        return Forecast(D, omega, GLOBAL_EXISTENCE, evidence="Q = 0 and P = 0: stationary")
    try:
        if D > 0:
            T = collision_time(kernel, r0, D, c, opts)
        else:
            # D = 0: the closing speed is 2 sqrt(c) gap(r)
            verdict = cmp.improper_integral(
                lambda r: 1.0 / (2.0 * math.sqrt(c) * float(kernel.gap(r))), r0, opts)
            T = {cmp.CONVERGENT: verdict.value, cmp.DIVERGENT: NON_COLLAPSING}.get(verdict.status)
            if T is None:
                raise cmp.QuadratureError(verdict.reason)
    except cmp.QuadratureError as exc:
        return Forecast(D, omega, INCONCLUSIVE, evidence=f"collision-time quadrature: {exc}")
    if T == NON_COLLAPSING:
        return Forecast(D, omega, GLOBAL_EXISTENCE, evidence="head-on, collision-time integral diverges")
    return Forecast(D, omega, FINITE_TIME_COLLISION, predicted_T=float(T),
                    evidence="head-on inward, collision-time integral converges")


# ------------------------------------------------------------ simulation

@dataclass
class TwoBodyTrajectory:
    times: np.ndarray
    u: np.ndarray
    Q: np.ndarray
    v: np.ndarray
    P: np.ndarray
    termination: Termination
    invariant_drift: dict
    identity_residual: float
    min_r: float
    dense: object = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"termination": self.termination.to_json(), "invariant_drift": self.invariant_drift,
                "identity_residual": self.identity_residual, "min_r": self.min_r,
                "t_final": float(self.times[-1])}


def _dense_min_r(sol, times, d):
    """Minimum of |u(t)| over the dense output, refined per step."""
    if sol is None or len(times) < 2:
        return None
    sub = np.linspace(0.0, 1.0, 9)
    grid = (times[:-1, None] + (times[1:] - times[:-1])[:, None] * sub[None, :]).ravel()
    uu = sol(grid)[:d]
    rr = np.linalg.norm(uu, axis=0)
    k = int(np.argmin(rr))
    best = float(rr[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: float(np.linalg.norm(sol(t)[:d])),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def simulate_twobody(tb: TwoBodyState, kernel: Kernel, t_end: float,
                     opts: IntOpts | None = None) -> TwoBodyTrajectory:
    """Integrate the reduced system with the same driver as the full flow.

    Terminates on r = eps_coll (collision) or r = r_esc (escape).
    """
    opts = opts or IntOpts()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if tb.r <= opts.eps_coll:
        raise ValueError("initial separation is within the collision threshold")
    d = tb.d
    P, c = tb.P, tb.c

    def fun(t, y):
        du, dQ, dv = _reduced(y[:d], y[d:2 * d], P, c, kernel)
        return np.concatenate([du, dQ, dv])

    def coll(t, y):
        return float(np.linalg.norm(y[:d])) - opts.eps_coll

    def esc(t, y):
        return opts.r_esc - float(np.linalg.norm(y[:d]))

    y0 = np.concatenate([tb.u, tb.Q, tb.v])
    res = solve(fun, y0, t_end, opts, (coll, esc), ("collision", "escape"))
    u, Q, v = res.y[:, :d], res.y[:, d:2 * d], res.y[:, 2 * d:]
    if res.termination.kind == "collision":
        res.termination.pair = (1, 2)

    D0, w0 = invariants_2b(tb, kernel)
    r0, q0 = tb.r, float(np.linalg.norm(tb.Q))
    d_scale = max(abs(D0), float(kernel.gap(r0)) * (q0 ** 2 + c)) or 1.0
    w_scale = max(w0, r0 * q0) or 1.0
    dD = dw = ident = 0.0
    for uk, Qk in zip(u, Q):
        st = TwoBodyState(uk, Qk, P=P)
        Dk, wk = invariants_2b(st, kernel)
        dD = max(dD, abs(Dk - D0) / d_scale)
        dw = max(dw, abs(wk - w0) / w_scale)
        lhs = wk ** 2 + float(uk @ Qk) ** 2
        rhs_ = float(uk @ uk) * float(Qk @ Qk)
        ident = max(ident, abs(lhs - rhs_) / max(rhs_, 1.0))
    min_r = float(np.min(np.linalg.norm(u, axis=1)))
    dense_min = _dense_min_r(res.sol, res.t, d)
    if dense_min is not None:
        min_r = min(min_r, dense_min)
    return TwoBodyTrajectory(res.t, u, Q, v, P, res.termination, {"D": dD, "omega": dw},
                             ident, min_r, res.sol)
