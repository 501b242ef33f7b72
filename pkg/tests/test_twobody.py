import math

import numpy as np
import pytest
from scipy import integrate

from landmark_dyn.dynamics import IntOpts, PhasePoint, integrate as shoot, rhs
from landmark_dyn.kernels import make_kernel
from landmark_dyn.twobody import (
    FINITE_TIME_COLLISION,
    GLOBAL_EXISTENCE,
    NON_COLLAPSING,
    TwoBodyState,
    breakdown_forecast,
    collision_time,
    from_com,
    invariants_2b,
    laplacian_exact,
    reduced_rhs,
    simulate_twobody,
    to_com,
)

LAP = make_kernel("laplacian")


def test_to_com_example():
    s = PhasePoint([[1.0, 0.0], [-1.0, 0.0]], [[0.0, 1.0], [0.0, -1.0]])
    tb = to_com(s)
    assert tb.u.tolist() == [2.0, 0.0]
    assert tb.v.tolist() == [0.0, 0.0]
    assert tb.P.tolist() == [0.0, 0.0]
    assert tb.Q.tolist() == [0.0, 1.0]
    assert tb.c == 0.0


def test_equal_momenta_give_zero_Q(rng):
    p = rng.normal(size=3)
    tb = to_com(PhasePoint(rng.normal(size=(2, 3)), [p, p]))
    assert not tb.Q.any()


def test_com_roundtrip(rng):
    s = PhasePoint(rng.normal(size=(2, 3)), rng.normal(size=(2, 3)))
    back = from_com(to_com(s))
    assert np.allclose(back.x, s.x, atol=1e-15) and np.allclose(back.p, s.p, atol=1e-15)
    with pytest.raises(ValueError):
        to_com(PhasePoint(rng.normal(size=(3, 2)), rng.normal(size=(3, 2))))


def test_state_validation():
    tb = TwoBodyState([1.0, 0.0], [0.0, 1.0], c=0.25)
    assert tb.P.tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        TwoBodyState([1.0, 0.0], [0.0, 1.0], P=[1.0, 0.0], c=3.0)
    with pytest.raises(ValueError):
        TwoBodyState([1.0, 0.0], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        TwoBodyState([1.0], [1.0], c=-1.0)


def test_reduced_rhs_static_case():
    du, dQ, dv = reduced_rhs(TwoBodyState([1.0, 0.5], [0.0, 0.0]), LAP)
    assert not du.any() and not dQ.any() and not dv.any()
    with pytest.raises(ValueError):
        reduced_rhs(TwoBodyState([0.0, 0.0], [1.0, 0.0]), LAP)


def test_reduced_rhs_matches_full_system(builtin, rng):
    for _ in range(5):
        s = PhasePoint(rng.normal(size=(2, 3)), rng.normal(size=(2, 3)))
        dx, dp = rhs(s, builtin)
        du, dQ, dv = reduced_rhs(to_com(s), builtin)
        assert np.allclose(du, dx[0] - dx[1], rtol=1e-12, atol=1e-14)
        assert np.allclose(dv, (dx[0] + dx[1]) / 2, rtol=1e-12, atol=1e-14)
        assert np.allclose(dQ, (dp[0] - dp[1]) / 2, rtol=1e-12, atol=1e-14)


def test_invariants_examples(rng):
    D, w = invariants_2b(TwoBodyState([1.0, 0.0], [0.0, 1.0]), LAP)
    assert D == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert w == 1.0
    u = rng.normal(size=3)
    assert invariants_2b(TwoBodyState(u, 2.5 * u), LAP)[1] == pytest.approx(0.0, abs=1e-14)
    Q = rng.normal(size=2)
    D, _ = invariants_2b(TwoBodyState(rng.normal(size=2), Q, c=float(Q @ Q)), LAP)
    assert D == pytest.approx(0.0, abs=1e-14)


def test_energy_of_exact_solution_is_b_squared():
    # E = gap(u) q^2 along the closed form, at several times
    for b in (0.5, 1.0, 2.0):
        for t in (0.0, 0.3, 0.9):
            s = laplacian_exact(b, 1.0, t)
            u = 2 * s.x[0, 0]
            q = s.p[0, 0]
            assert float(LAP.gap(u)) * q * q == pytest.approx(b * b, rel=1e-12)


def test_collision_time_laplacian():
    T = collision_time(LAP, 2 * math.log(math.cosh(1.0)), 1.0)
    assert T == pytest.approx(1.0, abs=1e-6)
    # E scales time by 1/sqrt(E)
    T4 = collision_time(LAP, 2 * math.log(math.cosh(1.0)), 4.0)
    assert T4 / T == pytest.approx(0.5, rel=1e-10)


def test_collision_time_against_smooth_substitution():
    # r = w^2 removes the endpoint singularity for an independent quad
    a, E = 1.3, 0.7
    ref, _ = integrate.quad(lambda w: w / (math.sqrt(E) * math.sqrt(-math.expm1(-w * w))),
                            0, math.sqrt(a), epsabs=1e-14, epsrel=1e-13)
    assert collision_time(LAP, a, E) == pytest.approx(ref, rel=1e-9)


def test_collision_time_complete_kernel():
    assert collision_time(make_kernel("c1_bessel"), 0.8, 1.0) == NON_COLLAPSING
    with pytest.raises(ValueError):
        collision_time(LAP, 1.0, 0.0)


def test_laplacian_exact_shape_and_residual():
    for t in (0.0, 0.5, 0.99):
        s = laplacian_exact(1.0, 1.0, t)
        x1, p1 = s.x[0, 0], s.p[0, 0]
        assert x1 == -s.x[1, 0] and x1 > 0
        assert p1 == -s.p[1, 0] and p1 < 0
        th = 1.0 - t
        dx1 = -math.tanh(th)
        dp1 = -1.0 / math.sinh(th) ** 2
        dx, dp = rhs(s, LAP)
        assert abs(dx[0, 0] - dx1) < 1e-10 and abs(dp[0, 0] - dp1) < 1e-10 * max(1, abs(dp1))
    near = laplacian_exact(1.0, 1.0, 1 - 1e-9)
    assert near.x[0, 0] < 1e-15 and near.p[0, 0] < -1e8
    with pytest.raises(ValueError):
        laplacian_exact(1.0, 1.0, 1.0)


def test_forecast_case1_bound():
    f = breakdown_forecast(TwoBodyState([1.0, 0.0], [0.0, -1.0], c=1.0), LAP)
    assert f.verdict == GLOBAL_EXISTENCE
    assert f.omega == 1.0 and f.D <= 0
    assert f.bound == pytest.approx(1.0)


def test_forecast_case2():
    f = breakdown_forecast(TwoBodyState([1.0, 0.0], [0.3, 1.0]), LAP)
    assert f.verdict == GLOBAL_EXISTENCE and f.bound is None and f.D > 0


def test_forecast_head_on_laplacian():
    a, q = 1.2, 0.8
    f = breakdown_forecast(TwoBodyState([a, 0.0], [-q, 0.0]), LAP)
    assert f.verdict == FINITE_TIME_COLLISION
    E = float(LAP.gap(a)) * q * q
    ref, _ = integrate.quad(lambda w: w / (math.sqrt(E) * math.sqrt(-math.expm1(-w * w))),
                            0, math.sqrt(a), epsabs=1e-14, epsrel=1e-13)
    assert f.predicted_T == pytest.approx(ref, rel=1e-9)
    sim = simulate_twobody(TwoBodyState([a, 0.0], [-q, 0.0]), LAP, 5.0)
    assert sim.termination.kind == "collision"
    # the event fires at r = eps_coll; the remaining stretch is itself a collision time
    rest = collision_time(LAP, IntOpts().eps_coll, E)
    assert sim.termination.t_event + rest == pytest.approx(f.predicted_T, abs=1e-8)


def test_forecast_head_on_with_total_momentum():
    tb = TwoBodyState([0.9], [-0.7], c=0.2)
    f = breakdown_forecast(tb, LAP)
    assert f.verdict == FINITE_TIME_COLLISION
    sim = simulate_twobody(tb, LAP, 5.0, IntOpts(eps_coll=1e-9))
    rest = collision_time(LAP, 1e-9, f.D, tb.c)
    assert sim.termination.t_event + rest == pytest.approx(f.predicted_T, abs=1e-8)


def test_forecast_head_on_turning_point():
    tb = TwoBodyState([1.0], [-0.3], c=0.5)
    f = breakdown_forecast(tb, LAP)
    assert f.D < 0 and f.verdict == GLOBAL_EXISTENCE
    sim = simulate_twobody(tb, LAP, 10.0)
    assert sim.termination.kind == "reached_t_end"
    assert sim.min_r == pytest.approx(f.bound, abs=1e-7)


def test_forecast_outward_and_complete():
    assert breakdown_forecast(TwoBodyState([1.0], [0.5]), LAP).verdict == GLOBAL_EXISTENCE
    c1 = make_kernel("c1_bessel")
    for tb in (TwoBodyState([1.0], [-5.0]), TwoBodyState([1.0, 0.0], [0.2, 0.4], c=1.0)):
        assert breakdown_forecast(tb, c1).verdict == GLOBAL_EXISTENCE
    assert "omega" in breakdown_forecast(TwoBodyState([1.0], [-5.0]), c1).to_json()


def test_simulation_invariants(builtin, rng):
    for _ in range(3):
        tb = TwoBodyState(rng.uniform(0.5, 2, 2), rng.uniform(-1, 1, 2), P=rng.uniform(-1, 1, 2))
        tr = simulate_twobody(tb, builtin, 10.0, IntOpts(rtol=1e-11, atol=1e-13))
        if tr.termination.kind != "reached_t_end":
            continue
        assert tr.invariant_drift["D"] < 1e-8
        assert tr.invariant_drift["omega"] < 1e-8
        assert tr.identity_residual < 1e-10


def test_case1_bound_holds_in_simulation(rng):
    worst = math.inf
    for _ in range(100):
        u = rng.uniform(-2, 2, 2)
        Q = rng.uniform(-1, 1, 2)
        # D <= 0 needs c >= |Q|^2
        c = float(Q @ Q) * rng.uniform(1.0, 3.0) + 1e-3
        tb = TwoBodyState(u, Q, c=c)
        f = breakdown_forecast(tb, LAP)
        if f.omega < 1e-3:
            continue
        tr = simulate_twobody(tb, LAP, 20.0)
        assert tr.termination.kind == "reached_t_end"
        worst = min(worst, tr.min_r - f.bound)
    assert worst >= -1e-6


def test_reduced_and_full_flows_agree():
    s0 = PhasePoint([[0.5, 0.2], [-0.4, 0.1]], [[0.3, -0.2], [0.1, 0.5]])
    full = shoot(s0, LAP, 4.0, IntOpts(rtol=1e-11, atol=1e-13))
    red = simulate_twobody(to_com(s0), LAP, 4.0, IntOpts(rtol=1e-11, atol=1e-13))
    end = full.x[-1]
    assert np.allclose(red.u[-1], end[0] - end[1], atol=1e-8)
    assert np.allclose(red.v[-1], (end[0] + end[1]) / 2, atol=1e-8)
