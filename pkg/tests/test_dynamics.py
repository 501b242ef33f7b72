import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import separated_points
from landmark_dyn.dynamics import (
    CollisionError,
    IntOpts,
    PhasePoint,
    conserved,
    energy_speed,
    hamiltonian,
    integrate,
    rhs,
    time_reversed,
    wedge,
)
from landmark_dyn.kernels import make_kernel
from landmark_dyn.twobody import laplacian_exact


def _brute_h(x, p, kernel):
    n = len(x)
    tot = 0.0
    for i in range(n):
        for j in range(n):
            r = float(np.linalg.norm(x[i] - x[j]))
            tot += float(kernel.eval(r)) * float(p[i] @ p[j])
    return 0.5 * tot


def test_hamiltonian_example():
    lap = make_kernel("laplacian")
    s = PhasePoint([[0.0], [1.0]], [[1.0], [-1.0]])
    assert hamiltonian(s, lap) == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert hamiltonian(s, lap) == pytest.approx(_brute_h(s.x, s.p, lap), rel=1e-15)
    assert hamiltonian(s, lap) == pytest.approx(0.632121, abs=1e-6)


def test_hamiltonian_zero_momenta(builtin, rng):
    x = separated_points(rng, 4, 2)
    assert hamiltonian(PhasePoint(x, np.zeros_like(x)), builtin) == 0.0


def test_hamiltonian_matches_brute_force(builtin, rng):
    for _ in range(10):
        n, d = rng.integers(2, 6), rng.integers(1, 4)
        x = separated_points(rng, n, d)
        p = rng.normal(size=(n, d))
        assert hamiltonian(PhasePoint(x, p), builtin) == pytest.approx(
            _brute_h(x, p, builtin), rel=1e-12)


def test_antisymmetric_pair_energy(builtin):
    q = np.array([0.3, -0.4])
    x = np.array([[0.2, 0.1], [-0.5, 0.7]])
    r = float(np.linalg.norm(x[0] - x[1]))
    h = hamiltonian(PhasePoint(x, [q, -q]), builtin)
    assert h == pytest.approx(float(builtin.gap(r)) * float(q @ q), rel=1e-13)


def test_rhs_zero_momenta(builtin, rng):
    x = separated_points(rng, 3, 2)
    dx, dp = rhs(PhasePoint(x, np.zeros_like(x)), builtin)
    assert not dx.any() and not dp.any()


def test_rhs_is_hamiltonian_gradient(builtin, rng):
    for _ in range(5):
        n, d = rng.integers(2, 5), rng.integers(1, 4)
        x = separated_points(rng, n, d)
        p = rng.normal(size=(n, d))
        s = PhasePoint(x, p)
        dx, dp = rhs(s, builtin)
        vx, vp = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        h = 1e-6
        dHdp = (hamiltonian(PhasePoint(x, p + h * vp), builtin)
                - hamiltonian(PhasePoint(x, p - h * vp), builtin)) / (2 * h)
        dHdx = (hamiltonian(PhasePoint(x + h * vx, p), builtin)
                - hamiltonian(PhasePoint(x - h * vx, p), builtin)) / (2 * h)
        assert float(np.sum(dx * vp)) == pytest.approx(dHdp, rel=1e-5, abs=1e-9)
        assert float(np.sum(-dp * vx)) == pytest.approx(dHdx, rel=1e-5, abs=1e-9)


def test_conserved_examples():
    lap = make_kernel("laplacian")
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    c = conserved(PhasePoint(x, np.zeros_like(x)), lap)
    assert c.H == 0 and not c.P.any() and not c.L.any()
    c = conserved(PhasePoint(x, [[0.0, 1.0], [0.0, -1.0]]), lap)
    assert np.allclose(c.P, 0) and c.L == pytest.approx([2.0])
    x1, p1 = np.array([0.3, 0.5, -0.2]), np.array([0.1, -0.7, 0.4])
    c = conserved(PhasePoint([x1, -x1], [p1, -p1]), lap)
    assert np.allclose(c.L, 2 * wedge(x1, p1), atol=1e-15)


def test_wedge_examples(rng):
    assert wedge([1.0, 0.0], [0.0, 1.0]).tolist() == [1.0]
    w = wedge([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert w.tolist() == [-3.0, -6.0, -3.0]
    assert float(w @ w) + 32.0**2 == 14.0 * 77.0
    y = rng.normal(size=4)
    assert not wedge(y, y).any()
    assert wedge([2.0], [3.0]).size == 0
    with pytest.raises(ValueError):
        wedge([1.0, 2.0], [1.0, 2.0, 3.0])


@pytest.mark.parametrize("d", [1, 2, 3, 5])
@given(data=st.data())
def test_wedge_identity(d, data):
    vec = arrays(np.float64, d, elements=st.floats(-1e3, 1e3))
    y, z = data.draw(vec), data.draw(vec)
    w = wedge(y, z)
    lhs = float(w @ w) + float(y @ z) ** 2
    rhs_ = float(y @ y) * float(z @ z)
    assert abs(lhs - rhs_) <= 1e-12 * max(rhs_, 1e-300) + 1e-300


def test_phasepoint_validation():
    with pytest.raises(ValueError):
        PhasePoint([[0.0, 1.0]], [[0.0, 1.0]])
    with pytest.raises(ValueError):
        PhasePoint([[0.0], [1.0]], [[0.0, 1.0], [1.0, 0.0]])
    s = PhasePoint([[0.0, 1.0], [2.0, 3.0]], [[1.0, 0.0], [0.0, 1.0]])
    assert PhasePoint.unpack(s.pack(), 2, 2).x.tolist() == s.x.tolist()
    assert PhasePoint.from_json(s.to_json()).p.tolist() == s.p.tolist()
    with pytest.raises(ValueError):
        PhasePoint.from_json({"n": 3, "x": [[0.0], [1.0]], "p": [[0.0], [0.0]]})


def test_integrate_rejects_collided_start():
    with pytest.raises(CollisionError):
        integrate(PhasePoint([[0.0], [0.0]], [[1.0], [-1.0]]), make_kernel("gaussian"), 1.0)
    with pytest.raises(ValueError):
        integrate(PhasePoint([[0.0], [1.0]], [[1.0], [-1.0]]), make_kernel("gaussian"), 0.0)


def test_zero_momenta_trajectory_constant(builtin, rng):
    x = separated_points(rng, 3, 2)
    tr = integrate(PhasePoint(x, np.zeros_like(x)), builtin, 5.0)
    assert tr.termination.kind == "reached_t_end"
    assert np.array_equal(tr.x[-1], x) and not tr.p.any()


def test_laplacian_head_on_collides_near_one():
    s0 = laplacian_exact(1.0, 1.0, 0.0)
    tr = integrate(s0, make_kernel("laplacian"), 2.0)
    assert tr.termination.kind == "collision"
    assert tr.termination.pair == (1, 2)
    # closed form: separation 2 log cosh(1 - t) equals eps_coll at t = 1 - acosh(exp(eps/2))
    t_hit = 1.0 - math.acosh(math.exp(0.5e-6))
    assert tr.termination.t_event == pytest.approx(t_hit, abs=1e-4)


def test_c1_bessel_same_data_survives():
    s0 = laplacian_exact(1.0, 1.0, 0.0)
    k = make_kernel("c1_bessel")
    tr = integrate(s0, k, 10.0, IntOpts(eps_coll=1e-9))
    assert tr.termination.kind == "reached_t_end"
    assert tr.conserved_drift["H"] < 1e-6
    assert tr.x[:, 0, 0].min() > 0


def test_escape_event():
    k = make_kernel("laplacian")
    s0 = PhasePoint([[0.0], [10.0]], [[-1.0], [1.0]])
    tr = integrate(s0, k, 100.0, IntOpts(r_esc=20.0))
    assert tr.termination.kind == "escape"
    assert tr.termination.index in (1, 2)


def test_time_reversal(builtin, rng):
    x = separated_points(rng, 3, 2)
    p = rng.uniform(-1, 1, size=(3, 2)) / 2
    s0 = PhasePoint(x, p)
    opts = IntOpts(rtol=1e-11, atol=1e-13)
    fwd = integrate(s0, builtin, 2.0, opts)
    assert fwd.termination.kind == "reached_t_end"
    back = integrate(time_reversed(PhasePoint(fwd.x[-1], fwd.p[-1])), builtin, 2.0, opts)
    assert np.max(np.abs(back.x[-1] - x)) < 1e-6
    assert np.max(np.abs(-back.p[-1] - p)) < 1e-6


def test_zero_momentum_landmark_stays_at_rest(rng):
    k = make_kernel("gaussian")
    for _ in range(5):
        x = separated_points(rng, 4, 2)
        p = rng.uniform(-1, 1, size=(4, 2))
        p[2:] = 0.0
        p[1] = -p[0]
        tr = integrate(PhasePoint(x, p), k, 5.0)
        assert np.max(np.abs(tr.p[:, 2:])) <= 1e-10


def test_dense_output_and_energy_speed():
    k = make_kernel("gaussian")
    s0 = PhasePoint([[0.0, 0.0], [1.0, 0.5]], [[0.5, 0.0], [0.0, -0.3]])
    tr = integrate(s0, k, 3.0)
    mid = tr.at(1.5)
    assert energy_speed(mid, k) == pytest.approx(energy_speed(s0, k), rel=1e-7)


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(-5, 5), angle=st.floats(0, 2 * math.pi))
def test_hamiltonian_scaling_and_euclidean_invariance(seed, lam, angle):
    rng = np.random.default_rng(seed)
    k = make_kernel("c1_bessel")
    x = rng.normal(size=(3, 2))
    p = rng.normal(size=(3, 2))
    h = hamiltonian(PhasePoint(x, p), k)
    assert hamiltonian(PhasePoint(x, lam * p), k) == pytest.approx(lam * lam * h, rel=1e-12, abs=1e-14)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    shift = rng.normal(size=2)
    moved = PhasePoint(x @ rot.T + shift, p @ rot.T)
    assert hamiltonian(moved, k) == pytest.approx(h, rel=1e-12, abs=1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_rhs_total_force_vanishes(seed):
    # momentum conservation at the level of the vector field
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 3))
    p = rng.normal(size=(4, 3))
    _, dp = rhs(PhasePoint(x, p), make_kernel("laplacian"))
    assert np.allclose(dp.sum(axis=0), 0.0, atol=1e-12 * (1 + np.abs(dp).max()))
