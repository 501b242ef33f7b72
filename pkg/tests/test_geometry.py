import math

import numpy as np
import pytest
from scipy import integrate as sint

from conftest import separated_points
from landmark_dyn.dynamics import PhasePoint, hamiltonian, integrate
from landmark_dyn.geometry import (
    GeometryError,
    SampledCurve,
    collision_bound,
    cometric_form,
    curve_length,
    escape_bound,
    gram,
    metric_matrix,
    radius_covector,
    separation_covector,
)
from landmark_dyn.kernels import make_kernel

LAP = make_kernel("laplacian")
C1 = make_kernel("c1_bessel")


def test_two_landmark_inverse_closed_form():
    x = np.array([[0.0], [0.7]])
    k = math.exp(-0.7)
    G = metric_matrix(x, LAP).G
    expected = np.array([[1.0, -k], [-k, 1.0]]) / (1 - k * k)
    assert np.allclose(G, expected, rtol=1e-13)


def test_metric_properties(builtin, rng):
    for _ in range(100):
        n, d = rng.integers(2, 5), rng.integers(1, 4)
        x = separated_points(rng, n, d, min_sep=0.05)
        m = metric_matrix(x, builtin)
        Kfull = np.kron(m.gram, np.eye(d))
        assert np.allclose(m.G @ Kfull, np.eye(n * d), atol=1e-10)
        assert np.array_equal(m.G, m.G.T)
        assert m.min_eigenvalue > 0


def test_far_apart_limit(builtin):
    x = np.array([[0.0, 0.0], [500.0, 0.0], [0.0, 800.0]])
    G = metric_matrix(x, builtin).G
    assert np.allclose(G, np.eye(6) / builtin.k0, atol=1e-12)


def test_translation_invariance(rng):
    x = separated_points(rng, 3, 2)
    shift = rng.normal(size=2) * 10
    assert np.allclose(metric_matrix(x, LAP).G, metric_matrix(x + shift, LAP).G, atol=1e-13)


def test_near_collision_reported():
    with pytest.raises(GeometryError, match="closer"):
        metric_matrix(np.array([[0.0], [1e-12]]), LAP)


def test_constant_curve_has_zero_length():
    pts = np.repeat(np.array([[[0.0, 0.0], [1.0, 0.0]]]), 5, axis=0)
    c = SampledCurve(np.arange(5.0), pts)
    assert curve_length(c, LAP) == 0.0
    assert collision_bound(c, 0, 1, LAP) == 0.0
    assert escape_bound(c, 0, LAP) == 0.0


def test_lone_mover_length_limit():
    m, ell = 50, 2.0
    t = np.linspace(0, 1, m)
    pts = np.zeros((m, 2, 2))
    pts[:, 0, 0] = ell * t
    pts[:, 1, 1] = 1e4
    c = SampledCurve(t, pts)
    assert curve_length(c, C1) == pytest.approx(ell / math.sqrt(C1.k0), rel=1e-12)


def test_length_converges_under_refinement():
    def curve(m):
        t = np.linspace(0, 1, m)
        pts = np.stack([np.c_[np.cos(t), np.sin(t)], np.c_[-1 + 0.3 * t, 0.5 * t**2]], axis=1)
        return SampledCurve(t, pts)

    l1, l2, l3 = (curve_length(curve(m), LAP) for m in (200, 400, 800))
    assert abs(l3 - l2) < 1e-4
    # midpoint rule: error ratio about 4 per halving
    assert abs(l2 - l1) / abs(l3 - l2) == pytest.approx(4.0, rel=0.1)


def _head_on(a, delta, m=4000):
    s = np.geomspace(a, delta, m)
    pts = np.zeros((m, 2, 1))
    pts[:, 0, 0] = s / 2
    pts[:, 1, 0] = -s / 2
    return SampledCurve(np.arange(m, dtype=float), pts)


def test_head_on_bound_laplacian_is_bounded():
    a = 1.0
    b6 = collision_bound(_head_on(a, 1e-6), 0, 1, LAP)
    ref, _ = sint.quad(lambda r: 1 / math.sqrt(2 * -math.expm1(-r)), 1e-6, a, limit=200)
    assert b6 == pytest.approx(ref, rel=1e-5)
    b12 = collision_bound(_head_on(a, 1e-12), 0, 1, LAP)
    assert b12 - b6 < 2e-3


def test_head_on_bound_c1_bessel_grows():
    b3 = collision_bound(_head_on(1.0, 1e-3), 0, 1, C1)
    b6 = collision_bound(_head_on(1.0, 1e-6), 0, 1, C1)
    b9 = collision_bound(_head_on(1.0, 1e-9), 0, 1, C1)
    # gap ~ r^2 near 0 so each factor 10^3 adds ln(10^3)/sqrt(2)
    step = math.log(1e3) / math.sqrt(2)
    assert b6 - b3 >= 0.99 * step
    assert b9 - b6 == pytest.approx(step, rel=1e-3)


def test_escape_bound_radial_motion(builtin):
    R = 7.0
    s = np.linspace(1.0, R, 30)
    pts = np.zeros((30, 2, 2))
    pts[:, 0, 0] = s
    pts[:, 1, 1] = -3.0
    c = SampledCurve(s, pts)
    assert escape_bound(c, 0, builtin) == pytest.approx((R - 1) / math.sqrt(builtin.k0), rel=1e-13)
    assert escape_bound(c, 1, builtin) == 0.0


def test_escape_bound_splits_at_origin():
    pts = np.zeros((2, 2, 2))
    pts[:, 0, 0] = [-1.0, 2.0]
    pts[:, 1] = [[0.0, 5.0], [0.0, 5.0]]
    c = SampledCurve([0.0, 1.0], pts)
    assert escape_bound(c, 0, LAP) == pytest.approx(3.0)


def _random_curve(rng):
    n, d, m = rng.integers(2, 5), rng.integers(1, 4), rng.integers(3, 40)
    x0 = separated_points(rng, n, d, min_sep=0.3)
    steps = rng.normal(scale=0.15, size=(m - 1, n, d))
    pts = np.concatenate([x0[None], x0[None] + np.cumsum(steps, axis=0)])
    return SampledCurve(np.arange(m, dtype=float), pts)


def test_length_dominates_bounds(builtin, rng):
    done = 0
    while done < 100:
        c = _random_curve(rng)
        try:
            L = curve_length(c, builtin)
        except (ValueError, np.linalg.LinAlgError):
            continue
        for i in range(c.n):
            assert L >= escape_bound(c, i, builtin) - 1e-8
            for j in range(i + 1, c.n):
                assert L >= collision_bound(c, i, j, builtin) - 1e-8
        done += 1


def test_cometric_identity(builtin, rng):
    for _ in range(50):
        n, d = rng.integers(2, 6), rng.integers(1, 4)
        x = separated_points(rng, n, d, min_sep=0.01)
        for i in range(n):
            for j in range(i + 1, n):
                r = float(np.linalg.norm(x[i] - x[j]))
                val = cometric_form(x, builtin, separation_covector(x, i, j))
                assert abs(val - 2 * float(builtin.gap(r))) < 1e-10
            assert cometric_form(x, builtin, radius_covector(x, i)) == pytest.approx(builtin.k0)


def test_covectors_at_singular_points():
    x = np.zeros((2, 2))
    with pytest.raises(GeometryError):
        separation_covector(x, 0, 1)
    with pytest.raises(GeometryError):
        radius_covector(x, 0)


def test_geodesic_length_is_speed_times_time():
    s0 = PhasePoint([[0.0, 0.0], [1.0, 0.2], [-0.5, 1.0]], [[0.4, -0.1], [0.0, 0.3], [-0.2, 0.0]])
    k = make_kernel("gaussian")
    t_end = 2.0
    tr = integrate(s0, k, t_end)
    t = np.linspace(0, t_end, 2001)
    pts = np.stack([tr.at(tt).x for tt in t])
    L = curve_length(SampledCurve(t, pts), k)
    assert L == pytest.approx(math.sqrt(2 * hamiltonian(s0, k)) * t_end, rel=1e-4)


def test_curve_csv_roundtrip(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("t,x_1_1,x_1_2,x_2_1,x_2_2,H\n0,0,0,1,0,9\n1,0,1,1,0,9\n")
    c = SampledCurve.from_csv(path)
    assert c.points.shape == (2, 2, 2)
    assert c.points[1, 0].tolist() == [0.0, 1.0]
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x_1_1,x_2_2\n0,0,1\n1,1,1\n")
    with pytest.raises(ValueError):
        SampledCurve.from_csv(bad)


def test_curve_validation():
    with pytest.raises(ValueError):
        SampledCurve([0.0, 0.0], np.zeros((2, 2, 1)) + [[[0.0], [1.0]]])
    with pytest.raises(ValueError):
        SampledCurve([0.0, 1.0, 2.0], np.zeros((3, 2, 1)))


def test_gram_diagonal():
    g = gram(np.array([[0.0], [0.5]]), C1)
    assert g[0, 0] == g[1, 1] == 2.0
