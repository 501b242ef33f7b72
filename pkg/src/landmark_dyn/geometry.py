"""Metric, curve length and the length lower bounds near collision and infinity.

The cometric on landmark space has blocks K(|x_i - x_j|) I_d; the metric G
is its inverse. For a covector alpha (an n x d array) the cometric pairing is
sum_{ij} K_ij <alpha_i, alpha_j>.

Landmark indices in this module are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kernels import Kernel

NEAR_COLLISION = 1e-10


class GeometryError(ValueError):
    """Configuration too close to the collision set for a reliable metric."""


@dataclass
class SampledCurve:
    times: np.ndarray
    points: np.ndarray  # (m, n, d)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 3:
            raise ValueError("points must have shape (m, n, d)")
        if self.times.shape != (self.points.shape[0],):
            raise ValueError("one time per sample is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.points.shape[1] < 2:
            raise ValueError("need at least two landmarks")
        for x in self.points[1:-1]:
            if _min_dist(x) <= 0.0:
                raise ValueError("interior curve point lies on the collision set")

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def d(self) -> int:
        return self.points.shape[2]

    @classmethod
    def from_csv(cls, path) -> "SampledCurve":
        """Read a CSV with a header row, a ``t`` column and ``x_<i>_<k>`` columns.

        Other columns (momenta, conserved quantities of a trajectory file) are
        ignored, so ``shoot`` output can be measured directly.
        """
        with open(path, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().strip().split(",")]
        if not header or header[0] != "t":
            raise ValueError("first column of a curve CSV must be 't'")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != len(header):
            raise ValueError("curve CSV rows do not match the header")
        idx = {}
        for col, h in enumerate(header):
            parts = h.split("_")
            if parts[0] == "x" and len(parts) == 3:
                idx[(int(parts[1]), int(parts[2]))] = col
        if not idx:
            raise ValueError("curve CSV has no x_<i>_<k> columns")
        n = max(i for i, _ in idx)
        d = max(k for _, k in idx)
        if sorted(idx) != [(i, k) for i in range(1, n + 1) for k in range(1, d + 1)]:
            raise ValueError("curve CSV must have one column x_<i>_<k> per landmark and axis")
        pts = np.empty((data.shape[0], n, d))
        for (i, k), col in idx.items():
            pts[:, i - 1, k - 1] = data[:, col]
        return cls(data[:, 0], pts)


def _min_dist(x):
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    n = x.shape[0]
    return float(np.min(dist[np.triu_indices(n, 1)]))


def gram(x, kernel: Kernel) -> np.ndarray:
    """n x n matrix K(|x_i - x_j|) with K(0) on the diagonal."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    out = np.asarray(kernel.eval(dist.ravel()), dtype=float).reshape(dist.shape)
    np.fill_diagonal(out, kernel.k0)
    return out


@dataclass
class MetricMatrix:
    """G = (Gram ⊗ I_d)^{-1} together with the Gram factorisation."""

    G: np.ndarray
    gram: np.ndarray
    cond: float
    d: int

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.G)))


def metric_matrix(x, kernel: Kernel) -> MetricMatrix:
    """Invert the Gram matrix by Cholesky and expand to nd x nd.

    Raises
    ------
    GeometryError
        Landmarks within 1e-10 of each other, or a Gram matrix that is not
        numerically positive definite (condition estimate in the message).
    """
    x = np.asarray(x, dtype=float)
    if _min_dist(x) < NEAR_COLLISION:
        raise GeometryError(f"landmarks closer than {NEAR_COLLISION:g}; Gram matrix is singular")
    gm = gram(x, kernel)
    cond = float(np.linalg.cond(gm))
    try:
        fac = linalg.cho_factor(gm)
    except linalg.LinAlgError:
        raise GeometryError(f"Gram matrix not positive definite (condition {cond:.3g})") from None
    inv = linalg.cho_solve(fac, np.eye(gm.shape[0]))
    inv = 0.5 * (inv + inv.T)
    d = x.shape[1]
    return MetricMatrix(np.kron(inv, np.eye(d)), gm, cond, d)


def _seg_length(xm, dx, kernel):
    fac = linalg.cho_factor(gram(xm, kernel))
    return math.sqrt(max(float(np.sum(dx * linalg.cho_solve(fac, dx))), 0.0))


def curve_length(c: SampledCurve, kernel: Kernel) -> float:
    """Sum over segments of sqrt(<dx, G(mid) dx>), G taken at the midpoint."""
    if len(c.times) < 2:
        raise ValueError("a curve needs at least two samples")
    pts = c.points
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        dx = b - a
        if not np.any(dx):
            continue
        total += _seg_length(0.5 * (a + b), dx, kernel)
    return total


def collision_bound(c: SampledCurve, i: int, j: int, kernel: Kernel) -> float:
    """Lower bound on length from the change of |x_i - x_j|.

    Each segment contributes |Delta r| / sqrt(2 gap(r_mid)), r_mid being the
    separation at the segment's midpoint configuration; this never exceeds
    the segment's midpoint-metric length (Cauchy-Schwarz with the covector
    d|x_i - x_j|, whose cometric norm is 2 gap). Segments whose midpoint is
    collided contribute nothing.
    """
    if i == j:
        raise ValueError("collision_bound needs two distinct landmarks")
    w = c.points[:, i, :] - c.points[:, j, :]
    r = np.linalg.norm(w, axis=1)
    r_mid = np.linalg.norm(0.5 * (w[:-1] + w[1:]), axis=1)
    g = np.asarray(kernel.gap(r_mid), dtype=float)
    dr = np.abs(np.diff(r))
    ok = g > 0
    return float(np.sum(dr[ok] / np.sqrt(2.0 * g[ok])))


def _radial_variation(a, b):
    # total variation of |x| along the straight segment from a to b
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    v = b - a
    vv = float(v @ v)
    if vv == 0.0:
        return 0.0
    s = -float(a @ v) / vv
    if 0.0 < s < 1.0:
        # the segment passes its closest point to the origin: split there
        dmin = float(np.linalg.norm(a + s * v))
        return (na - dmin) + (nb - dmin)
    return abs(nb - na)


def escape_bound(c: SampledCurve, i: int, kernel: Kernel) -> float:
    """Lower bound on length from the variation of |x_i|, divided by sqrt(K(0)).

    A segment is split at its point closest to the origin, so a landmark that
    passes through 0 is charged |a| + |b| rather than ||b| - |a||.
    """
    pts = c.points[:, i, :]
    var = sum(_radial_variation(a, b) for a, b in zip(pts[:-1], pts[1:]))
    return var / math.sqrt(kernel.k0)


def cometric_form(x, kernel: Kernel, alpha) -> float:
    """g^{-1}(alpha, alpha) = sum_ij K_ij <alpha_i, alpha_j>."""
    alpha = np.asarray(alpha, dtype=float)
    return float(np.sum(gram(x, kernel) * (alpha @ alpha.T)))


def separation_covector(x, i: int, j: int) -> np.ndarray:
    """The differential of f_ij = |x_i - x_j| at x, as an n x d array."""
    x = np.asarray(x, dtype=float)
    w = x[i] - x[j]
    r = float(np.linalg.norm(w))
    if r == 0.0:
        raise GeometryError("separation covector undefined at a collision")
    out = np.zeros_like(x)
    out[i] = w / r
    out[j] = -w / r
    return out


def radius_covector(x, i: int) -> np.ndarray:
    """The differential of f_i = |x_i| at x."""
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x[i]))
    if nrm == 0.0:
        raise GeometryError("radius covector undefined at the origin")
    out = np.zeros_like(x)
    out[i] = x[i] / nrm
    return out
