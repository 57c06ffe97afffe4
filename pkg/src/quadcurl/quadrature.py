"""Gauss-type quadrature on the reference tetrahedron and triangle.

Rules are collapsed-coordinate (conical) products of Gauss-Jacobi and
Gauss-Legendre rules. All weights are positive and all points interior.

Reference tetrahedron: {x, y, z >= 0, x + y + z <= 1}, volume 1/6.
Reference triangle: {x, y >= 0, x + y <= 1}, area 1/2.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 14


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self):
        return len(self.weights)


def _jacobi01(npts, alpha):
    """Gauss-Jacobi on [0, 1] for the weight (1 - t)**alpha."""
    x, w = roots_jacobi(npts, alpha, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)


def _check_degree(degree):
    if not isinstance(degree, (int, np.integer)) or not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"quadrature degree must be in [0, {MAX_DEGREE}], got {degree!r}")


@lru_cache(maxsize=None)
def tet_rule(degree):
    """Rule on the reference tetrahedron exact for total degree ``degree``."""
    _check_degree(degree)
    npts = max(1, (degree + 2) // 2)
    a, wa = _jacobi01(npts, 2.0)
    b, wb = _jacobi01(npts, 1.0)
    c, wc = _jacobi01(npts, 0.0)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    W = wa[:, None, None] * wb[None, :, None] * wc[None, None, :]
    x = A
    y = B * (1.0 - A)
    z = C * (1.0 - A) * (1.0 - B)
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    pts.setflags(write=False)
    w = W.ravel()
    w.setflags(write=False)
    return QuadRule(pts, w, 2 * npts - 1)


# red refinement: four corner children and the octahedron cut along m02-m13
_RED = ((0, 4, 5, 6), (4, 1, 7, 8), (5, 7, 2, 9), (6, 8, 9, 3),
        (4, 5, 6, 8), (4, 5, 7, 8), (5, 6, 8, 9), (5, 7, 8, 9))
_MID = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def _red_children(verts):
    pts = np.concatenate([verts, [(verts[i] + verts[j]) / 2.0 for i, j in _MID]])
    return [pts[list(c)] for c in _RED]


@lru_cache(maxsize=None)
def composite_tet_rule(degree, levels):
    """``tet_rule(degree)`` repeated on the 8**levels children of red refinement.

    Same polynomial exactness; the error for smooth non-polynomial integrands
    drops by about 2**-(degree + 1) per level.
    """
    if not isinstance(levels, (int, np.integer)) or levels < 0:
        raise ValueError(f"refinement levels must be a non-negative integer, got {levels!r}")
    base = tet_rule(degree)
    if levels == 0:
        return base
    tets = [np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])]
    for _ in range(levels):
        tets = [c for t in tets for c in _red_children(t)]
    pts, wts = [], []
    for t in tets:
        J = (t[1:] - t[0]).T
        pts.append(t[0] + base.points @ J.T)
        wts.append(base.weights * abs(np.linalg.det(J)))
    pts = np.concatenate(pts)
    pts.setflags(write=False)
    w = np.concatenate(wts)
    w.setflags(write=False)
    return QuadRule(pts, w, base.exactness_degree)


@lru_cache(maxsize=None)
def tri_rule(degree):
    """Rule on the reference triangle exact for total degree ``degree``."""
    _check_degree(degree)
    npts = max(1, (degree + 2) // 2)
    a, wa = _jacobi01(npts, 1.0)
    b, wb = _jacobi01(npts, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = wa[:, None] * wb[None, :]
    pts = np.stack([A.ravel(), (B * (1.0 - A)).ravel()], axis=1)
    pts.setflags(write=False)
    w = W.ravel()
    w.setflags(write=False)
    return QuadRule(pts, w, 2 * npts - 1)


@lru_cache(maxsize=None)
def line_rule(degree):
    """Gauss-Legendre on [0, 1]."""
    _check_degree(degree)
    npts = max(1, (degree + 2) // 2)
    t, w = _jacobi01(npts, 0.0)
    return QuadRule(t[:, None], w, 2 * npts - 1)


def assembly_degrees(k):
    """Default (volume, face) exactness for assembling with polynomial index k."""
    return 2 * k + 4, 2 * k + 2


def nonpolynomial_degree(k):
    # Used for L^p norms, error norms and manufactured loads; not certified exact.
    return min(3 * (k + 1) + 3, MAX_DEGREE)
