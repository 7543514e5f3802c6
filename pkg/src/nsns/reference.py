"""Reference-element machinery: quadrature, Lagrange bases, affine maps.

The reference triangle has vertices (0, 0), (1, 0), (0, 1).  Quadratic
nodes are ordered vertices first, then the midpoints of the local edges
01, 12 and 20.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.weights)


# Symmetric rules in barycentric orbits: (weight, orbit, parameters).
# Weights are normalized to sum to one.
_SYMMETRIC_RULES = {
    1: [(1.0, "s3")],
    2: [(1.0 / 3.0, "s21", 2.0 / 3.0)],
    4: [(0.223381589678011, "s21", 0.108103018168070),
        (0.109951743655322, "s21", 0.816847572980459)],
    5: [(0.225, "s3"),
        (0.132394152788506, "s21", 0.059715871789770),
        (0.125939180544827, "s21", 0.797426985353087)],
    6: [(0.116786275726379, "s21", 0.501426509658179),
        (0.050844906370207, "s21", 0.873821971016996),
        (0.082851075618374, "s111", 0.053145049844817, 0.310352451033784)],
    8: [(0.144315607677787, "s3"),
        (0.095091634267285, "s21", 0.081414823414554),
        (0.103217370534718, "s21", 0.658861384496480),
        (0.032458497623198, "s21", 0.898905543365938),
        (0.027230314174435, "s111", 0.008394777409958, 0.263112829634638)],
}


def _orbit(kind, *p):
    if kind == "s3":
        return [(1 / 3, 1 / 3, 1 / 3)]
    if kind == "s21":
        a = p[0]
        b = (1 - a) / 2
        return [(a, b, b), (b, a, b), (b, b, a)]
    a, b = p
    c = 1 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _conical_product(degree):
    # collapsed Gauss-Jacobi rule, exact to `degree` but not symmetric
    m = degree // 2 + 1
    x, wx = roots_jacobi(m, 1.0, 0.0)
    y, wy = np.polynomial.legendre.leggauss(m)
    s = (x + 1) / 2            # collapsed coordinate with weight (1 - s)
    t = (y + 1) / 2
    S, Tt = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wx / 4, wy / 2)
    xi = (1 - S) * Tt
    eta = S
    return np.stack([xi.ravel(), eta.ravel()], axis=1), W.ravel()


@lru_cache(maxsize=None)
def triangle_quadrature(min_degree: int = 6) -> QuadratureRule:
    """Quadrature on the reference triangle exact to at least ``min_degree``.

    Degrees 1-8 use symmetric Gauss rules; 9 and 10 fall back to a
    collapsed Gauss-Jacobi product rule.
    """
    if not 1 <= min_degree <= 10:
        raise ValueError(f"unsupported triangle quadrature degree {min_degree}")
    for deg in sorted(_SYMMETRIC_RULES):
        if deg >= min_degree:
            pts, wts = [], []
            for w, kind, *p in _SYMMETRIC_RULES[deg]:
                o = _orbit(kind, *p)
                pts += o
                wts += [w] * len(o)
            bary = np.array(pts)
            points = bary[:, 1:].copy()
            weights = np.array(wts) / 2.0
            break
    else:
        deg = 10
        points, weights = _conical_product(deg)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, deg)


@lru_cache(maxsize=None)
def edge_quadrature(min_degree: int = 5) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact to at least ``min_degree``."""
    if not 1 <= min_degree <= 10:
        raise ValueError(f"unsupported edge quadrature degree {min_degree}")
    m = min_degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(m)
    points = (x + 1) / 2
    weights = w / 2
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, 2 * m - 1)


# Lagrange bases ------------------------------------------------------------

P2_NODES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                     [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
P1_NODES = P2_NODES[:3]

# d(lambda_i)/d(xi, eta) for lambda = (1 - xi - eta, xi, eta)
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def _barycentric(points):
    points = np.asarray(points, dtype=float)
    xi, eta = points[..., 0], points[..., 1]
    return np.stack([1 - xi - eta, xi, eta], axis=-1)


def p1_values(points):
    return _barycentric(points)


def p1_gradients(points=None):
    """Constant reference gradients of the three linear basis functions."""
    g = _DLAMBDA.copy()
    if points is None:
        return g
    shape = np.shape(points)[:-1]
    return np.broadcast_to(g, shape + (3, 2)).copy()


def p2_values(points):
    lam = _barycentric(points)
    out = [lam[..., i] * (2 * lam[..., i] - 1) for i in range(3)]
    out += [4 * lam[..., i] * lam[..., j] for i, j in _P2_EDGES]
    return np.stack(out, axis=-1)


def p2_gradients(points):
    lam = _barycentric(points)
    D = _DLAMBDA
    out = [(4 * lam[..., i] - 1)[..., None] * D[i] for i in range(3)]
    out += [4 * (lam[..., j][..., None] * D[i] + lam[..., i][..., None] * D[j])
            for i, j in _P2_EDGES]
    return np.stack(out, axis=-2)


def p2_hessians():
    """Constant reference Hessians, shape (6, 2, 2)."""
    D = _DLAMBDA
    out = [4 * np.outer(D[i], D[i]) for i in range(3)]
    out += [4 * (np.outer(D[i], D[j]) + np.outer(D[j], D[i])) for i, j in _P2_EDGES]
    return np.array(out)


@dataclass(frozen=True)
class BasisTable:
    family: str
    values: np.ndarray        # (Q, n)
    gradients: np.ndarray     # (Q, n, 2) reference gradients
    hessians: np.ndarray      # (Q, n, 2, 2) reference second derivatives


def tabulate_basis(family: str, rule) -> BasisTable:
    """Tabulate the P1 or P2 basis at the points of ``rule``.

    ``rule`` is a :class:`QuadratureRule` or an array of reference points.
    """
    points = rule.points if isinstance(rule, QuadratureRule) else np.asarray(rule, float)
    nq = len(points)
    if family == "P1":
        vals = p1_values(points)
        grads = p1_gradients(points)
        hess = np.zeros((nq, 3, 2, 2))
    elif family == "P2":
        vals = p2_values(points)
        grads = p2_gradients(points)
        hess = np.broadcast_to(p2_hessians(), (nq, 6, 2, 2)).copy()
    else:
        raise ValueError(f"unknown family {family!r}")
    return BasisTable(family, vals, grads, hess)


# affine maps --------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    origin: np.ndarray
    jacobian: np.ndarray
    inverse_jacobian: np.ndarray
    determinant: float

    def __call__(self, ref_points):
        return self.origin + np.asarray(ref_points) @ self.jacobian.T


def affine_maps(coords):
    """Vectorized reference-to-physical maps for triangles ``coords`` (T, 3, 2).

    Returns ``(J, Jinv, detJ)`` with ``x = x0 + J @ xi``.
    """
    coords = np.asarray(coords, dtype=float)
    J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det == 0.0):
        raise ValueError("degenerate triangle (zero Jacobian determinant)")
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / det
    Jinv[:, 1, 1] = J[:, 0, 0] / det
    Jinv[:, 0, 1] = -J[:, 0, 1] / det
    Jinv[:, 1, 0] = -J[:, 1, 0] / det
    return J, Jinv, det


def affine_map(mesh, triangle_index: int) -> AffineMap:
    if not 0 <= triangle_index < mesh.n_triangles:
        raise IndexError(f"triangle index {triangle_index} out of range")
    coords = mesh.nodes[mesh.triangles[triangle_index]][None]
    J, Jinv, det = affine_maps(coords)
    return AffineMap(coords[0, 0].copy(), J[0], Jinv[0], float(det[0]))
