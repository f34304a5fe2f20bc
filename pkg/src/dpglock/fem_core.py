"""Reference-triangle polynomial bases, quadrature rules, and affine element maps.

The reference triangle has vertices (0,0), (1,0), (0,1); local edge k runs
from vertex k to vertex k+1 (mod 3), traversed counterclockwise.  Scalar bases
are monomials orthonormalized against the reference L2 inner product, which
keeps local Gram matrices well conditioned under strongly scaled test norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .mesh import Mesh

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

_MAX_QUAD_DEGREE = 50


@dataclass(frozen=True)
class QuadRule:
    """Positive-weight quadrature; points are (nq, 2) on the reference triangle
    or (nq,) in [0, 1] for edges."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int


def _gauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def quad_edge(degree: int) -> QuadRule:
    """Gauss rule on [0, 1] exact for polynomials up to `degree`."""
    if not 0 <= degree <= _MAX_QUAD_DEGREE:
        raise ValueError(f"unsupported edge quadrature degree {degree}")
    n = degree // 2 + 1
    x, w = _gauss01(n)
    return QuadRule(x, w, 2 * n - 1)


def quad_triangle(degree: int) -> QuadRule:
    """Product-Gauss rule on the reference triangle exact up to `degree`.

    Built by collapsing the unit square onto the triangle via
    (u, v) -> (u, v(1-u)) with Jacobian (1-u); the extra factor raises the
    u-degree by one, hence the rule size.
    """
    if not 0 <= degree <= _MAX_QUAD_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    n = (degree + 3) // 2  # 2n-1 >= degree+1
    xu, wu = _gauss01(n)
    xv, wv = _gauss01(n)
    u, v = np.meshgrid(xu, xv)
    wu2, wv2 = np.meshgrid(wu, wv)
    pts = np.column_stack([u.ravel(), (v * (1.0 - u)).ravel()])
    w = (wu2 * wv2 * (1.0 - u)).ravel()
    return QuadRule(pts, w, degree)


def _monomial_powers(p: int) -> np.ndarray:
    return np.array([(a, b) for total in range(p + 1) for a in range(total, -1, -1)
                     for b in (total - a,)], dtype=np.int64)


def _monomial_gram(powers: np.ndarray) -> np.ndarray:
    """Exact reference-triangle Gram of monomials: int x^a y^b = a! b! / (a+b+2)!."""
    n = len(powers)
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            a, b = powers[i] + powers[j]
            g[i, j] = factorial(a) * factorial(b) / factorial(a + b + 2)
    return g


def _eval_monomials(powers: np.ndarray, pts: np.ndarray, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Values of d^dx_x d^dy_y (x^a y^b) at pts, shape (npts, nmono)."""
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    a = powers[:, 0][None, :].astype(float)
    b = powers[:, 1][None, :].astype(float)
    ca = np.ones_like(a)
    cb = np.ones_like(b)
    for _ in range(dx):
        ca, a = ca * a, np.maximum(a - 1, 0)
    for _ in range(dy):
        cb, b = cb * b, np.maximum(b - 1, 0)
    coef = ca * cb
    dead = (powers[:, 0][None, :] < dx) | (powers[:, 1][None, :] < dy)
    out = coef * x ** a * y ** b
    out[np.broadcast_to(dead, out.shape)] = 0.0
    return out


@dataclass(frozen=True)
class ReferenceBasis:
    """Orthonormal polynomial basis of P^degree on the reference triangle with
    value/gradient/Hessian tables at the points it was built for."""

    degree: int
    dim: int
    points: np.ndarray
    values: np.ndarray    # (npts, dim)
    gradients: np.ndarray  # (npts, dim, 2)
    hessians: np.ndarray   # (npts, dim, 2, 2)
    coeffs: np.ndarray     # (dim, dim) rows over monomials, for re-expansion
    powers: np.ndarray

    def tabulate(self, pts: np.ndarray) -> "ReferenceBasis":
        """Same basis, tables at different points."""
        return _tabulate(self.degree, self.coeffs, self.powers, np.asarray(pts, float))


@lru_cache(maxsize=None)
def _orthonormal_coeffs(p: int):
    powers = _monomial_powers(p)
    gram = _monomial_gram(powers)
    lower = cholesky(gram, lower=True)
    c = solve_triangular(lower, np.eye(len(powers)), lower=True)
    # one re-orthonormalization pass wipes out the monomial Gram's conditioning
    g2 = c @ gram @ c.T
    c = solve_triangular(cholesky(g2, lower=True), c, lower=True)
    return c, powers


def _tabulate(p: int, coeffs: np.ndarray, powers: np.ndarray, pts: np.ndarray) -> ReferenceBasis:
    values = _eval_monomials(powers, pts) @ coeffs.T
    grads = np.stack([_eval_monomials(powers, pts, 1, 0) @ coeffs.T,
                      _eval_monomials(powers, pts, 0, 1) @ coeffs.T], axis=2)
    hxx = _eval_monomials(powers, pts, 2, 0) @ coeffs.T
    hxy = _eval_monomials(powers, pts, 1, 1) @ coeffs.T
    hyy = _eval_monomials(powers, pts, 0, 2) @ coeffs.T
    hess = np.stack([np.stack([hxx, hxy], axis=2),
                     np.stack([hxy, hyy], axis=2)], axis=2)
    return ReferenceBasis(p, len(powers), pts, values, grads, hess, coeffs, powers)


def basis_p(p: int, points) -> ReferenceBasis:
    """Orthonormal basis of P^p tabulated at the given reference points."""
    if not 0 <= p <= 4:
        raise ValueError(f"unsupported basis degree {p}")
    coeffs, powers = _orthonormal_coeffs(p)
    return _tabulate(p, coeffs, powers, np.asarray(points, float))


@dataclass(frozen=True)
class AffineMap:
    """Affine map from the reference triangle onto a physical triangle.

    Physical gradients are jac_inv_t @ reference gradients, physical Hessians
    jac_inv_t @ H_ref @ jac_inv_t.T.  Edge data follow the local edge order
    k = (vertex k, vertex k+1): outward unit normal, counterclockwise unit
    tangent, length, and the mesh orientation sign of the underlying edge.
    """

    verts: np.ndarray
    jac: np.ndarray
    shift: np.ndarray
    det: float
    jac_inv_t: np.ndarray
    edge_normals: np.ndarray
    edge_tangents: np.ndarray
    edge_lengths: np.ndarray
    edge_signs: np.ndarray

    def to_physical(self, ref_pts: np.ndarray) -> np.ndarray:
        return ref_pts @ self.jac.T + self.shift

    def push_gradients(self, ref_grads: np.ndarray) -> np.ndarray:
        """(..., 2) reference gradients to physical ones."""
        return ref_grads @ self.jac_inv_t.T

    def push_hessians(self, ref_hess: np.ndarray) -> np.ndarray:
        """(..., 2, 2) reference Hessians to physical ones."""
        a = self.jac_inv_t
        return np.einsum("ab,...bc,dc->...ad", a, ref_hess, a)


def affine_map_from_vertices(verts: np.ndarray, edge_signs=(1, 1, 1)) -> AffineMap:
    verts = np.asarray(verts, float)
    jac = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    if det <= 0.0:
        raise ValueError(f"degenerate or inverted triangle, det = {det}")
    jac_inv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    tangents = np.empty((3, 2))
    normals = np.empty((3, 2))
    lengths = np.empty(3)
    for k in range(3):
        d = verts[(k + 1) % 3] - verts[k]
        lengths[k] = np.hypot(*d)
        t = d / lengths[k]
        tangents[k] = t
        normals[k] = (t[1], -t[0])  # outward for counterclockwise traversal
    return AffineMap(verts, jac, verts[0].copy(), det, jac_inv.T,
                     normals, tangents, lengths,
                     np.asarray(edge_signs, dtype=np.int8))


def map_affine(mesh: Mesh, t: int) -> AffineMap:
    """Affine map of triangle t, carrying the mesh's edge orientation signs."""
    return affine_map_from_vertices(mesh.vertices[mesh.triangles[t]],
                                    mesh.tri_edge_signs[t])


def edge_ref_points(k: int, s: np.ndarray) -> np.ndarray:
    """Reference coordinates of local edge k at parameters s in [0, 1]."""
    a = REF_VERTICES[k]
    b = REF_VERTICES[(k + 1) % 3]
    return a + np.outer(s, b - a)
