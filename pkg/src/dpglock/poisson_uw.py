"""Element-local assembly of the ultraweak Poisson system.

Field unknowns live in L2 (per-triangle constants for the deflection u and the
flux sigma = grad u), continuity is carried by skeleton unknowns: one vertex
value per continuous piecewise-linear trace function uhat, and one constant
normal flux sighat per edge, signed by the global edge normal.  Test functions
are broken: v in P2 and tau in (P2)^2 per element, measured in the scaled norm

    d^-2 (v, v)_T + (grad v, grad v)_T + (tau, tau)_T + d^2 (div tau, div tau)_T.

Local trial column order: [u, sigma_x, sigma_y, uhat_v0..v2, sighat_e0..e2];
test row order: [v (6), tau_x (6), tau_y (6)].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import fem_core as fc
from . import mesh as msh

TEST_V = 6
N_TEST = 18
N_TRIAL = 9

VOLUME_DEGREE = 4   # products of two P2 quantities
EDGE_DEGREE = 9
LOAD_DEGREE = 10


@lru_cache(maxsize=None)
def _kernels():
    vol = fc.quad_triangle(VOLUME_DEGREE)
    test = fc.basis_p(2, vol.points)
    load_rule = fc.quad_triangle(LOAD_DEGREE)
    test_load = test.tabulate(load_rule.points)
    edge = fc.quad_edge(EDGE_DEGREE)
    edge_vals = [test.tabulate(fc.edge_ref_points(k, edge.points)).values
                 for k in range(3)]
    return vol, test, load_rule, test_load, edge, edge_vals


def local_gram_poisson(amap: fc.AffineMap, d: float) -> np.ndarray:
    """Scaled test inner product on the 18 broken test functions of one element."""
    if d <= 0:
        raise ValueError(f"scaling length must be positive, got {d}")
    vol, test, *_ = _kernels()
    wdet = vol.weights * amap.det
    gphys = amap.push_gradients(test.gradients)
    mass = np.einsum("q,qi,qj->ij", wdet, test.values, test.values)
    stiff = np.einsum("q,qid,qjd->ij", wdet, gphys, gphys)
    div = np.concatenate([gphys[:, :, 0], gphys[:, :, 1]], axis=1)
    kdiv = np.einsum("q,qi,qj->ij", wdet, div, div)

    g = np.zeros((N_TEST, N_TEST))
    g[:TEST_V, :TEST_V] = mass / d ** 2 + stiff
    g[TEST_V:, TEST_V:] = np.kron(np.eye(2), mass) + d ** 2 * kdiv
    return 0.5 * (g + g.T)


def local_b_poisson(amap: fc.AffineMap, gamma: float) -> np.ndarray:
    """Trial-to-test matrix of the ultraweak bilinear form on one element.

    Volume part: (u, div tau + gamma v)_T + (sigma, tau + grad v)_T.
    Skeleton part: -int_dT uhat (tau . n) for the piecewise-linear hat traces,
    and -s_e sighat int_e v per edge, with s_e the orientation sign relating
    the element's outward normal to the global edge normal.
    """
    if gamma < 0:
        raise ValueError(f"reaction coefficient must be nonnegative, got {gamma}")
    vol, test, _, _, edge, edge_vals = _kernels()
    wdet = vol.weights * amap.det
    gphys = amap.push_gradients(test.gradients)
    int_v = wdet @ test.values
    int_grad = np.einsum("q,qid->id", wdet, gphys)

    b = np.zeros((N_TEST, N_TRIAL))
    b[:6, 0] = gamma * int_v
    b[6:12, 0] = int_grad[:, 0]
    b[12:18, 0] = int_grad[:, 1]
    b[:6, 1] = int_grad[:, 0]
    b[6:12, 1] = int_v
    b[:6, 2] = int_grad[:, 1]
    b[12:18, 2] = int_v

    hats = np.stack([1.0 - edge.points, edge.points], axis=1)  # start/end vertex
    for k in range(3):
        w = edge.weights * amap.edge_lengths[k]
        nx, ny = amap.edge_normals[k]
        vals = edge_vals[k]
        for hat, vloc in zip(hats.T, (k, (k + 1) % 3)):
            flux = np.einsum("q,q,qi->i", w, hat, vals)
            b[6:12, 3 + vloc] -= nx * flux
            b[12:18, 3 + vloc] -= ny * flux
        b[:6, 6 + k] = -amap.edge_signs[k] * (w @ vals)
    return b


def local_load_poisson(amap: fc.AffineMap, f, scale: float = 1.0) -> np.ndarray:
    """Load vector l[v] = scale * (f, v)_T; the tau block is zero."""
    _, _, load_rule, test_load, *_ = _kernels()
    pts = amap.to_physical(load_rule.points)
    fv = np.asarray(f(pts[:, 0], pts[:, 1]), float)
    load = np.zeros(N_TEST)
    load[:TEST_V] = scale * np.einsum("q,q,qi->i", load_rule.weights * amap.det,
                                      fv, test_load.values)
    return load


@dataclass(frozen=True)
class PoissonDofMap:
    """Global numbering of the free unknowns: u by triangle, then sigma, then
    free uhat in vertex order, then free sighat in edge order.  Constrained
    slots (uhat on Dirichlet vertices, sighat on Neumann edges) hold -1."""

    n_free: int
    u: np.ndarray
    sigma: np.ndarray
    uhat: np.ndarray
    sighat: np.ndarray

    def element_dofs(self, mesh: msh.Mesh, t: int) -> np.ndarray:
        return np.concatenate([
            [self.u[t]], self.sigma[t],
            self.uhat[mesh.triangles[t]], self.sighat[mesh.tri_edges[t]],
        ])

    def all_element_dofs(self, mesh: msh.Mesh) -> np.ndarray:
        return np.column_stack([
            self.u, self.sigma,
            self.uhat[mesh.triangles], self.sighat[mesh.tri_edges],
        ])


def dof_map_poisson(mesh: msh.Mesh) -> PoissonDofMap:
    nt = mesh.n_triangles
    u = np.arange(nt, dtype=np.int64)
    sigma = nt + np.arange(2 * nt, dtype=np.int64).reshape(nt, 2)
    offset = 3 * nt

    uhat = np.full(mesh.n_vertices, -1, dtype=np.int64)
    free_v = mesh.vertex_tags != msh.DIRICHLET
    uhat[free_v] = offset + np.arange(free_v.sum())
    offset += free_v.sum()

    sighat = np.full(mesh.n_edges, -1, dtype=np.int64)
    free_e = mesh.edge_tags != msh.NEUMANN
    sighat[free_e] = offset + np.arange(free_e.sum())
    offset += free_e.sum()
    return PoissonDofMap(int(offset), u, sigma, uhat, sighat)
