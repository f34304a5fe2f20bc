"""Element-local assembly of the ultraweak plate bending system.

Fields are per-triangle constants: the deflection u and the symmetric moment
tensor M = (M11, M12, M22).  Skeleton unknowns carry the continuity of an
H^2-conforming deflection and an H(div div)-conforming moment:

* per vertex a triple (w, w_x, w_y); on each edge the deflection trace is the
  Hermite cubic through the endpoint values and tangential derivatives, and
  the normal-derivative trace is the linear interpolant of the endpoint
  normal derivatives;
* per edge a triple (m_nn, q_eff, m_tn): the constant normal-normal moment
  (even in the edge normal), the constant effective transverse shear
  n . div M + d/dt (t . M n) (odd in the normal, so element contributions
  carry the edge orientation sign), and the constant twisting moment
  t . M n (even).  The twisting unknown acts through the endpoint
  differences of the test function along each traversed edge; those
  differences are exactly the corner terms produced when the tangential part
  of the gradient pairing is integrated by parts along an element boundary,
  and without them the moment trace of a smooth solution cannot be
  approximated (corner forces are an O(1) part of the duality).

Test functions are broken: v in P3 and a symmetric tensor Q with P4
components, measured in the scaled norm

    d^-4 (v, v)_T + (hess v, hess v)_T + (Q, Q)_T + d^4 (div div Q, div div Q)_T,

where tensor products count the off-diagonal twice, Q : P = Q11 P11
+ 2 Q12 P12 + Q22 P22, and div div Q = Q11_xx + 2 Q12_xy + Q22_yy.

The deflection pairing on an element boundary is

    <w, Q> = int_dT [ w (n . div Q) - (n.Qn) dw/dn - (t.Qn) dw/dt ] ds,

obtained by integrating (w, div div Q)_T - (hess w, Q)_T by parts twice and
splitting the boundary gradient of w into normal and tangential parts.  The
moment pairing is

    <m, v> = sum_e { int_e [ s_e q_eff v - m_nn dv/dn ] ds
                     - m_tn [ v(end) - v(start) ] },

the edge-wise tangential integration by parts of int_dT [ v (n . div M)
- (grad v) . (M n) ] ds with edge-wise constant data: the interior part of
d/dt (t.Mn) joins n . div M in the effective shear and the endpoint
evaluations remain as the m_tn terms.

Local trial column order: [u, M11, M12, M22, (w, w_x, w_y) x vertices 0..2,
(m_nn, q_eff, m_tn) x edges 0..2]; test row order:
[v (10), Q11 (15), Q12 (15), Q22 (15)].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import fem_core as fc
from . import mesh as msh

TEST_V = 10
N_TEST = 55
N_TRIAL = 22

VOLUME_DEGREE = 8   # products of two P4 quantities
EDGE_DEGREE = 9
# the bilaplacian loads oscillate and the orthonormal cubic test basis has
# large coefficients; degree 10 leaves O(1e-2) errors on coarse elements
LOAD_DEGREE = 16

COMPONENT_WEIGHT = (1.0, 2.0, 1.0)  # multiplicity of (11, 12, 22) in tensor products

CLAMPED = "clamped"
SIMPLY_SUPPORTED = "simply_supported"
MIXED_FREE = "mixed_free"


def _hermite(s):
    """Cubic Hermite shape functions and derivatives on [0, 1]."""
    h = np.stack([2 * s ** 3 - 3 * s ** 2 + 1,
                  s ** 3 - 2 * s ** 2 + s,
                  -2 * s ** 3 + 3 * s ** 2,
                  s ** 3 - s ** 2], axis=1)
    dh = np.stack([6 * s ** 2 - 6 * s,
                   3 * s ** 2 - 4 * s + 1,
                   -6 * s ** 2 + 6 * s,
                   3 * s ** 2 - 2 * s], axis=1)
    return h, dh


@lru_cache(maxsize=None)
def _kernels():
    vol = fc.quad_triangle(VOLUME_DEGREE)
    v3 = fc.basis_p(3, vol.points)
    q4 = fc.basis_p(4, vol.points)
    load_rule = fc.quad_triangle(LOAD_DEGREE)
    v3_load = v3.tabulate(load_rule.points)
    edge = fc.quad_edge(EDGE_DEGREE)
    edge_v3 = [v3.tabulate(fc.edge_ref_points(k, edge.points)) for k in range(3)]
    edge_q4 = [q4.tabulate(fc.edge_ref_points(k, edge.points)) for k in range(3)]
    v3_at_vertices = v3.tabulate(fc.REF_VERTICES).values
    hermite = _hermite(edge.points)
    return vol, v3, q4, load_rule, v3_load, edge, edge_v3, edge_q4, v3_at_vertices, hermite


def _hess_components(amap, hessians):
    """Physical (xx, xy, yy) second derivatives, shape (nq, n, 3)."""
    h = amap.push_hessians(hessians)
    return np.stack([h[..., 0, 0], h[..., 0, 1], h[..., 1, 1]], axis=-1)


def local_gram_plate(amap: fc.AffineMap, d: float) -> np.ndarray:
    """Scaled test inner product on the 55 broken test functions of one element."""
    if d <= 0:
        raise ValueError(f"scaling length must be positive, got {d}")
    vol, v3, q4, *_ = _kernels()
    wdet = vol.weights * amap.det

    h3 = _hess_components(amap, v3.hessians)
    mass3 = np.einsum("q,qi,qj->ij", wdet, v3.values, v3.values)
    khess = np.einsum("q,qic,qjc,c->ij", wdet, h3, h3, np.array(COMPONENT_WEIGHT))

    h4 = _hess_components(amap, q4.hessians)
    mass4 = np.einsum("q,qi,qj->ij", wdet, q4.values, q4.values)
    ddiv = np.concatenate([h4[:, :, 0], 2.0 * h4[:, :, 1], h4[:, :, 2]], axis=1)
    kdd = np.einsum("q,qi,qj->ij", wdet, ddiv, ddiv)

    g = np.zeros((N_TEST, N_TEST))
    g[:TEST_V, :TEST_V] = mass3 / d ** 4 + khess
    g[TEST_V:, TEST_V:] = np.kron(np.diag(COMPONENT_WEIGHT), mass4) + d ** 4 * kdd
    return 0.5 * (g + g.T)


def local_b_plate(amap: fc.AffineMap) -> np.ndarray:
    """Trial-to-test matrix of the ultraweak plate form on one element.

    Volume part: (M, hess v + Q)_T + (u, div div Q)_T with the identity
    compliance tensor.  Skeleton part: -<w-trace, Q> and +<m-trace, v> as
    described in the module docstring.
    """
    vol, v3, q4, _, _, edge, edge_v3, edge_q4, v3_verts, (herm, dherm) = _kernels()
    wdet = vol.weights * amap.det
    h3 = _hess_components(amap, v3.hessians)
    h4 = _hess_components(amap, q4.hessians)
    ddiv = np.concatenate([h4[:, :, 0], 2.0 * h4[:, :, 1], h4[:, :, 2]], axis=1)
    int_q4 = wdet @ q4.values

    b = np.zeros((N_TEST, N_TRIAL))
    b[TEST_V:, 0] = wdet @ ddiv
    for c in range(3):
        b[:TEST_V, 1 + c] = COMPONENT_WEIGHT[c] * np.einsum("q,qi->i", wdet, h3[:, :, c])
        rows = slice(TEST_V + 15 * c, TEST_V + 15 * (c + 1))
        b[rows, 1 + c] = COMPONENT_WEIGHT[c] * int_q4

    for k in range(3):
        length = amap.edge_lengths[k]
        w = edge.weights * length
        n = amap.edge_normals[k]
        tg = amap.edge_tangents[k]
        sign = amap.edge_signs[k]
        vv = edge_v3[k].values
        vg = amap.push_gradients(edge_v3[k].gradients)
        qv = edge_q4[k].values
        qg = amap.push_gradients(edge_q4[k].gradients)

        # n . div Q, n.Qn, t.Qn stacked over the 45 tensor test functions
        ndivq = np.concatenate([n[0] * qg[:, :, 0],
                                n[0] * qg[:, :, 1] + n[1] * qg[:, :, 0],
                                n[1] * qg[:, :, 1]], axis=1)
        nqn_c = np.array([n[0] * n[0], 2 * n[0] * n[1], n[1] * n[1]])
        tqn_c = np.array([tg[0] * n[0], tg[0] * n[1] + tg[1] * n[0], tg[1] * n[1]])
        nqn = np.concatenate([nqn_c[c] * qv for c in range(3)], axis=1)
        tqn = np.concatenate([tqn_c[c] * qv for c in range(3)], axis=1)

        # deflection trace columns: endpoint roles (start, end) = vertices k, k+1
        for role, vloc in ((0, k), (1, (k + 1) % 3)):
            hval = herm[:, 2 * role]       # value shape function
            hslope = herm[:, 2 * role + 1]  # tangential-slope shape function
            dval = dherm[:, 2 * role]
            dslope = dherm[:, 2 * role + 1]
            lin = edge.points if role else 1.0 - edge.points
            # (trace, d/dt trace, d/dn trace) for unit data (w, g) at this endpoint
            profiles = (
                (hval, dval / length, np.zeros_like(lin)),
                (length * tg[0] * hslope, tg[0] * dslope, lin * n[0]),
                (length * tg[1] * hslope, tg[1] * dslope, lin * n[1]),
            )
            for comp, (tr, dt_tr, dn_tr) in enumerate(profiles):
                col = 4 + 3 * vloc + comp
                b[TEST_V:, col] -= np.einsum("q,qi->i", w * tr, ndivq)
                b[TEST_V:, col] += np.einsum("q,qi->i", w * dn_tr, nqn)
                b[TEST_V:, col] += np.einsum("q,qi->i", w * dt_tr, tqn)

        b[:TEST_V, 13 + 3 * k] -= np.einsum("q,qi->i", w, vg @ n)
        b[:TEST_V, 14 + 3 * k] += sign * (w @ vv)
        b[:TEST_V, 15 + 3 * k] = v3_verts[k] - v3_verts[(k + 1) % 3]
    return b


def local_load_plate(amap: fc.AffineMap, f) -> np.ndarray:
    """Load vector l[v] = -(f, v)_T; the tensor block is zero."""
    _, _, _, load_rule, v3_load, *_ = _kernels()
    pts = amap.to_physical(load_rule.points)
    fv = np.asarray(f(pts[:, 0], pts[:, 1]), float)
    load = np.zeros(N_TEST)
    load[:TEST_V] = -np.einsum("q,q,qi->i", load_rule.weights * amap.det,
                               fv, v3_load.values)
    return load


@dataclass(frozen=True)
class PlateDofMap:
    """Global numbering: u by triangle, then M, then the free deflection-trace
    components in vertex order (w, w_x, w_y), then the free moment-trace
    components in edge order (m_nn, q_eff, m_tn).  Constrained slots hold -1."""

    n_free: int
    u: np.ndarray
    m: np.ndarray
    uhat: np.ndarray   # (nv, 3)
    mhat: np.ndarray   # (ne, 3)

    def element_dofs(self, mesh: msh.Mesh, t: int) -> np.ndarray:
        return np.concatenate([
            [self.u[t]], self.m[t],
            self.uhat[mesh.triangles[t]].ravel(),
            self.mhat[mesh.tri_edges[t]].ravel(),
        ])

    def all_element_dofs(self, mesh: msh.Mesh) -> np.ndarray:
        nt = mesh.n_triangles
        return np.column_stack([
            self.u, self.m,
            self.uhat[mesh.triangles].reshape(nt, 9),
            self.mhat[mesh.tri_edges].reshape(nt, 9),
        ])


def _tangential_component(tangent):
    """Which gradient component the edge tangent constrains (axis-aligned only)."""
    if abs(tangent[0]) > 1.0 - 1e-9:
        return 1
    if abs(tangent[1]) > 1.0 - 1e-9:
        return 2
    raise NotImplementedError(
        "simply supported constraints require axis-aligned boundary edges")


def dof_map_plate(mesh: msh.Mesh, bc: str) -> PlateDofMap:
    """Degree-of-freedom layout under clamped, simply supported, or mixed
    (clamped on the Dirichlet part, free on the Neumann part) conditions.

    Clamped fixes the whole deflection triple at boundary vertices.  Simply
    supported fixes the value and the tangential derivative along each
    boundary edge (the full gradient at corners) plus m_nn on boundary edges.
    The mixed layout clamps Dirichlet-tagged vertices and fixes all three
    moment-trace components on Neumann edges; zeroing m_tn there is a
    subspace of the jump-free twisting moments the free boundary requires.
    """
    if bc not in (CLAMPED, SIMPLY_SUPPORTED, MIXED_FREE):
        raise ValueError(f"unknown plate boundary condition {bc!r}")
    nt = mesh.n_triangles
    boundary = mesh.boundary_edge_mask()
    uhat_fixed = np.zeros((mesh.n_vertices, 3), dtype=bool)
    mhat_fixed = np.zeros((mesh.n_edges, 3), dtype=bool)

    if bc == CLAMPED:
        uhat_fixed[mesh.edges[boundary].ravel(), :] = True
    elif bc == SIMPLY_SUPPORTED:
        for e in np.nonzero(boundary)[0]:
            v0, v1 = mesh.edges[e]
            d = mesh.vertices[v1] - mesh.vertices[v0]
            comp = _tangential_component(d / np.hypot(*d))
            uhat_fixed[[v0, v1], 0] = True
            uhat_fixed[[v0, v1], comp] = True
            mhat_fixed[e, 0] = True
    else:
        uhat_fixed[mesh.vertex_tags == msh.DIRICHLET, :] = True
        mhat_fixed[mesh.edge_tags == msh.NEUMANN, :] = True

    u = np.arange(nt, dtype=np.int64)
    m = nt + np.arange(3 * nt, dtype=np.int64).reshape(nt, 3)
    offset = 4 * nt
    uhat = np.full((mesh.n_vertices, 3), -1, dtype=np.int64)
    free = ~uhat_fixed.ravel()
    uhat.ravel()[free] = offset + np.arange(free.sum())
    offset += free.sum()
    mhat = np.full((mesh.n_edges, 3), -1, dtype=np.int64)
    free = ~mhat_fixed.ravel()
    mhat.ravel()[free] = offset + np.arange(free.sum())
    offset += free.sum()
    return PlateDofMap(int(offset), u, m, uhat, mhat)
