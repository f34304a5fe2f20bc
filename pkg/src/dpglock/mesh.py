"""Structured triangulations of rectangles with uniform refinement and boundary tags.

Meshes are immutable value objects: triangles are stored counterclockwise,
edges with the lower vertex index first, and every triangle records for each
of its edges whether its outward normal agrees with the global edge normal
(the normal obtained by rotating the lower-to-higher-index direction
clockwise by 90 degrees).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# boundary tags
INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

TAG_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}

ALL_DIRICHLET = "all_dirichlet"
LEFT_RIGHT_DIRICHLET = "left_right_dirichlet"


@dataclass(frozen=True)
class Mesh:
    """Triangulation of a simply connected polygon.

    vertices:       (nv, 2) coordinates
    triangles:      (nt, 3) vertex indices, counterclockwise
    edges:          (ne, 2) vertex indices, lower index first
    tri_edges:      (nt, 3) edge index of local edge k = (vertex k, vertex k+1)
    tri_edge_signs: (nt, 3) +1 if local traversal runs lower->higher index
    edge_tags:      (ne,) INTERIOR / DIRICHLET / NEUMANN
    vertex_tags:    (nv,) same encoding; DIRICHLET wins at corners
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    edge_tags: np.ndarray
    vertex_tags: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_edge_mask(self) -> np.ndarray:
        """Edges incident to exactly one triangle."""
        counts = np.bincount(self.tri_edges.ravel(), minlength=self.n_edges)
        return counts == 1


def _connect(triangles: np.ndarray):
    """Build the unique edge list plus per-triangle edge indices and signs."""
    a = triangles
    b = np.roll(triangles, -1, axis=1)
    pairs = np.stack([a, b], axis=2).reshape(-1, 2)  # local edge k = (v_k, v_{k+1})
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    keyed = np.stack([lo, hi], axis=1)
    edges, inverse = np.unique(keyed, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)
    signs = np.where(pairs[:, 0] < pairs[:, 1], 1, -1).reshape(-1, 3)
    return edges, tri_edges, signs.astype(np.int8)


def _vertex_tags_from_edges(n_vertices: int, edges: np.ndarray, edge_tags: np.ndarray) -> np.ndarray:
    """Vertex gets DIRICHLET if incident to a Dirichlet edge, else NEUMANN if on the boundary."""
    tags = np.full(n_vertices, INTERIOR, dtype=np.int8)
    for tag in (NEUMANN, DIRICHLET):  # DIRICHLET applied last so it wins
        sel = edges[edge_tags == tag]
        tags[sel.ravel()] = tag
    return tags


def make_rect_mesh(r1: float, r2: float, ny: int) -> Mesh:
    """Crisscross triangulation of (0, r1) x (0, r2) with ny cell rows.

    The number of columns is chosen as round(ny * r1 / r2) so cells stay close
    to unit aspect ratio on anisotropic rectangles.  Each cell is split along
    its lower-left to upper-right diagonal.  All boundary edges start out
    tagged Dirichlet; use classify_boundary for other layouts.
    """
    if not (r1 > 0 and r2 > 0):
        raise ValueError(f"rectangle sides must be positive, got {r1} x {r2}")
    if ny < 1:
        raise ValueError(f"ny must be >= 1, got {ny}")
    nx = max(1, int(np.floor(ny * r1 / r2 + 0.5)))

    xs = np.linspace(0.0, r1, nx + 1)
    ys = np.linspace(0.0, r2, ny + 1)
    xg, yg = np.meshgrid(xs, ys)  # row j = line y = ys[j]
    vertices = np.column_stack([xg.ravel(), yg.ravel()])

    def vid(i, j):
        return i + j * (nx + 1)

    tris = []
    for j in range(ny):
        for i in range(nx):
            ll, lr = vid(i, j), vid(i + 1, j)
            ul, ur = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))
    triangles = np.array(tris, dtype=np.int64)

    edges, tri_edges, signs = _connect(triangles)
    mesh = Mesh(vertices, triangles, edges, tri_edges, signs,
                np.zeros(len(edges), np.int8), np.zeros(len(vertices), np.int8))
    return classify_boundary(mesh, ALL_DIRICHLET)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children (red refinement).

    Midpoint vertices are appended after the parent vertices in edge order,
    children of boundary edges inherit the parent tag, and all edges created
    inside a parent triangle are interior.
    """
    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    t = mesh.triangles
    m = nv + mesh.tri_edges  # m[:, k] = midpoint of local edge k = (v_k, v_{k+1})
    children = np.concatenate([
        np.stack([t[:, 0], m[:, 0], m[:, 2]], axis=1),
        np.stack([m[:, 0], t[:, 1], m[:, 1]], axis=1),
        np.stack([m[:, 2], m[:, 1], t[:, 2]], axis=1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
    ])

    edges, tri_edges, signs = _connect(children)

    # sub-edge (parent endpoint, parent midpoint) inherits the parent tag
    tag_of = {}
    for e, tag in enumerate(mesh.edge_tags):
        if tag != INTERIOR:
            v0, v1 = mesh.edges[e]
            tag_of[(min(v0, nv + e), max(v0, nv + e))] = tag
            tag_of[(min(v1, nv + e), max(v1, nv + e))] = tag
    edge_tags = np.array(
        [tag_of.get((e0, e1), INTERIOR) for e0, e1 in edges], dtype=np.int8
    )
    vertex_tags = _vertex_tags_from_edges(len(vertices), edges, edge_tags)
    return Mesh(vertices, children, edges, tri_edges, signs, edge_tags, vertex_tags)


def classify_boundary(mesh: Mesh, layout: str) -> Mesh:
    """Return a copy of the mesh with boundary edges/vertices tagged for a BC layout.

    all_dirichlet tags the whole boundary Dirichlet; left_right_dirichlet tags
    only the edges on the lines x = xmin and x = xmax (the remaining boundary
    becomes Neumann).  Detection uses a relative tolerance of 1e-12 since
    vertices sit exactly on grid lines.
    """
    if layout not in (ALL_DIRICHLET, LEFT_RIGHT_DIRICHLET):
        raise ValueError(f"unknown boundary layout {layout!r}")
    on_boundary = mesh.boundary_edge_mask()
    if not on_boundary.any():
        raise ValueError("mesh has no boundary edges")

    edge_tags = np.full(mesh.n_edges, INTERIOR, dtype=np.int8)
    if layout == ALL_DIRICHLET:
        edge_tags[on_boundary] = DIRICHLET
    else:
        x = mesh.vertices[:, 0]
        lo, hi = x.min(), x.max()
        width = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
        tol = 1e-12 * min(width)
        on_dirichlet = np.zeros(mesh.n_edges, dtype=bool)
        for line in (lo, hi):  # both endpoints on the same vertical line
            on_line = np.abs(x - line) <= tol
            on_dirichlet |= on_line[mesh.edges[:, 0]] & on_line[mesh.edges[:, 1]]
        edge_tags[on_boundary & on_dirichlet] = DIRICHLET
        edge_tags[on_boundary & ~on_dirichlet] = NEUMANN

    vertex_tags = _vertex_tags_from_edges(mesh.n_vertices, mesh.edges, edge_tags)
    return replace(mesh, edge_tags=edge_tags, vertex_tags=vertex_tags)


def shape_regularity(mesh: Mesh) -> float:
    """max over triangles of diam(T)^2 / |T|."""
    p = mesh.vertices[mesh.triangles]
    sides = p - np.roll(p, 1, axis=1)
    diam = np.sqrt((sides ** 2).sum(axis=2)).max(axis=1)
    return float((diam ** 2 / mesh.signed_areas()).max())


def write_debug_dump(mesh: Mesh, stream) -> None:
    """Plain-text dump (one record per line) for eyeballing small meshes."""
    for x, y in mesh.vertices:
        stream.write(f"vertex {x!r} {y!r}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"tri {i} {j} {k}\n")
    for (i, j), tag in zip(mesh.edges, mesh.edge_tags):
        stream.write(f"edge {i} {j} {TAG_NAMES[int(tag)]}\n")
