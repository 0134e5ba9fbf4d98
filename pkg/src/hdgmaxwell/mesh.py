"""Structured 2D meshes with explicit edge topology.

Every mesh stores a global edge list whose tangent runs from the lower
to the higher vertex index.  Elements keep, for each local edge (vertex
``i`` to vertex ``i+1`` in counterclockwise order), the global edge index
and a sign telling whether the local traversal agrees with the global
tangent.
"""

from dataclasses import dataclass

import numpy as np

SHAPES = ("triangle", "parallelogram", "square")


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    elements: np.ndarray        # (ne, nloc) counterclockwise vertex cycles
    shapes: tuple               # shape tag per element
    edges: np.ndarray           # (nedge, 2), a < b
    element_edges: np.ndarray   # (ne, nloc) global edge of local edge i
    element_signs: np.ndarray   # (ne, nloc) +1 if local direction == global
    boundary: np.ndarray        # (nedge,) bool
    h_elements: np.ndarray      # (ne,) diameters
    h_edges: np.ndarray         # (nedge,) lengths

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def h(self):
        return float(self.h_elements.max())

    @property
    def interior_edges(self):
        return np.flatnonzero(~self.boundary)

    def element_vertices(self, e):
        return self.vertices[self.elements[e]]

    def centroids(self):
        return self.vertices[self.elements].mean(axis=1)

    def signed_areas(self):
        p = self.vertices[self.elements]
        q = np.roll(p, -1, axis=1)
        return 0.5 * np.sum(p[..., 0] * q[..., 1] - q[..., 0] * p[..., 1], axis=1)

    def edge_elements(self):
        """List of ``(element, local edge)`` records per global edge."""
        out = [[] for _ in range(self.n_edges)]
        for e, row in enumerate(self.element_edges):
            for i, f in enumerate(row):
                out[f].append((e, i))
        return out

    def dump(self):
        """Plain-text listing of nodes, elements and edges (debugging aid)."""
        lines = [f"vertices {self.n_vertices}"]
        lines += [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(self.vertices)]
        lines.append(f"elements {self.n_elements}")
        for e in range(self.n_elements):
            verts = " ".join(str(v) for v in self.elements[e])
            edges = " ".join(str(f) for f in self.element_edges[e])
            signs = " ".join(f"{s:+d}" for s in self.element_signs[e])
            lines.append(f"{e} {self.shapes[e]} {verts} | {edges} | {signs}")
        lines.append(f"edges {self.n_edges}")
        for f, (a, b) in enumerate(self.edges):
            lines.append(f"{f} {a} {b} {int(self.boundary[f])} {self.h_edges[f]:.17g}")
        return "\n".join(lines) + "\n"


def mesh_from_elements(vertices, elements, shapes):
    """Build the edge topology for a list of counterclockwise elements."""
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=int)
    if isinstance(shapes, str):
        shapes = (shapes,) * len(elements)
    shapes = tuple(shapes)
    for s in shapes:
        if s not in SHAPES:
            raise ValueError(f"unknown shape tag {s!r}")

    nloc = elements.shape[1]
    edge_index = {}
    edges = []
    element_edges = np.empty_like(elements)
    element_signs = np.empty_like(elements)
    count = {}
    for e, cyc in enumerate(elements):
        for i in range(nloc):
            a, b = int(cyc[i]), int(cyc[(i + 1) % nloc])
            key = (min(a, b), max(a, b))
            if key not in edge_index:
                edge_index[key] = len(edges)
                edges.append(key)
            f = edge_index[key]
            element_edges[e, i] = f
            element_signs[e, i] = 1 if a < b else -1
            count[f] = count.get(f, 0) + 1
    edges = np.array(edges, dtype=int)
    counts = np.array([count[f] for f in range(len(edges))])
    if np.any(counts > 2):
        raise ValueError("non-conforming mesh: an edge is shared by more than two elements")

    p = vertices[elements]
    diffs = p[:, :, None, :] - p[:, None, :, :]
    h_elements = np.sqrt((diffs ** 2).sum(-1)).max(axis=(1, 2))
    h_edges = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)

    mesh = Mesh(vertices, elements, shapes, edges, element_edges, element_signs,
                counts == 1, h_elements, h_edges)
    if np.any(mesh.signed_areas() <= 0):
        raise ValueError("element vertex cycles must be counterclockwise")
    return mesh


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"number of subdivisions must be a positive integer, got {n!r}")
    return int(n)


def _grid(n, mapping):
    s, t = np.meshgrid(np.arange(n + 1) / n, np.arange(n + 1) / n)
    pts = mapping(s.ravel(), t.ravel())
    return np.column_stack(pts)


def _cells(n):
    # vertex index = j*(n+1) + i; counterclockwise corners of cell (i, j)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    return v00, v00 + 1, v00 + n + 2, v00 + n + 1


def build_triangle_mesh(n):
    """Unit square, ``n x n`` cells, each cut by its lower-left to upper-right diagonal."""
    n = _check_n(n)
    verts = _grid(n, lambda s, t: (s, t))
    v00, v10, v11, v01 = _cells(n)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return mesh_from_elements(verts, elements, "triangle")


def build_parallelogram_mesh(n):
    """``n x n`` congruent cells on {0 <= x - sqrt(3) y <= 1, 0 <= y <= 1/2}."""
    n = _check_n(n)
    r3 = np.sqrt(3.0)
    verts = _grid(n, lambda s, t: (s + 0.5 * r3 * t, 0.5 * t))
    elements = np.column_stack(_cells(n))
    return mesh_from_elements(verts, elements, "parallelogram")


def build_square_mesh(n):
    """Unit square split into ``n x n`` axis-aligned squares."""
    n = _check_n(n)
    verts = _grid(n, lambda s, t: (s, t))
    elements = np.column_stack(_cells(n))
    return mesh_from_elements(verts, elements, "square")


MESH_BUILDERS = {
    "triangle": build_triangle_mesh,
    "parallelogram": build_parallelogram_mesh,
    "square": build_square_mesh,
}


def edge_geometry(vertices, i):
    """Endpoints, length, unit tangent and outward normal of local edge ``i``."""
    a = vertices[i]
    b = vertices[(i + 1) % len(vertices)]
    d = b - a
    length = float(np.hypot(*d))
    t = d / length
    return a, b, length, t, np.array([t[1], -t[0]])


def outward_normal(mesh, element, local_edge):
    """Unit outward normal of ``element`` on its ``local_edge``."""
    return edge_geometry(mesh.element_vertices(element), local_edge)[4]


DOMAIN_MAPS = {
    "triangle": lambda s, t: (s, t),
    "parallelogram": lambda s, t: (s + 0.5 * np.sqrt(3.0) * t, 0.5 * t),
    "square": lambda s, t: (s, t),
}


def structured_size(mesh):
    """Subdivisions per side of a mesh produced by one of the builders."""
    per_cell = 2 if mesh.shapes[0] == "triangle" else 1
    n = int(round(np.sqrt(mesh.n_elements / per_cell)))
    if per_cell * n * n != mesh.n_elements:
        raise ValueError("mesh is not a structured n x n mesh")
    return n


def locate(mesh, s, t):
    """Element containing the image of reference-square points ``(s, t)`` in [0, 1]^2.

    Points on shared edges are assigned to one of the neighbours.
    """
    n = structured_size(mesh)
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    i = np.clip(np.floor(s * n).astype(int), 0, n - 1)
    j = np.clip(np.floor(t * n).astype(int), 0, n - 1)
    cell = j * n + i
    if mesh.shapes[0] != "triangle":
        return cell
    upper = (t * n - j) > (s * n - i)
    return 2 * cell + upper.astype(int)
