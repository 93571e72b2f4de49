"""Structured triangulations of the unit square.

Every mesh is a uniform n x n grid of cells, each split along the
diagonal from its lower-left to its upper-right corner.  Edges are
stored with their vertex indices sorted (low, high); the oriented
tangent of an edge runs from the low vertex to the high vertex and its
normal is the tangent rotated clockwise by 90 degrees.  This global
orientation makes the lowest-order Raviart-Thomas normal-flux degrees
of freedom single-valued across elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation of the unit square.

    Attributes
    ----------
    n_subdiv : int
        Number of cells per side; the mesh size is h = 1/n_subdiv.
    vertices : (V, 2) float array
        Vertex coordinates.
    triangles : (T, 3) int array
        Vertex indices per triangle, counter-clockwise.
    edges : (E, 2) int array
        Vertex index pairs, stored (low, high).
    triangle_edges : (T, 3) int array
        Edge index of the local edge opposite each local vertex.
    triangle_edge_signs : (T, 3) int array
        +1 if the triangle traverses the edge from its low vertex to
        its high vertex, else -1.
    boundary_vertex : (V,) bool array
    boundary_edge : (E,) bool array
    """

    n_subdiv: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    triangle_edge_signs: np.ndarray
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n_subdiv


def triangle_areas(mesh: Mesh) -> np.ndarray:
    """Signed areas of all triangles (positive for the CCW convention)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_unit_square_mesh(n_subdiv: int) -> Mesh:
    """Build the structured triangulation with ``n_subdiv`` cells per side.

    Raises
    ------
    ValueError
        If ``n_subdiv`` is not a positive integer.
    """
    if n_subdiv < 1:
        raise ValueError(f"n_subdiv must be >= 1, got {n_subdiv}")
    n = int(n_subdiv)

    coords = np.linspace(0.0, 1.0, n + 1)
    xg, yg = np.meshgrid(coords, coords)
    vertices = np.column_stack([xg.ravel(), yg.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            # split along the lower-left -> upper-right diagonal
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    triangles = np.asarray(triangles, dtype=np.int64)

    # local edge k is opposite local vertex k: (v_{k+1}, v_{k+2}) mod 3
    v1 = triangles[:, [1, 2, 0]]
    v2 = triangles[:, [2, 0, 1]]
    lo = np.minimum(v1, v2)
    hi = np.maximum(v1, v2)
    pairs = np.column_stack([lo.ravel(), hi.ravel()])
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    triangle_edges = inverse.reshape(-1, 3)
    triangle_edge_signs = np.where(v1 < v2, 1, -1).astype(np.int64)

    edge_count = np.zeros(edges.shape[0], dtype=np.int64)
    np.add.at(edge_count, triangle_edges.ravel(), 1)
    boundary_edge = edge_count == 1

    boundary_vertex = np.zeros(vertices.shape[0], dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True

    return Mesh(
        n_subdiv=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        triangle_edge_signs=triangle_edge_signs,
        boundary_vertex=boundary_vertex,
        boundary_edge=boundary_edge,
    )


def validate_mesh(mesh: Mesh) -> list[str]:
    """Check all mesh invariants; return one message per violation."""
    violations = []

    areas = triangle_areas(mesh)
    for t in np.nonzero(areas <= 0)[0]:
        violations.append(f"triangle {t}: negative area {areas[t]:.3e}")

    euler = mesh.num_vertices - mesh.num_edges + mesh.num_triangles
    if euler != 1:
        violations.append(f"Euler relation V-E+T = {euler}, expected 1")

    edge_count = np.zeros(mesh.num_edges, dtype=np.int64)
    np.add.at(edge_count, mesh.triangle_edges.ravel(), 1)
    for e in np.nonzero((edge_count != 1) & (edge_count != 2))[0]:
        violations.append(
            f"edge {e}: edge adjacency count {edge_count[e]}, expected 1 or 2"
        )
    mismatched = (edge_count == 1) != mesh.boundary_edge
    # skip edges already reported with a bad adjacency count
    mismatched &= (edge_count == 1) | (edge_count == 2)
    for e in np.nonzero(mismatched)[0]:
        violations.append(f"edge {e}: boundary flag inconsistent with adjacency")

    lo_hi = mesh.edges[:, 0] >= mesh.edges[:, 1]
    for e in np.nonzero(lo_hi)[0]:
        violations.append(f"edge {e}: vertices not stored (low, high)")

    v1 = mesh.triangles[:, [1, 2, 0]]
    v2 = mesh.triangles[:, [2, 0, 1]]
    expected_sign = np.where(v1 < v2, 1, -1)
    expected_edge_lo = np.minimum(v1, v2)
    actual_lo = mesh.edges[mesh.triangle_edges][:, :, 0]
    bad = (mesh.triangle_edge_signs != expected_sign) | (actual_lo != expected_edge_lo)
    for t, k in zip(*np.nonzero(bad)):
        violations.append(f"triangle {t}: local edge {k} orientation inconsistent")

    return violations
