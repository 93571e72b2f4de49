"""Structured mesh generator: counts, invariants and defect detection."""

import dataclasses

import numpy as np
import pytest

from savmhd.mesh import Mesh, build_unit_square_mesh, triangle_areas, validate_mesh


def test_smallest_mesh_counts():
    mesh = build_unit_square_mesh(1)
    assert mesh.num_vertices == 4
    assert mesh.num_edges == 5
    assert mesh.num_triangles == 2


def test_n2_counts():
    mesh = build_unit_square_mesh(2)
    assert mesh.num_vertices == 9
    assert mesh.num_edges == 16
    assert mesh.num_triangles == 8


def test_n6_triangle_count():
    mesh = build_unit_square_mesh(6)
    assert mesh.num_triangles == 72
    assert mesh.h == pytest.approx(1.0 / 6.0)


def test_invalid_subdivision_rejected():
    with pytest.raises(ValueError):
        build_unit_square_mesh(0)
    with pytest.raises(ValueError):
        build_unit_square_mesh(-3)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 13, 21, 32])
def test_validate_clean_meshes(n):
    mesh = build_unit_square_mesh(n)
    assert validate_mesh(mesh) == []
    # generic counts for an n-by-n structured subdivision
    assert mesh.num_vertices == (n + 1) ** 2
    assert mesh.num_triangles == 2 * n * n
    assert mesh.num_edges == 3 * n * n + 2 * n


@pytest.mark.parametrize("n", [1, 4, 17])
def test_areas_positive_and_sum_to_one(n):
    mesh = build_unit_square_mesh(n)
    areas = triangle_areas(mesh)
    assert np.all(areas > 0)
    assert abs(areas.sum() - 1.0) <= 1e-14
    # uniform subdivision: every triangle has the same area
    assert np.allclose(areas, 0.5 / n ** 2, rtol=1e-13)


def test_boundary_edges_lie_on_square_sides():
    mesh = build_unit_square_mesh(5)
    be = np.nonzero(mesh.boundary_edge)[0]
    assert be.size == 4 * 5
    for e in be:
        a, b = mesh.vertices[mesh.edges[e]]
        on_side = (
            (a[0] == 0.0 and b[0] == 0.0) or (a[0] == 1.0 and b[0] == 1.0)
            or (a[1] == 0.0 and b[1] == 0.0) or (a[1] == 1.0 and b[1] == 1.0))
        assert on_side
    # boundary vertices are exactly those on the sides
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    expected = (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)
    assert np.array_equal(mesh.boundary_vertex, expected)


def test_edges_stored_low_to_high():
    mesh = build_unit_square_mesh(4)
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    # no duplicate edges
    assert len({tuple(e) for e in mesh.edges}) == mesh.num_edges


def test_edge_signs_match_orientation():
    mesh = build_unit_square_mesh(3)
    tri = mesh.triangles
    for t in range(mesh.num_triangles):
        for k in range(3):
            v1, v2 = tri[t, (k + 1) % 3], tri[t, (k + 2) % 3]
            expected = 1 if v1 < v2 else -1
            assert mesh.triangle_edge_signs[t, k] == expected
            # the referenced edge really is {v1, v2}
            e = mesh.triangle_edges[t, k]
            assert set(mesh.edges[e]) == {v1, v2}


def test_interior_edges_have_opposite_signs():
    mesh = build_unit_square_mesh(4)
    sign_sum = np.zeros(mesh.num_edges)
    count = np.zeros(mesh.num_edges, dtype=int)
    np.add.at(sign_sum, mesh.triangle_edges.ravel(),
              mesh.triangle_edge_signs.ravel().astype(float))
    np.add.at(count, mesh.triangle_edges.ravel(), 1)
    interior = ~mesh.boundary_edge
    assert np.all(count[interior] == 2)
    assert np.all(count[mesh.boundary_edge] == 1)
    # shared edges are traversed once in each direction
    assert np.all(sign_sum[interior] == 0.0)


def _with(mesh, **overrides):
    return Mesh(**{**{f.name: getattr(mesh, f.name)
                      for f in dataclasses.fields(Mesh)}, **overrides})


def test_validate_detects_inverted_triangle():
    mesh = build_unit_square_mesh(2)
    tri = mesh.triangles.copy()
    tri[0] = tri[0, ::-1]  # clockwise now
    issues = validate_mesh(_with(mesh, triangles=tri))
    assert any("area" in msg or "orientation" in msg for msg in issues)


def test_validate_detects_wrong_boundary_flag():
    mesh = build_unit_square_mesh(2)
    flags = mesh.boundary_edge.copy()
    flags[np.nonzero(flags)[0][0]] = False
    issues = validate_mesh(_with(mesh, boundary_edge=flags))
    assert issues != []


def test_validate_detects_unsorted_edge_storage():
    mesh = build_unit_square_mesh(2)
    edges = mesh.edges.copy()
    edges[0] = edges[0, ::-1]
    issues = validate_mesh(_with(mesh, edges=edges))
    assert issues != []


def test_validate_detects_bad_adjacency():
    mesh = build_unit_square_mesh(2)
    te = mesh.triangle_edges.copy()
    te[0, 0] = te[1, 0]  # two triangles now claim the same edge slot
    issues = validate_mesh(_with(mesh, triangle_edges=te))
    assert any("adjacency" in msg or "edge" in msg for msg in issues)


def test_vertex_grid_convention():
    # vertex id j*(n+1)+i sits at (i*h, j*h)
    n = 3
    mesh = build_unit_square_mesh(n)
    for j in range(n + 1):
        for i in range(n + 1):
            v = j * (n + 1) + i
            assert mesh.vertices[v, 0] == pytest.approx(i / n)
            assert mesh.vertices[v, 1] == pytest.approx(j / n)
