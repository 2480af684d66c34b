import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porofem.mesh import MeshError, Side, boundary_facets, build_rect, locate


def test_single_cell():
    m = build_rect((0, 1, 0, 1), 1, 1)
    assert (m.n_vertices, m.n_triangles, m.n_edges) == (4, 2, 5)


def test_h_and_cell_size():
    m = build_rect((0, 1, 0, 1), 4, 4)
    assert m.h == pytest.approx(np.sqrt(2) / 4)
    assert m.cell_size == pytest.approx(1 / 4)


def test_footing_counts():
    m = build_rect((-50, 50, 0, 100), 32, 32)
    assert m.n_vertices == 1089
    assert m.n_triangles == 2048


def test_degenerate():
    with pytest.raises(MeshError):
        build_rect((0, 0, 0, 1), 2, 2)
    with pytest.raises(MeshError):
        build_rect((0, 1, 0, 1), 0, 2)


@settings(max_examples=30, deadline=None)
@given(nx=st.integers(1, 64), ny=st.integers(1, 64))
def test_topology(nx, ny):
    m = build_rect((-1.0, 2.0, 0.5, 1.5), nx, ny)
    areas = m.triangle_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(m.area, rel=1e-12)
    assert m.n_vertices - m.n_edges + m.n_triangles == 1
    assert m.n_edges == 3 * nx * ny + nx + ny
    counts = np.bincount(m.tri_edges.ravel(), minlength=m.n_edges)
    interior = m.edge_tris[:, 1] >= 0
    assert np.all(counts[interior] == 2)
    assert np.all(counts[~interior] == 1)
    # each side covered exactly once, total length = perimeter
    total = sum(boundary_facets(m, s).lengths.sum() for s in Side)
    assert total == pytest.approx(2 * (3.0 + 1.0))
    assert len(m.boundary_edges) == 2 * (nx + ny)


def test_top_facets(unit2):
    f = boundary_facets(unit2, Side.TOP)
    assert len(f) == 2
    np.testing.assert_array_equal(f.normal, [0, 1])
    assert np.allclose(f.endpoints[:, :, 1], 1.0)


@pytest.mark.parametrize(
    "side, normal, coord",
    [(Side.RIGHT, (1, 0), (0, 1.0)), (Side.LEFT, (-1, 0), (0, 0.0)), (Side.BOTTOM, (0, -1), (1, 0.0))],
)
def test_side_normals(unit2, side, normal, coord):
    f = boundary_facets(unit2, side)
    np.testing.assert_array_equal(f.normal, normal)
    axis, value = coord
    assert np.allclose(f.endpoints[:, :, axis], value)


def test_footing_strip_facets():
    m = build_rect((-50, 50, 0, 100), 20, 20)
    top = boundary_facets(m, Side.TOP)
    mid = top.endpoints.mean(axis=1)
    strip = np.abs(mid[:, 0]) <= 20
    # strip ends at x = +-20 fall on grid lines of the 5 m mesh
    assert strip.sum() == 8
    assert np.all(np.abs(top.endpoints[strip][:, :, 0]) <= 20 + 1e-12)


class TestLocate:
    def test_centroid(self, unit4):
        c = unit4.vertices[unit4.triangles[0]].mean(axis=0)
        tri, bary = locate(unit4, c)
        assert tri == 0
        np.testing.assert_allclose(bary, [1 / 3] * 3, atol=1e-14)

    def test_vertex(self, unit4):
        tri, bary = locate(unit4, (0.5, 0.25))
        assert 0.5 in unit4.vertices[unit4.triangles[tri]][:, 0]
        assert np.isclose(bary.max(), 1.0)
        np.testing.assert_allclose(unit4.vertices[unit4.triangles[tri]].T @ bary, [0.5, 0.25])

    def test_edge_midpoint(self, unit4):
        e = np.flatnonzero(unit4.edge_tris[:, 1] >= 0)[3]
        mid = unit4.vertices[unit4.edges[e]].mean(axis=0)
        tri, bary = locate(unit4, mid)
        assert tri in unit4.edge_tris[e]
        np.testing.assert_allclose(np.sort(bary), [0, 0.5, 0.5], atol=1e-14)

    def test_outside(self, unit4):
        with pytest.raises(MeshError):
            locate(unit4, (1.5, 0.5))

    def test_random_points(self, unit4, rng):
        for p in rng.random((50, 2)):
            tri, bary = locate(unit4, p)
            assert np.all(bary >= 0) and bary.sum() == pytest.approx(1)
            np.testing.assert_allclose(unit4.vertices[unit4.triangles[tri]].T @ bary, p, atol=1e-14)


@pytest.mark.parametrize("diagonal", ["up", "down"])
def test_diagonal_orientation(diagonal):
    m = build_rect((0, 1, 0, 1), 3, 2, diagonal=diagonal)
    a = m.triangle_areas()
    assert np.all(a > 0) and a.sum() == pytest.approx(1.0)
    # the cut of cell 0 joins (0,0)-(1/3,1/2) for "up" and (1/3,0)-(0,1/2) for "down"
    shared = set(m.triangles[0]) & set(m.triangles[1])
    corners = np.array(sorted(map(tuple, m.vertices[sorted(shared)])))
    expect = [(0.0, 0.0), (1 / 3, 0.5)] if diagonal == "up" else [(0.0, 0.5), (1 / 3, 0.0)]
    np.testing.assert_allclose(corners, expect, atol=1e-14)
    for p in np.random.default_rng(3).random((40, 2)):
        tri, bary = locate(m, p)
        np.testing.assert_allclose(m.vertices[m.triangles[tri]].T @ bary, p, atol=1e-13)


def test_bad_diagonal():
    with pytest.raises(MeshError):
        build_rect((0, 1, 0, 1), 2, 2, diagonal="x")
