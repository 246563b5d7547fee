import numpy as np
import pytest

from fospg.mesh import (
    HOLE,
    AffineMap,
    Mesh,
    MeshError,
    build_facets,
    polygon_area,
    polygonal_disk,
    punctured_square,
    refine,
    unit_square_rectangles,
    unit_square_triangles,
    vertical_faults_mesh,
    vertical_faults_region,
)


def counts(m):
    return m.num_elements, m.num_vertices, m.num_facets


@pytest.mark.parametrize("n, expected", [(1, (2, 4, 5)), (2, (8, 9, 16)), (3, (18, 16, 33))])
def test_unit_square_triangles_counts(n, expected):
    m = unit_square_triangles(n)
    assert counts(m) == expected
    assert m.euler_characteristic() == 1
    assert m.h == pytest.approx(np.sqrt(2) / n)


@pytest.mark.parametrize("n, expected", [(1, (1, 4, 4)), (2, (4, 9, 12)), (4, (16, 25, 40))])
def test_unit_square_rectangles_counts(n, expected):
    m = unit_square_rectangles(n)
    assert counts(m) == expected
    assert m.euler_characteristic() == 1


@pytest.mark.parametrize("gen", [unit_square_triangles, unit_square_rectangles])
def test_zero_n_rejected(gen):
    with pytest.raises(MeshError):
        gen(0)


@pytest.mark.parametrize("n, ne", [(9, 160), (18, 640)])
def test_punctured_square(n, ne):
    m = punctured_square(n)
    assert m.num_elements == ne
    assert m.euler_characteristic() == 0
    assert m.areas().sum() == pytest.approx(1 - 1 / 81, abs=1e-12)
    hole = m.boundary_markers == HOLE
    assert hole.sum() == 4 * (n // 9)
    assert np.all(m.facet_elements[hole, 1] < 0)


@pytest.mark.parametrize("n", [10, 4])
def test_punctured_requires_multiple_of_nine(n):
    with pytest.raises(MeshError):
        punctured_square(n)


@pytest.mark.parametrize("x, y, tag", [(0.25, 0.10, 1), (0.25, 0.175, 2), (0.75, 0.05, 1), (0.75, 0.15, 2)])
def test_vertical_faults_region(x, y, tag):
    assert vertical_faults_region(x, y) == tag


def test_vertical_faults_mesh_alignment():
    m = vertical_faults_mesh(20)
    assert set(np.unique(m.regions)) == {1, 2}
    with pytest.raises(MeshError):
        vertical_faults_mesh(30)


def test_disk():
    assert polygonal_disk(0).num_elements == 16
    assert polygonal_disk(1).num_elements == 64
    m = polygonal_disk(2)
    r = np.linalg.norm(m.vertices[m.facets[m.boundary_facets].ravel()], axis=1)
    assert np.max(np.abs(r - 1)) < 1e-13
    assert m.areas().sum() == pytest.approx(polygon_area(m), abs=1e-12)
    assert m.euler_characteristic() == 1


def test_two_triangle_square_has_one_interior_facet():
    m = unit_square_triangles(1)
    assert len(m.interior_facets) == 1


MESHES = [
    lambda: unit_square_triangles(3),
    lambda: unit_square_rectangles(3),
    lambda: punctured_square(9),
    lambda: vertical_faults_mesh(20),
    lambda: polygonal_disk(1),
]


@pytest.mark.parametrize("make", MESHES)
def test_mesh_invariants(make):
    m = make()
    nb = len(m.boundary_facets)
    assert m.num_elements * m.facets_per_element == 2 * len(m.interior_facets) + nb
    assert np.all(m.jacobians()[1] > 0)
    # every facet referenced by its owner and (if any) neighbor
    for f, (a, b) in enumerate(m.facet_elements):
        assert f in m.element_facets[a]
        if b >= 0:
            assert f in m.element_facets[b]
    n = m.facet_normals()
    assert np.max(np.abs(np.linalg.norm(n, axis=1) - 1)) < 1e-14
    # owner -> neighbor: normal points from owner centroid toward the facet
    mid = m.vertices[m.facets].mean(axis=1)
    c = m.centroids()[m.facet_elements[:, 0]]
    assert np.all(np.einsum("fi,fi->f", mid - c, n) > 0)


@pytest.mark.parametrize("make", [lambda: unit_square_triangles(2), lambda: polygonal_disk(0)])
def test_refinement_halves_diameter(make):
    m = make()
    r = refine(m)
    assert r.num_elements == 4 * m.num_elements
    assert r.h == pytest.approx(m.h / 2, rel=0.01)


def test_affine_map_roundtrip():
    m = unit_square_triangles(3)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    for e in range(m.num_elements):
        A = m.affine_map(e)
        assert A.det > 0
        x = A(ref)
        assert np.allclose(x, m.vertices[m.elements[e]], atol=1e-13)
        assert np.allclose(A.inverse(x), ref, atol=1e-13)
    assert AffineMap(np.eye(2), np.zeros(2)).det == 1.0


def test_inverted_and_duplicate_elements_rejected():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError):
        Mesh(v, np.array([[0, 2, 1]]), "triangle")
    with pytest.raises(MeshError):
        build_facets(np.array([[0, 1, 2], [0, 1, 2]]))
