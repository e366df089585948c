import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracfem.mesh import (
    Mesh,
    build_mesh,
    classify_pair,
    disk_mesh,
    interval_mesh,
    lshape_mesh,
    prolongation,
    read_mesh,
    refine_times,
    refine_uniform,
    shape_regularity,
    square_mesh,
    write_mesh,
)


def test_interval_mesh_examples():
    m = interval_mesh(-1, 1, 4)
    assert np.allclose(m.vertices[:, 0], [-1, -0.5, 0, 0.5, 1])
    assert sorted(m.vertices[m.interior_dofs, 0]) == [-0.5, 0.0, 0.5]
    assert m.h_max == 0.5
    assert interval_mesh(-1, 1, 1).n_dofs == 0
    assert interval_mesh(0, 3, 3).h_max == pytest.approx(1.0)
    with pytest.raises(ValueError):
        interval_mesh(-1, 1, 0)


def test_square_mesh_examples():
    m1 = square_mesh(1.0, 1)
    assert m1.n_elements == 2 and m1.n_dofs == 0
    assert square_mesh(1.0, 2).h_max == pytest.approx(math.sqrt(2))
    assert square_mesh(1.0, 50).h_max == pytest.approx(2 * math.sqrt(2) / 50)
    with pytest.raises(ValueError):
        square_mesh(1.0, 0)


def test_lshape_mesh_examples():
    assert lshape_mesh(1).n_elements == 6
    for n in (1, 2, 3, 5):
        assert lshape_mesh(n).n_elements == 6 * n * n
    m = lshape_mesh(2)
    # the re-entrant corner lies on the boundary, so it carries no DOF
    corner = np.flatnonzero(np.all(m.vertices == 0.0, axis=1))
    assert corner.size == 1 and m.boundary_mask[corner[0]]
    assert m.n_dofs == 5


def test_disk_mesh_examples():
    m3 = disk_mesh(3)
    assert m3.n_elements == 1 and m3.n_dofs == 0
    m6 = disk_mesh(6)
    assert m6.n_dofs == 1 and np.allclose(m6.vertices[m6.interior_dofs[0]], 0.0)
    with pytest.raises(ValueError):
        disk_mesh(2)
    for n in (12, 24, 48):
        m = disk_mesh(n)
        b = m.vertices[m.boundary_mask]
        assert np.allclose(np.hypot(b[:, 0], b[:, 1]), 1.0, atol=1e-15)
    areas = [disk_mesh(n).area for n in (12, 48, 192)]
    assert all(math.pi - a > 0 for a in areas) and areas[0] < areas[1] < areas[2]


@pytest.mark.parametrize(
    "mesh,area",
    [
        (interval_mesh(-1, 1, 7), 2.0),
        (square_mesh(1.0, 5), 4.0),
        (square_mesh(2.5, 3), 25.0),
        (lshape_mesh(3), 3.0),
        (disk_mesh(24), 12 * math.sin(2 * math.pi / 24)),
        (disk_mesh(13), 6.5 * math.sin(2 * math.pi / 13)),
    ],
)
def test_measure_sums_to_domain(mesh, area):
    assert mesh.measures.sum() == pytest.approx(area, rel=1e-12)
    assert refine_uniform(mesh).measures.sum() == pytest.approx(area, rel=1e-12)


@pytest.mark.parametrize("domain,res", [("interval", 5), ("square", 3), ("lshape", 2), ("disk", 12)])
def test_refinement_nested_and_boundary_preserving(domain, res):
    coarse = build_mesh(domain, res)
    fine = refine_uniform(coarse)
    assert fine.parent is coarse
    assert np.array_equal(fine.vertices[: coarse.n_vertices], coarse.vertices)
    assert fine.n_elements == coarse.n_elements * (2 if coarse.dim == 1 else 4)
    assert fine.h_max == pytest.approx(coarse.h_max / 2, rel=1e-12)
    # boundary vertices of the coarse mesh stay boundary; new boundary vertices lie on old boundary facets
    assert np.all(fine.boundary_mask[: coarse.n_vertices] == coarse.boundary_mask)
    if coarse.dim == 2:
        assert shape_regularity(fine).sigma == pytest.approx(shape_regularity(coarse).sigma, rel=1e-12)
        assert np.allclose(fine.boundary_segments, coarse.boundary_segments)


def test_shape_regularity_examples():
    assert shape_regularity(interval_mesh(0, 1, 5)).sigma == 2.0
    right = Mesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    assert shape_regularity(right).sigma == pytest.approx(math.sqrt(2) / ((2 - math.sqrt(2)) / 2), rel=1e-12)
    eq = Mesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]), np.array([[0, 1, 2]]))
    assert shape_regularity(eq).sigma == pytest.approx(2 * math.sqrt(3), rel=1e-12)


def test_degenerate_element_rejected():
    with pytest.raises(ValueError):
        Mesh(2, np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]))


def test_classify_pair():
    m = square_mesh(1.0, 4)
    assert classify_pair(m, 3, 3).tag == "identical"
    tags = {classify_pair(m, 0, j).tag for j in range(m.n_elements)}
    assert tags == {"identical", "edge_touching", "vertex_touching", "disjoint"}
    for j in range(m.n_elements):
        a, b = classify_pair(m, 0, j), classify_pair(m, j, 0)
        assert a.tag == b.tag
        assert sorted(a.shared_vertices) == sorted((q, p) for p, q in b.shared_vertices)
        n_shared = {"identical": 3, "edge_touching": 2, "vertex_touching": 1, "disjoint": 0}[a.tag]
        assert len(a.shared_vertices) == n_shared
    m1 = interval_mesh(0, 1, 4)
    assert classify_pair(m1, 0, 1).tag == "vertex_touching"
    assert classify_pair(m1, 0, 3).tag == "disjoint"


@given(st.sampled_from(["interval", "square", "lshape", "disk"]), st.integers(0, 2), st.integers(0, 2**31))
def test_prolongation_interpolates_linear_functions(domain, times, seed):
    res = {"interval": 3, "square": 2, "lshape": 1, "disk": 7}[domain]
    coarse = build_mesh(domain, res)
    fine = refine_times(coarse, times + 1)
    P = prolongation(coarse, fine)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=coarse.dim + 1)
    f = lambda v: a[0] + v @ a[1:]  # noqa: E731
    assert np.allclose(P @ f(coarse.vertices), f(fine.vertices), atol=1e-12)
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)


def test_mesh_roundtrip(tmp_path):
    m = refine_uniform(disk_mesh(9))
    write_mesh(m, tmp_path / "m.txt")
    r = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(r.vertices, m.vertices) and np.array_equal(r.elements, m.elements)
    (tmp_path / "bad.txt").write_text("2 3 1\n0 0\n1 0\n")
    with pytest.raises(ValueError):
        read_mesh(tmp_path / "bad.txt")


def test_boundary_segments_merge_collinear_facets():
    assert len(square_mesh(1.0, 4).boundary_segments) == 4
    assert len(lshape_mesh(3).boundary_segments) == 6
    assert len(disk_mesh(10).boundary_segments) == 10
