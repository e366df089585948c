import functools

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracfem.assembly import (
    DofMap,
    QuadratureConfig,
    assemble_mass,
    assemble_stiffness,
    export_matrix,
    exterior_matrix,
    interaction_matrix,
)
from fracfem.convergence import interior_prolongation
from fracfem.mesh import Mesh, disk_mesh, interval_mesh, lshape_mesh, refine_uniform, square_mesh
from fracfem.oracle import oracle_stiffness, stiffness_entry_oracle

MESHES = {
    "interval8": lambda: interval_mesh(-1.0, 1.0, 8),
    "square4": lambda: square_mesh(1.0, 4),
    "lshape2": lambda: lshape_mesh(2),
    "disk12": lambda: disk_mesh(12),
}


@functools.lru_cache(maxsize=None)
def mesh(name):
    return MESHES[name]()


@functools.lru_cache(maxsize=None)
def system(name, s):
    m = mesh(name)
    K = assemble_stiffness(m, s)
    M = assemble_mass(m).toarray()
    return K, M


def test_mass_uniform_1d():
    h = 0.25
    M = assemble_mass(interval_mesh(0.0, 2.0, 8)).toarray()
    assert np.allclose(np.diag(M), 2 * h / 3, rtol=0, atol=1e-15)
    assert np.allclose(np.diag(M, 1), h / 6, rtol=0, atol=1e-15)
    assert np.count_nonzero(np.triu(M, 2)) == 0


@pytest.mark.parametrize("name", list(MESHES))
def test_full_mass_row_sums(name):
    m = mesh(name)
    M = assemble_mass(m, full=True)
    support = np.zeros(m.n_vertices)
    np.add.at(support, m.elements.ravel(), np.repeat(m.measures, m.dim + 1))
    assert np.allclose(np.asarray(M.sum(axis=1)).ravel(), support / (m.dim + 1), rtol=1e-14)
    assert M.sum() == pytest.approx(m.measures.sum(), rel=1e-14)


def test_element_mass_triangle():
    T = Mesh(2, np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]]), np.array([[0, 1, 2]]))
    M = assemble_mass(T, full=True).toarray()
    assert np.allclose(M, T.area / 12 * (np.ones((3, 3)) + np.eye(3)), rtol=1e-15)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("name", list(MESHES))
def test_exact_symmetry_and_definiteness(name, s):
    K, M = system(name, s)
    assert np.array_equal(K, K.T)
    assert np.array_equal(M, M.T)
    assert np.linalg.eigvalsh(K)[0] > 0
    assert np.linalg.eigvalsh(M)[0] > 0


def test_no_interior_dofs():
    with pytest.raises(ValueError):
        assemble_stiffness(interval_mesh(-1.0, 1.0, 1), 0.5)
    with pytest.raises(ValueError):
        assemble_mass(interval_mesh(-1.0, 1.0, 1))


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, float("nan")])
def test_invalid_order(s):
    with pytest.raises(ValueError):
        assemble_stiffness(interval_mesh(-1.0, 1.0, 4), s)


def test_single_hat_matches_oracle():
    m = interval_mesh(-1.0, 1.0, 2)
    K = assemble_stiffness(m, 0.5)
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(stiffness_entry_oracle(m, 0.5, 0, 0), rel=1e-6)


def test_interval8_matches_oracle():
    m = interval_mesh(-1.0, 1.0, 8)
    K = assemble_stiffness(m, 0.25)
    O = oracle_stiffness(m, 0.25)
    assert np.abs(K - O).max() <= 1e-6 * np.abs(O).max()


@pytest.fixture(scope="module")
def square2():
    return square_mesh(1.0, 2)


def test_square2_entries_match_oracle(square2):
    K = assemble_stiffness(square2, 0.5)
    # the single interior DOF sits at the centre; compare the full 1x1 matrix
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(stiffness_entry_oracle(square2, 0.5, 0, 0), rel=1e-5)


def test_oracle_entry_symmetry():
    m = interval_mesh(-1.0, 1.0, 6)
    a = stiffness_entry_oracle(m, 0.7, 1, 3)
    b = stiffness_entry_oracle(m, 0.7, 3, 1)
    assert a == pytest.approx(b, rel=1e-9)
    with pytest.raises(IndexError):
        stiffness_entry_oracle(m, 0.7, 0, m.n_dofs)


@settings(max_examples=25)
@given(v=arrays(float, 7, elements=st.floats(-1, 1)), s=st.sampled_from([0.1, 0.5, 0.9]))
def test_discrete_poincare(v, s):
    K, M = system("interval8", s)
    lam1 = sla.eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])[0]
    vMv = v @ M @ v
    if vMv < 1e-12:
        return
    assert v @ K @ v >= lam1 * vMv * (1 - 1e-12)


@pytest.mark.parametrize("name", ["interval8", "square4"])
def test_nested_rayleigh_quotient(name):
    coarse = mesh(name)
    fine = refine_uniform(coarse)
    s = 0.5
    Kc, Mc = system(name, s)
    Kf, Mf = assemble_stiffness(fine, s), assemble_mass(fine).toarray()
    _, Vc = sla.eigh(Kc, Mc, subset_by_index=[0, 3])
    lf = sla.eigh(Kf, Mf, eigvals_only=True, subset_by_index=[0, 3])
    lc = sla.eigh(Kc, Mc, eigvals_only=True, subset_by_index=[0, 3])
    P = interior_prolongation(coarse, fine)
    w = P @ Vc[:, 0]
    assert (w @ Kf @ w) / (w @ Mf @ w) >= lf[0] * (1 - 1e-12)
    # Galerkin restriction is exact for nested spaces
    assert np.allclose(P.T @ Kf @ P, Kc, rtol=0, atol=1e-6 * np.abs(Kc).max())
    assert np.all(lf <= lc * (1 + 1e-12))


def test_interaction_plus_exterior_decomposition():
    m = mesh("square4")
    from fracfem.kernel import normalization_constant

    s = 0.3
    K = assemble_stiffness(m, s)
    A = interaction_matrix(m, s) + 2 * exterior_matrix(m, s)
    assert np.allclose(K, normalization_constant(2, s).value * A, rtol=1e-14, atol=0)


def test_exterior_matrix_is_weighted_mass():
    # int phi_i phi_j w with w > 0: symmetric, positive definite, nonnegative entries
    W = exterior_matrix(mesh("lshape2"), 0.4)
    assert np.allclose(W, W.T, rtol=1e-13, atol=0)
    assert np.all(W >= 0) and np.linalg.eigvalsh(W)[0] > 0


def test_quadrature_config():
    q1 = QuadratureConfig.for_dim(1)
    q2 = QuadratureConfig.for_dim(2, touching_order=8)
    assert q1.touching_order == 24 and q2.touching_order == 8
    assert q2.schedule(2)[-1][0] == np.inf
    custom = QuadratureConfig(disjoint_schedule=[[np.inf, 5, 0]])
    assert custom.schedule(2) == ((np.inf, 5, 0),)
    # a coarser rule changes entries only slightly
    m = mesh("square4")
    K1 = assemble_stiffness(m, 0.5)
    K2 = assemble_stiffness(m, 0.5, QuadratureConfig(touching_order=8, disjoint_schedule=((np.inf, 7, 0),)))
    assert 0 < np.abs(K1 - K2).max() < 1e-2 * np.abs(K1).max()


def test_dofmap_bijection():
    m = mesh("disk12")
    d = DofMap.from_mesh(m)
    rows = d.row_of_vertex[d.row_of_vertex >= 0]
    assert sorted(rows) == list(range(d.order))
    assert np.all(d.row_of_vertex[m.boundary_mask] == -1)


def test_export_matrix(tmp_path):
    K, _ = system("interval8", 0.5)
    path = tmp_path / "K.txt"
    export_matrix(K, path)
    lines = path.read_text().splitlines()
    n, _, nnz = map(int, lines[0].split())
    assert n == K.shape[0] and nnz == len(lines) - 1 == n * (n + 1) // 2
    R = np.zeros_like(K)
    for line in lines[1:]:
        i, j, v = line.split()
        assert int(i) >= int(j)
        R[int(i), int(j)] = R[int(j), int(i)] = float(v)
    assert np.array_equal(R, K)


def test_deterministic_assembly():
    m = mesh("lshape2")
    assert np.array_equal(assemble_stiffness(m, 0.6), assemble_stiffness(m, 0.6))
