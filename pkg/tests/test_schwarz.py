import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmasm.discretization import StructuredMesh, assemble, mini_lattice
from snmasm.eigensolver import gmres_solve
from snmasm.schwarz import (
    LocalSolver, RestrictedSchwarz, SchwarzError, assign_shared_vertices, build_overlap,
    hierarchical_partition, make_ras, nonoverlap_sets, rcb_partition,
)
from snmasm.sparse import CsrMatrix


def tridiag(n, lo=-1.0, d=2.0, hi=-1.0):
    return CsrMatrix.from_dense(np.diag(np.full(n, d)) + np.diag(np.full(n - 1, lo), -1)
                                + np.diag(np.full(n - 1, hi), 1))


@pytest.fixture(scope="module")
def desk():
    return assemble(mini_lattice(n_pins=2, cells_per_pin=4))


# partitioning --------------------------------------------------------------

def test_quadrants():
    part = hierarchical_partition(StructuredMesh(8, 8, 1), 2, 2).element_part.reshape(8, 8)
    # rows are y, columns x: outer cut in x, inner cuts in y
    expected = np.block([[np.zeros((4, 4)), np.full((4, 4), 2)],
                         [np.ones((4, 4)), np.full((4, 4), 3)]])
    np.testing.assert_array_equal(part, expected)
    assert np.all(np.bincount(part.ravel()) == 16)


def test_forty_parts():
    p = hierarchical_partition(StructuredMesh(20, 20, 2), 4, 10)
    assert p.n_parts == 40
    assert set(np.unique(p.element_part).tolist()) == set(range(40))


def test_degenerate_outer_stage_is_flat_rcb():
    mesh = StructuredMesh(6, 5, 3)
    np.testing.assert_array_equal(hierarchical_partition(mesh, 1, 7).element_part,
                                  rcb_partition(mesh.element_centroids(), 7))


@pytest.mark.parametrize("np1,np2", [(1, 2), (2, 2), (2, 4), (4, 4), (1, 16)])
def test_balanced_parts(np1, np2):
    sizes = hierarchical_partition(StructuredMesh(16, 16, 2), np1, np2).part_sizes()
    assert sizes.max() - sizes.min() <= 1


def test_too_many_parts():
    with pytest.raises(ValueError):
        hierarchical_partition(StructuredMesh(2, 2, 1), 2, 4)


def test_vertex_owner_adjacent():
    mesh = StructuredMesh(7, 5, 2)
    p = hierarchical_partition(mesh, 2, 3)
    adj = mesh.vertex_elements()
    for v, els in enumerate(adj):
        assert p.vertex_owner[v] in set(p.element_part[els].tolist())


def test_interior_and_majority_owner():
    mesh = StructuredMesh(2, 2, 1)
    # three elements in part 1, one in part 0
    owner = assign_shared_vertices(mesh, np.array([0, 1, 1, 1]), 2)
    assert owner[0] == 0           # corner touching only element 0
    assert owner[4] == 1           # centre vertex: 3 elements of part 1 vs 1
    assert owner[8] == 1           # interior of part 1


def test_straight_interface_balance():
    mesh = StructuredMesh(8, 8, 1)
    part = (mesh.element_ijk()[:, 0] >= 4).astype(np.int64)
    owner = assign_shared_vertices(mesh, part, 2)
    iface = np.flatnonzero(np.isclose(mesh.vertex_coords()[:, 0], 4.0))
    counts = np.bincount(owner[iface], minlength=2)
    assert abs(counts[0] - counts[1]) <= 1


# overlap ----------------------------------------------------------------------

def test_overlap_zero_is_identity():
    sets = [np.array([0, 1, 2]), np.array([3, 4, 5])]
    out = build_overlap(tridiag(6), sets, 0)
    for a, b in zip(out, sets):
        np.testing.assert_array_equal(a, b)


def test_overlap_tridiagonal_one_layer():
    out = build_overlap(tridiag(8), [np.array([3, 4])], 1)
    np.testing.assert_array_equal(out[0], [2, 3, 4, 5])


def test_overlap_saturates():
    out = build_overlap(tridiag(8), [np.array([0])], 20)
    np.testing.assert_array_equal(out[0], np.arange(8))


def test_overlap_negative():
    with pytest.raises(ValueError):
        build_overlap(tridiag(3), [np.array([0])], -1)


# RAS ---------------------------------------------------------------------------

def test_single_subdomain_lu_is_exact(desk):
    part = hierarchical_partition(desk.spec.mesh, 1, 1)
    ras = make_ras(desk.P, desk.layout, part, local_solver="lu")
    r = np.random.default_rng(0).random(desk.layout.size)
    e = ras.apply(r)
    assert np.linalg.norm(r - desk.P @ e) <= 1e-12 * np.linalg.norm(r)


def test_diagonal_matrix_lu_is_exact():
    d = np.arange(1.0, 13.0)
    P = CsrMatrix.from_dense(np.diag(d))
    ras = RestrictedSchwarz(P, [np.arange(0, 5), np.arange(5, 9), np.arange(9, 12)],
                            overlap=1, local_solver="lu")
    r = np.random.default_rng(1).random(12)
    np.testing.assert_allclose(ras.apply(r), r / d, rtol=1e-15)


def test_ras_matches_dense_formula():
    n = 8
    A = np.diag(np.full(n, 3.0)) + np.diag(np.full(n - 1, -1.0), -1) \
        + np.diag(np.full(n - 1, -0.5), 1)
    P = CsrMatrix.from_dense(A)
    owned = [np.arange(0, 4), np.arange(4, 8)]
    grown = [np.arange(0, 5), np.arange(3, 8)]
    M = np.zeros((n, n))
    for own, ov in zip(owned, grown):
        R = np.eye(n)[ov]
        R0 = np.eye(n)[ov] * np.isin(ov, own)[:, None]
        M += R0.T @ np.linalg.inv(R @ A @ R.T) @ R
    r = np.random.default_rng(2).random(n)
    ras = RestrictedSchwarz(P, owned, overlap=1, local_solver="lu")
    np.testing.assert_allclose(ras.apply(r), M @ r, rtol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["sor", "lu"]), st.integers(0, 2))
def test_ras_linear(seed, kind, overlap):
    n = 30
    rng = np.random.default_rng(seed)
    A = np.diag(rng.uniform(4, 5, n)) + np.diag(rng.uniform(-1, 0, n - 1), -1) \
        + np.diag(rng.uniform(-1, 0, n - 1), 1)
    ras = RestrictedSchwarz(CsrMatrix.from_dense(A), [np.arange(0, 11), np.arange(11, 30)],
                            overlap=overlap, local_solver=kind)
    x, y = rng.standard_normal((2, n))
    a, b = rng.standard_normal(2)
    lhs = ras.apply(a * x + b * y)
    rhs = a * ras.apply(x) + b * ras.apply(y)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(np.linalg.norm(rhs), 1e-300)


def test_sor_matches_hand_sweeps():
    rng = np.random.default_rng(3)
    n = 9
    A = np.diag(rng.uniform(3, 4, n)) + rng.uniform(-0.3, 0.3, (n, n)) * (rng.random((n, n)) < .4)
    b = rng.standard_normal(n)
    for omega, sweeps in [(1.0, 2), (1.3, 3)]:
        x = np.zeros(n)
        for _ in range(sweeps):
            for i in range(n):
                sigma = A[i] @ x - A[i, i] * x[i]
                x[i] = (1 - omega) * x[i] + omega * (b[i] - sigma) / A[i, i]
        solver = LocalSolver(CsrMatrix.from_dense(A), "sor", sweeps, omega)
        np.testing.assert_allclose(solver.solve(b), x, rtol=1e-12)


def test_singular_local_matrix_names_subdomain():
    A = np.eye(4)
    A[2, 2] = 0.0
    A[2, 3] = 1.0
    ras = RestrictedSchwarz(CsrMatrix.from_dense(A), [np.array([0, 1]), np.array([2, 3])],
                            local_solver="lu")
    with pytest.raises(SchwarzError, match="subdomain 1"):
        ras.setup()


def test_owned_sets_must_cover():
    ras = RestrictedSchwarz(tridiag(4), [np.array([0, 1]), np.array([1, 2])])
    with pytest.raises(SchwarzError):
        ras.setup()


def test_nonoverlap_sets_replicate(desk):
    part = hierarchical_partition(desk.spec.mesh, 2, 2)
    sets = nonoverlap_sets(part.vertex_owner, desk.layout)
    allidx = np.sort(np.concatenate(sets))
    np.testing.assert_array_equal(allidx, np.arange(desk.layout.size))
    n = desk.layout.n_space
    for s in sets:
        spatial = s[s < n]
        assert s.size == spatial.size * desk.layout.n_blocks


def test_overlap_iterations_non_increasing(desk):
    part = hierarchical_partition(desk.spec.mesh, 2, 2)
    b = np.random.default_rng(4).random(desk.layout.size)
    its = []
    for delta in range(3):
        ras = make_ras(desk.P, desk.layout, part, overlap=delta, local_solver="lu")
        x, k = gmres_solve(desk.P, b, precond=ras, rtol=1e-8)
        assert np.linalg.norm(b - desk.P @ x) <= 1e-8 * np.linalg.norm(b)
        its.append(k)
    assert its[0] >= its[1] >= its[2]


def test_threaded_apply_identical(desk):
    part = hierarchical_partition(desk.spec.mesh, 2, 2)
    r = np.random.default_rng(5).random(desk.layout.size)
    e1 = make_ras(desk.P, desk.layout, part, overlap=1).apply(r)
    e4 = make_ras(desk.P, desk.layout, part, overlap=1, threads=4).apply(r)
    np.testing.assert_array_equal(e1, e4)
