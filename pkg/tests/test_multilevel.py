import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmasm.discretization import assemble, infinite_medium, mini_lattice
from snmasm.eigensolver import SolverOptions, newton_solve
from snmasm.multilevel import (
    Aggregation, CoarsenOptions, MultilevelHierarchy, aggregate, build_sub_interpolation,
    extend_interpolation, setup_masm, setup_masm_sub, v_cycle,
)
from snmasm.schwarz import hierarchical_partition
from snmasm.sparse import BlockLayout, CsrMatrix, block_diag, block_view, check_block_diagonal


def laplacian_1d(n):
    return CsrMatrix.from_dense(2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))


def laplacian_2d(m):
    T = 2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    return CsrMatrix.from_dense(np.kron(T, np.eye(m)) + np.kron(np.eye(m), T))


@pytest.fixture(scope="module")
def desk():
    """G=2, Nd=8 transport operator on 9^3 vertices."""
    spec = infinite_medium(sigma_t=[1.0, 1.5], sigma_s=[[0.6, 0.0], [0.3, 1.2]],
                           nu_sigma_f=[0.1, 0.5], chi=[1.0, 0.0], mesh=8)
    system = assemble(spec)
    part = hierarchical_partition(spec.mesh, 2, 2)
    return system, part


# aggregation ---------------------------------------------------------------

def test_diagonal_gives_singletons():
    agg = aggregate(CsrMatrix.from_dense(np.diag(np.arange(1.0, 6.0))), 0.5)
    assert agg.n_agg == 5
    np.testing.assert_array_equal(agg.membership, np.arange(5))


def test_laplacian_pairs():
    agg = aggregate(laplacian_1d(6), 0.25)
    np.testing.assert_array_equal(agg.membership, [0, 0, 1, 1, 2, 2])


def test_theta_zero_dense_single_aggregate():
    A = np.random.default_rng(0).uniform(0.1, 1.0, (7, 7)) + 7 * np.eye(7)
    agg = aggregate(CsrMatrix.from_dense(A), 0.0)
    assert agg.n_agg == 1


def test_leftover_joins_strongest_neighbour():
    # node 2's only strong neighbours (1 and 3) are taken by the time it is visited
    A = np.array([[4, -2, 0, 0, 0],
                  [-2, 4, -1, 0, 0],
                  [0, -1, 4, -3, 0],
                  [0, 0, -3, 4, -2],
                  [0, 0, 0, -2, 4]], dtype=float)
    A[2, 1] = A[1, 2] = -1.0
    agg = aggregate(CsrMatrix.from_dense(A), 0.2)
    # seeds: 0 -> {0,1}; 2 -> {2,3}; 4 -> 3 is taken, joins {2,3}
    np.testing.assert_array_equal(agg.membership, [0, 0, 1, 1, 1])


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate(CsrMatrix.zeros(0, 0))


def test_aggregation_covers():
    agg = aggregate(laplacian_2d(7), 0.08)
    assert set(agg.membership.tolist()) == set(range(agg.n_agg))


# interpolation ---------------------------------------------------------

def test_singleton_interpolation_is_identity():
    I = build_sub_interpolation(Aggregation(4, 4, np.arange(4)))
    np.testing.assert_array_equal(I.to_dense(), np.eye(4))


def test_interpolation_column_sums():
    I = build_sub_interpolation(Aggregation(3, 2, np.array([0, 0, 1])))
    assert I.shape == (3, 2)
    np.testing.assert_array_equal(I.to_dense().sum(axis=0), [2, 1])
    assert np.all(np.diff(I.row_ptr) == 1)


def test_laplacian_galerkin_dense_oracle():
    from snmasm.sparse import triple_product
    M = laplacian_1d(6)
    I = build_sub_interpolation(aggregate(M, 0.25))
    Id = I.to_dense()
    expected = Id.T @ M.to_dense() @ Id
    np.testing.assert_allclose(triple_product(I, M).to_dense(), expected, rtol=1e-14)
    np.testing.assert_allclose(expected, [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])


def test_extend_single_block():
    I = build_sub_interpolation(Aggregation(5, 2, np.array([0, 0, 1, 1, 1])))
    E = extend_interpolation(I, BlockLayout(1, 1, 5), BlockLayout(1, 1, 2))
    np.testing.assert_array_equal(E.to_dense(), I.to_dense())


def test_extend_two_blocks():
    I = build_sub_interpolation(Aggregation(2, 1, np.array([0, 0])))
    E = extend_interpolation(I, BlockLayout(1, 2, 2), BlockLayout(1, 2, 1))
    np.testing.assert_array_equal(E.to_dense(), [[1, 0], [1, 0], [0, 1], [0, 1]])


def test_extend_layout_mismatch():
    I = build_sub_interpolation(Aggregation(2, 1, np.array([0, 0])))
    with pytest.raises(ValueError):
        extend_interpolation(I, BlockLayout(1, 2, 2), BlockLayout(1, 3, 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_extend_acts_blockwise(n_fine, n_blocks, seed):
    rng = np.random.default_rng(seed)
    n_agg = int(rng.integers(1, n_fine + 1))
    member = np.concatenate([np.arange(n_agg), rng.integers(0, n_agg, n_fine - n_agg)])
    I = build_sub_interpolation(Aggregation(n_fine, n_agg, rng.permutation(member)))
    E = extend_interpolation(I, BlockLayout(1, n_blocks, n_fine), BlockLayout(1, n_blocks, n_agg))
    x = rng.standard_normal((n_blocks, n_agg))
    expected = np.concatenate([I @ xb for xb in x])
    np.testing.assert_allclose(E @ x.ravel(), expected, rtol=1e-15)


# hierarchies ---------------------------------------------------------------

def _block_diag_from(blocks):
    return block_diag([CsrMatrix.from_dense(b) if isinstance(b, np.ndarray) else b
                       for b in blocks])


def test_masm_sub_identical_blocks():
    A = laplacian_2d(12)
    nb = 4
    P = _block_diag_from([A] * nb)
    layout = BlockLayout(1, nb, A.n_rows)
    owner = np.zeros(A.n_rows, dtype=np.int64)
    h = setup_masm_sub(P, layout, owner, CoarsenOptions(coarsest_size=50))
    assert h.n_levels >= 2
    from snmasm.sparse import triple_product
    expected = triple_product(h.levels[0].I_sub, A).to_dense()
    P2 = h.levels[1].P
    for j in range(nb):
        got = block_view(P2, h.levels[1].layout, j).to_dense()
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-14)


def test_threshold_above_size_is_direct():
    A = laplacian_2d(5)
    h = setup_masm_sub(A, BlockLayout(1, 1, 25), np.zeros(25, dtype=np.int64),
                       CoarsenOptions(coarsest_size=25))
    assert h.n_levels == 1
    r = np.random.default_rng(0).random(25)
    e = h.apply(r)
    assert np.linalg.norm(r - A @ e) <= 1e-10 * np.linalg.norm(r)


def test_desk_structure(desk):
    system, part = desk
    assert system.layout.n_space == 9 ** 3
    h = setup_masm_sub(system.P, system.layout, part.vertex_owner)
    assert h.n_levels >= 2
    for lf, lc in zip(h.levels, h.levels[1:]):
        I = lf.I
        assert np.all(np.diff(I.row_ptr) == 1)
        nf, nc = lf.layout.n_space, lc.layout.n_space
        assert np.array_equal(I.row_ids // nf, I.col_idx // nc)
        # every block carries the same sub-interpolation
        sub_cols = (I.col_idx % nc).reshape(lf.layout.n_blocks, nf)
        assert np.all(sub_cols == lf.I_sub.col_idx[None, :])
        check_block_diagonal(lc.P, lc.layout)
        blocks = [block_view(lc.P, lc.layout, j) for j in range(lc.layout.n_blocks)]
        assert len(blocks) == 16
        assert all(b.same_pattern(blocks[0]) for b in blocks)


def test_desk_galerkin_dense_oracle(desk):
    system, part = desk
    h = setup_masm_sub(system.P, system.layout, part.vertex_owner)
    for lf, lc in zip(h.levels, h.levels[1:]):
        I = lf.I.to_scipy()
        expected = (I.T @ lf.P.to_scipy() @ I).toarray()
        got = lc.P.to_dense()
        assert np.abs(got - expected).max() <= 1e-12 * np.abs(expected).max()


def test_masm_equals_masm_sub_single_block():
    A = laplacian_2d(15)
    A = CsrMatrix.from_dense(A.to_dense() + np.diag(np.linspace(0, 1, 225)))
    layout = BlockLayout(1, 1, 225)
    owner = np.repeat(np.arange(3), 75)
    opts = CoarsenOptions(coarsest_size=20)
    h1 = setup_masm(A, layout, owner, opts)
    h2 = setup_masm_sub(A, layout, owner, opts)
    assert h1.n_levels == h2.n_levels >= 3
    for a, b in zip(h1.levels, h2.levels):
        np.testing.assert_array_equal(a.P.row_ptr, b.P.row_ptr)
        np.testing.assert_array_equal(a.P.col_idx, b.P.col_idx)
        np.testing.assert_allclose(a.P.values, b.P.values, rtol=1e-14)
        np.testing.assert_array_equal(a.owner, b.owner)
        if a.I is not None:
            np.testing.assert_array_equal(a.I.col_idx, b.I.col_idx)
    assert h1.coarsened_rows == h2.coarsened_rows
    r = np.random.default_rng(1).random(225)
    np.testing.assert_allclose(h1.apply(r), h2.apply(r), rtol=1e-13)


def test_coarsened_rows_ratio(desk):
    system, part = desk
    h_sub = setup_masm_sub(system.P, system.layout, part.vertex_owner)
    h_full = setup_masm(system.P, system.layout, part.vertex_owner)
    assert h_full.coarsened_rows == 16 * h_sub.coarsened_rows
    assert h_sub.coarsened_rows == system.layout.n_space


def test_masm_aggregates_stay_in_blocks(desk):
    system, _ = desk
    agg = aggregate(system.P, 0.08)
    block = np.arange(system.layout.size) // system.layout.n_space
    for a in range(0, agg.n_agg, 97):
        assert np.unique(block[agg.members(a)]).size == 1


def test_coarsen_block_out_of_range(desk):
    system, part = desk
    with pytest.raises(ValueError):
        setup_masm_sub(system.P, system.layout, part.vertex_owner, CoarsenOptions(coarsen_block=16))


# V-cycle ---------------------------------------------------------------------

def test_exact_smoother_gives_exact_cycle():
    A = laplacian_2d(12)
    layout = BlockLayout(1, 1, 144)
    for levels in (2, 3):
        h = setup_masm_sub(A, layout, np.zeros(144, dtype=np.int64),
                           CoarsenOptions(coarsest_size=10, max_levels=levels, local_solver="lu"))
        assert h.n_levels == levels
        r = np.random.default_rng(2).random(144)
        e = h.apply(r)
        assert np.linalg.norm(r - A @ e) <= 1e-10 * np.linalg.norm(r)


def test_two_level_error_contraction():
    A = laplacian_2d(10)
    n = 100
    owner = (np.arange(n) % 10 >= 5).astype(np.int64)
    h = setup_masm_sub(A, BlockLayout(1, 1, n), owner,
                       CoarsenOptions(coarsest_size=10, max_levels=2))
    assert h.n_levels == 2
    Ad = A.to_dense()
    M = np.column_stack([v_cycle(h, 0, col) for col in np.eye(n)])
    E = np.eye(n) - M @ Ad
    assert max(abs(np.linalg.eigvals(E))) < 1.0


def test_v_cycle_linear(desk):
    system, part = desk
    h = setup_masm(system.P, system.layout, part.vertex_owner)
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((2, system.layout.size))
    lhs = h.apply(2.0 * x - 0.5 * y)
    rhs = 2.0 * h.apply(x) - 0.5 * h.apply(y)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_v_cycle_level_out_of_range(desk):
    system, part = desk
    h = setup_masm_sub(system.P, system.layout, part.vertex_owner)
    with pytest.raises(IndexError):
        v_cycle(h, h.n_levels, np.zeros(1))


def test_summary_fields(desk):
    system, part = desk
    s = setup_masm_sub(system.P, system.layout, part.vertex_owner).summary()
    assert s["levels"][0] == {"rows": system.layout.size, "nnz": system.P.nnz,
                              "n_blocks": 16, "coarsened_rows": system.layout.n_space}
    assert s["levels"][-1]["coarsened_rows"] == 0


def test_masm_and_masm_sub_agree_on_k():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=4))
    part = hierarchical_partition(system.spec.mesh, 2, 2)
    opts = SolverOptions(newton_rtol=1e-9)
    results = {}
    for mode in ("masm", "masm_sub"):
        pc = MultilevelHierarchy(system.P, system.layout, part.vertex_owner, mode)
        results[mode] = newton_solve(system, pc, opts)
    (s1, r1), (s2, r2) = results["masm"], results["masm_sub"]
    assert abs(s1.k - s2.k) <= 1e-8
    assert abs(r1.iter_newton - r2.iter_newton) <= 1


def test_any_coarsen_block_gives_same_k():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=4))
    part = hierarchical_partition(system.spec.mesh, 1, 2)
    ks = []
    for block in (0, 5, 15):
        pc = MultilevelHierarchy(system.P, system.layout, part.vertex_owner, "masm_sub",
                                 CoarsenOptions(coarsen_block=block))
        ks.append(newton_solve(system, pc, SolverOptions(newton_rtol=1e-9))[0].k)
    assert max(ks) - min(ks) <= 1e-8
