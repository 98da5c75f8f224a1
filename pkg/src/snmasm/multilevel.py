"""Aggregation multilevel hierarchies and the additive Schwarz V-cycle.

Two setups share one apply:

* ``masm`` aggregates the full block-diagonal operator on every level;
* ``masm_sub`` aggregates only one diagonal block (a spatial operator),
  then replicates its interpolation over all ``(group, direction)`` blocks
  before forming the Galerkin coarse operators.

Both carry a restricted Schwarz smoother on each level and an LU solve on
the coarsest one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .schwarz import RestrictedSchwarz, SchwarzError, nonoverlap_sets
from .sparse import BlockLayout, CsrMatrix, block_view, check_block_diagonal, triple_product


@dataclass
class CoarsenOptions:
    theta: float = 0.08
    max_levels: int = 10
    coarsest_size: int = 200
    pre_its: int = 1
    post_its: int = 1
    coarsen_block: int = 0
    overlap: int = 0
    local_solver: str = "sor"
    sor_sweeps: int = 2
    sor_omega: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")
        if self.max_levels < 1 or self.coarsest_size < 1:
            raise ValueError("max_levels and coarsest_size must be >= 1")
        if self.pre_its < 0 or self.post_its < 0:
            raise ValueError("smoothing counts must be >= 0")


@dataclass(frozen=True, eq=False)
class Aggregation:
    n_fine: int
    n_agg: int
    membership: np.ndarray

    def members(self, a):
        return np.flatnonzero(self.membership == a)


# aggregation ---------------------------------------------------------------

def strength_graph(M, theta):
    """Symmetrized strong-connection graph with ``max(|M_ij|, |M_ji|)`` weights."""
    S = M.to_scipy() if isinstance(M, CsrMatrix) else sp.csr_matrix(M)
    C = S.tocoo()
    d = np.abs(S.diagonal())
    a = np.abs(C.data)
    keep = (C.row != C.col) & (a >= theta * np.sqrt(d[C.row] * d[C.col]))
    W = sp.coo_matrix((a[keep], (C.row[keep], C.col[keep])), shape=S.shape).tocsr()
    W = W.maximum(W.T).tocsr()
    W.sort_indices()
    return W


def aggregate(M, theta=0.08):
    """Greedy aggregation on the strength graph of ``M``.

    Nodes are visited in index order.  A free node seeds a new aggregate
    together with all of its free strong neighbours.  A node whose strong
    neighbours are all taken joins the aggregate of the strongest one;
    a node without strong neighbours stays a singleton.
    """
    n = M.shape[0]
    if n == 0:
        raise ValueError("cannot aggregate an empty matrix")
    if M.shape[0] != M.shape[1]:
        raise ValueError("aggregation needs a square matrix")
    W = strength_graph(M, theta)
    ptr, idx, wts = W.indptr, W.indices, W.data
    member = np.full(n, -1, dtype=np.int64)
    n_agg = 0
    for i in range(n):
        if member[i] >= 0:
            continue
        nbrs = idx[ptr[i]:ptr[i + 1]]
        free = nbrs[member[nbrs] < 0]
        if free.size or not nbrs.size:
            member[i] = n_agg
            member[free] = n_agg
            n_agg += 1
        else:
            w = wts[ptr[i]:ptr[i + 1]]
            member[i] = member[nbrs[np.argmax(w)]]
    return Aggregation(n, n_agg, member)


def build_sub_interpolation(agg):
    """Piecewise-constant ``n_fine x n_agg`` interpolation."""
    n = agg.n_fine
    return CsrMatrix(n, agg.n_agg, np.arange(n + 1, dtype=np.int64),
                     agg.membership.astype(np.int64).copy(), np.ones(n))


def extend_interpolation(I_sub, layout_fine, layout_coarse):
    """Replicate ``I_sub`` over every block of the field-major layouts."""
    if layout_fine.n_blocks != layout_coarse.n_blocks:
        raise ValueError("fine and coarse layouts have different block counts")
    if I_sub.shape != (layout_fine.n_space, layout_coarse.n_space):
        raise ValueError(f"interpolation {I_sub.shape} does not match layouts "
                         f"({layout_fine.n_space}, {layout_coarse.n_space})")
    nb = layout_fine.n_blocks
    ptr = (np.arange(nb, dtype=np.int64)[:, None] * I_sub.nnz + I_sub.row_ptr[None, :-1]).ravel()
    ptr = np.append(ptr, nb * I_sub.nnz)
    cols = (np.arange(nb, dtype=np.int64)[:, None] * layout_coarse.n_space
            + I_sub.col_idx[None, :]).ravel()
    vals = np.tile(I_sub.values, nb)
    return CsrMatrix(layout_fine.size, layout_coarse.size, ptr, cols, vals)


# hierarchy ----------------------------------------------------------------

@dataclass(eq=False)
class Level:
    P: CsrMatrix
    owner: np.ndarray            # part id per unknown
    block_of: np.ndarray         # diagonal block id per unknown
    coarsened_rows: int = 0
    layout: BlockLayout | None = None
    I: CsrMatrix | None = None   # interpolation to the next coarser level
    I_sub: CsrMatrix | None = None
    smoother: RestrictedSchwarz | None = None
    lu: object = None

    @property
    def rows(self):
        return self.P.n_rows


@dataclass(eq=False)
class MultilevelHierarchy:
    """Coarse operators, interpolations and smoothers for one V-cycle.

    Built lazily: :meth:`setup` does the coarsening, :meth:`apply` runs a
    V-cycle from the finest level.
    """

    P: CsrMatrix
    layout: BlockLayout
    owner: np.ndarray
    mode: str = "masm_sub"
    opts: CoarsenOptions = field(default_factory=CoarsenOptions)
    levels: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("masm", "masm_sub"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def is_setup(self):
        return bool(self.levels)

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def coarsened_rows(self):
        """Rows handed to the coarsener on the finest level."""
        return self.levels[0].coarsened_rows if self.n_levels > 1 else 0

    def setup(self):
        opts = self.opts
        check_block_diagonal(self.P, self.layout)
        owner = np.asarray(self.owner, dtype=np.int64)
        if owner.shape == (self.layout.n_space,):
            owner = np.tile(owner, self.layout.n_blocks)
        if owner.shape != (self.layout.size,):
            raise ValueError("owner must give a part per vertex or per unknown")
        block_of = np.repeat(np.arange(self.layout.n_blocks), self.layout.n_space)
        levels = [Level(self.P, owner, block_of, layout=self.layout)]
        sub = None
        if self.mode == "masm_sub":
            if not 0 <= opts.coarsen_block < self.layout.n_blocks:
                raise ValueError(f"coarsen_block {opts.coarsen_block} out of range")
            sub = block_view(self.P, self.layout, opts.coarsen_block)
        while len(levels) < opts.max_levels and levels[-1].rows > opts.coarsest_size:
            fine = levels[-1]
            if self.mode == "masm_sub":
                agg = aggregate(sub, opts.theta)
                if agg.n_agg == agg.n_fine:
                    break
                I_sub = build_sub_interpolation(agg)
                coarse_layout = fine.layout.with_space(agg.n_agg)
                I = extend_interpolation(I_sub, fine.layout, coarse_layout)
                fine.coarsened_rows = sub.n_rows
                fine.I_sub = I_sub
                sub = triple_product(I_sub, sub)
            else:
                agg = aggregate(fine.P, opts.theta)
                if agg.n_agg == agg.n_fine:
                    break
                I = build_sub_interpolation(agg)
                coarse_layout = None
                fine.coarsened_rows = fine.rows
            fine.I = I
            Pc = triple_product(I, fine.P)
            levels.append(Level(Pc, _plurality(I, fine.owner), _coarse_blocks(I, fine.block_of),
                                layout=coarse_layout))
        for lvl in levels[:-1]:
            lvl.smoother = RestrictedSchwarz(
                lvl.P, nonoverlap_sets(lvl.owner), opts.overlap, opts.local_solver,
                opts.sor_sweeps, opts.sor_omega, opts.threads).setup()
        try:
            levels[-1].lu = spla.splu(levels[-1].P.to_scipy().tocsc())
        except RuntimeError as exc:
            raise SchwarzError(f"coarsest level ({levels[-1].rows} rows) is singular") from exc
        self.levels = levels
        return self

    def apply(self, r):
        if not self.is_setup:
            self.setup()
        return v_cycle(self, 0, r)

    __call__ = apply

    def summary(self):
        return {
            "mode": self.mode,
            "levels": [{"rows": lvl.rows, "nnz": lvl.P.nnz,
                        "n_blocks": int(np.unique(lvl.block_of).size),
                        "coarsened_rows": lvl.coarsened_rows} for lvl in self.levels],
            "coarsened_rows": self.coarsened_rows,
        }


def _plurality(I, owner):
    """Coarse owner: the part holding most fine members, ties to the lowest."""
    n_parts = int(owner.max()) + 1
    keys = I.col_idx * n_parts + owner[I.row_ids]
    counts = np.bincount(keys, minlength=I.n_cols * n_parts).reshape(I.n_cols, n_parts)
    return np.argmax(counts, axis=1).astype(np.int64)


def _coarse_blocks(I, block_of):
    blocks = np.full(I.n_cols, -1, dtype=np.int64)
    blocks[I.col_idx] = block_of[I.row_ids]
    check = blocks[I.col_idx] != block_of[I.row_ids]
    if np.any(check):
        raise ValueError("an aggregate spans several diagonal blocks")
    return blocks


def setup_masm_sub(P, layout, owner, opts=None):
    return MultilevelHierarchy(P, layout, owner, "masm_sub", opts or CoarsenOptions()).setup()


def setup_masm(P, layout, owner, opts=None):
    return MultilevelHierarchy(P, layout, owner, "masm", opts or CoarsenOptions()).setup()


def v_cycle(h, level, r):
    """One V-cycle from ``level`` down; returns the correction for ``r``."""
    if not 0 <= level < h.n_levels:
        raise IndexError(f"level {level} out of range for {h.n_levels} levels")
    lvl = h.levels[level]
    r = np.asarray(r, dtype=float)
    if r.shape != (lvl.rows,):
        raise ValueError(f"residual length {r.shape} does not match level size {lvl.rows}")
    if level == h.n_levels - 1:
        return lvl.lu.solve(r)
    A = lvl.P.to_scipy()
    e = np.zeros_like(r)
    for _ in range(h.opts.pre_its):
        e = e + lvl.smoother.apply(r - A @ e)
    rc = lvl.I.to_scipy().T @ (r - A @ e)
    e = e + lvl.I.to_scipy() @ v_cycle(h, level + 1, rc)
    for _ in range(h.opts.post_its):
        e = e + lvl.smoother.apply(r - A @ e)
    return e
