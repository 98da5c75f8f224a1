"""Compressed sparse row storage and the kernels the solvers are built from.

Every operator in the package (the preconditioning matrix, its diagonal
blocks, interpolations and Galerkin coarse operators) is held as a
:class:`CsrMatrix`.  The kernels here are written directly against the
CSR arrays with vectorized numpy; scipy is only used as a fast matvec
backend (``A @ x``) and for sparse LU factorizations elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

#: Entries whose magnitude falls below this are never stored.
DROP_TOL = 1e-300


class SparseStructureError(ValueError):
    """Raised when CSR arrays violate the structural invariants."""


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Immutable CSR matrix with sorted, duplicate-free column indices.

    Parameters
    ----------
    n_rows, n_cols : int
        Matrix shape.
    row_ptr : ndarray of int64, shape (n_rows + 1,)
        Row offsets into ``col_idx`` and ``values``.
    col_idx : ndarray of int64
        Column index of each stored entry, strictly increasing per row.
    values : ndarray of float64
        Stored entries.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("row_ptr", "col_idx", "values"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    # construction --------------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, drop_tol=DROP_TOL):
        """Build from triplets, summing duplicates and dropping tiny entries."""
        n_rows, n_cols = int(shape[0]), int(shape[1])
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise IndexError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise IndexError("column index out of range")
        key = rows * n_cols + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        vals = vals[order]
        if key.size:
            starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            summed = np.add.reduceat(vals, starts)
            ukey = key[starts]
        else:
            summed = vals
            ukey = key
        keep = np.abs(summed) >= drop_tol
        ukey = ukey[keep]
        summed = summed[keep]
        urows = ukey // n_cols if n_cols else ukey
        ucols = ukey - urows * n_cols
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(urows, minlength=n_rows), out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, ucols.astype(np.int64), summed.copy())

    @classmethod
    def from_dense(cls, a):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def from_scipy(cls, a):
        a = sp.coo_array(a)
        return cls.from_coo(a.row, a.col, a.data, a.shape)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def zeros(cls, n_rows, n_cols):
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0))

    # views / conversions -------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    @property
    def row_ids(self):
        """Row index of every stored entry (cached)."""
        if "row_ids" not in self._cache:
            self._cache["row_ids"] = np.repeat(
                np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))
        return self._cache["row_ids"]

    def to_scipy(self):
        """Return a cached :class:`scipy.sparse.csr_array` sharing the data."""
        if "scipy" not in self._cache:
            self._cache["scipy"] = sp.csr_array(
                (self.values, self.col_idx, self.row_ptr), shape=self.shape)
        return self._cache["scipy"]

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids, self.col_idx] = self.values
        return out

    def diagonal(self):
        out = np.zeros(min(self.shape))
        mask = self.row_ids == self.col_idx
        out[self.col_idx[mask]] = self.values[mask]
        return out

    def transpose(self):
        return CsrMatrix.from_coo(self.col_idx, self.row_ids, self.values,
                                  (self.n_cols, self.n_rows), drop_tol=0.0)

    @property
    def T(self):
        return self.transpose()

    def scaled(self, alpha):
        return CsrMatrix(self.n_rows, self.n_cols, self.row_ptr.copy(),
                         self.col_idx.copy(), alpha * self.values)

    def same_pattern(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx))

    def __matmul__(self, x):
        if isinstance(x, CsrMatrix):
            return spgemm(self, x)
        x = np.asarray(x)
        if x.shape[0] != self.n_cols:
            raise ValueError(f"dimension mismatch: {self.shape} @ {x.shape}")
        return self.to_scipy() @ x

    def validate(self):
        """Check the CSR invariants, raising :class:`SparseStructureError`."""
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.n_rows + 1,):
            raise SparseStructureError("row_ptr has wrong length")
        if rp[0] != 0 or rp[-1] != ci.size or ci.size != self.values.size:
            raise SparseStructureError("row_ptr end points inconsistent")
        if np.any(np.diff(rp) < 0):
            raise SparseStructureError("row_ptr is decreasing")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise SparseStructureError("column index out of range")
            step = np.diff(ci)
            same_row = self.row_ids[1:] == self.row_ids[:-1]
            if np.any(step[same_row] <= 0):
                raise SparseStructureError("columns not strictly increasing in a row")
        return True


@dataclass(frozen=True)
class BlockLayout:
    """Field-major ordering: group outermost, then direction, then space.

    Block ``j = g * n_directions + d`` owns the contiguous index range
    ``[j * n_space, (j + 1) * n_space)``.
    """

    n_groups: int
    n_directions: int
    n_space: int

    def __post_init__(self):
        if min(self.n_groups, self.n_directions, self.n_space) < 1:
            raise ValueError("layout dimensions must be positive")

    @property
    def n_blocks(self):
        return self.n_groups * self.n_directions

    @property
    def size(self):
        return self.n_blocks * self.n_space

    def block_index(self, g, d):
        if not (0 <= g < self.n_groups and 0 <= d < self.n_directions):
            raise IndexError(f"(g, d) = ({g}, {d}) out of range")
        return g * self.n_directions + d

    def block_range(self, j):
        if not 0 <= j < self.n_blocks:
            raise IndexError(f"block {j} out of range [0, {self.n_blocks})")
        return j * self.n_space, (j + 1) * self.n_space

    def block_indices(self, j):
        lo, hi = self.block_range(j)
        return np.arange(lo, hi, dtype=np.int64)

    def replicate(self, space_indices):
        """Global indices of ``space_indices`` in every block, sorted."""
        s = np.asarray(space_indices, dtype=np.int64)
        offs = np.arange(self.n_blocks, dtype=np.int64)[:, None] * self.n_space
        return (offs + s[None, :]).ravel()

    def with_space(self, n_space):
        return BlockLayout(self.n_groups, self.n_directions, n_space)


def as_index_set(indices, dim=None):
    """Return ``indices`` as a sorted, unique int64 array, checking bounds."""
    s = np.unique(np.asarray(indices, dtype=np.int64))
    if s.size and s[0] < 0:
        raise IndexError("negative index in index set")
    if dim is not None and s.size and s[-1] >= dim:
        raise IndexError(f"index {s[-1]} out of range for dimension {dim}")
    return s


# kernels -----------------------------------------------------------------

def spmv(A, x):
    """Sparse matrix-vector product ``A @ x`` computed from the CSR arrays."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.n_cols:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has {x.shape}")
    return np.bincount(A.row_ids, weights=A.values * x[A.col_idx],
                       minlength=A.n_rows)


def restrict(s, v):
    """Gather ``v[s]``."""
    s = np.asarray(s, dtype=np.int64)
    v = np.asarray(v)
    if s.size and (s.max() >= v.shape[0] or s.min() < 0):
        raise IndexError("index set exceeds vector length")
    return v[s]


def prolong_add(s, sub, out):
    """Scatter-add ``out[s] += sub`` in place and return ``out``."""
    s = np.asarray(s, dtype=np.int64)
    sub = np.asarray(sub)
    if s.shape[0] != sub.shape[0]:
        raise ValueError("index set and subvector lengths differ")
    if s.size and (s.max() >= out.shape[0] or s.min() < 0):
        raise IndexError("index set exceeds vector length")
    np.add.at(out, s, sub)
    return out


def _gather_rows(A, rows):
    """Positions (into col_idx/values) of all entries in ``rows``, plus owner."""
    starts = A.row_ptr[rows]
    counts = A.row_ptr[rows + 1] - starts
    total = int(counts.sum())
    owner = np.repeat(np.arange(rows.size, dtype=np.int64), counts)
    first = np.repeat(np.cumsum(counts) - counts, counts)
    pos = np.repeat(starts, counts) + (np.arange(total, dtype=np.int64) - first)
    return pos, owner


def extract_submatrix(P, s):
    """Return ``P[s][:, s]`` for a sorted unique index set ``s``."""
    if P.n_rows != P.n_cols:
        raise ValueError("extract_submatrix needs a square matrix")
    s = as_index_set(s, P.n_rows)
    local = np.full(P.n_cols, -1, dtype=np.int64)
    local[s] = np.arange(s.size, dtype=np.int64)
    pos, owner = _gather_rows(P, s)
    new_cols = local[P.col_idx[pos]]
    keep = new_cols >= 0
    owner = owner[keep]
    row_ptr = np.zeros(s.size + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=s.size), out=row_ptr[1:])
    return CsrMatrix(s.size, s.size, row_ptr, new_cols[keep], P.values[pos][keep])


def check_block_diagonal(P, layout):
    """Raise ``ValueError`` if ``P`` couples different blocks of ``layout``."""
    if P.shape != (layout.size, layout.size):
        raise ValueError(f"matrix {P.shape} does not match layout size {layout.size}")
    rb = P.row_ids // layout.n_space
    cb = P.col_idx // layout.n_space
    bad = np.flatnonzero(rb != cb)
    if bad.size:
        i = bad[0]
        raise ValueError(
            f"entry ({P.row_ids[i]}, {P.col_idx[i]}) lies outside its diagonal "
            f"block: block structure violated")


def block_view(P, layout, j):
    """Diagonal block ``j`` of a block-diagonal ``P``."""
    lo, hi = layout.block_range(j)
    check_block_diagonal(P, layout)
    a, b = P.row_ptr[lo], P.row_ptr[hi]
    return CsrMatrix(layout.n_space, layout.n_space, P.row_ptr[lo:hi + 1] - a,
                     P.col_idx[a:b] - lo, P.values[a:b].copy())


def block_diag(blocks):
    """Assemble a block-diagonal CSR matrix from square CSR blocks."""
    row_ptrs, cols, vals = [np.zeros(1, dtype=np.int64)], [], []
    r_off = c_off = nnz = 0
    for B in blocks:
        row_ptrs.append(B.row_ptr[1:] + nnz)
        cols.append(B.col_idx + c_off)
        vals.append(B.values)
        r_off += B.n_rows
        c_off += B.n_cols
        nnz += B.nnz
    return CsrMatrix(r_off, c_off, np.concatenate(row_ptrs),
                     np.concatenate(cols), np.concatenate(vals))


def spgemm(A, B):
    """Sparse product ``A @ B``: expand all partial products, then merge columns.

    Entries that cancel to zero are kept, so the result carries the full
    structural pattern of the product.
    """
    if A.n_cols != B.n_rows:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    b_counts = np.diff(B.row_ptr)
    counts = b_counts[A.col_idx]
    total = int(counts.sum())
    first = np.repeat(np.cumsum(counts) - counts, counts)
    pos = (np.repeat(B.row_ptr[A.col_idx], counts)
           + np.arange(total, dtype=np.int64) - first)
    rows = np.repeat(A.row_ids, counts)
    vals = np.repeat(A.values, counts) * B.values[pos]
    return CsrMatrix.from_coo(rows, B.col_idx[pos], vals, (A.n_rows, B.n_cols), drop_tol=0.0)


def triple_product(I, P):
    """Galerkin product ``I^T P I`` formed as ``I^T (P I)``."""
    if not (I.n_rows == P.n_rows == P.n_cols):
        raise ValueError(f"dimension mismatch: I {I.shape}, P {P.shape}")
    return spgemm(I.transpose(), spgemm(P, I))


def write_matrix_market(A, path):
    """Dump ``A`` as a MatrixMarket coordinate file (1-based indices)."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for i, j, v in zip(A.row_ids + 1, A.col_idx + 1, A.values):
            fh.write(f"{i} {j} {float(v)!r}\n")
    return path
