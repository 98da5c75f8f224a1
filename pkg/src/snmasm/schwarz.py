"""Domain partitioning and the one-level restricted additive Schwarz method.

Elements are split by two-stage recursive coordinate bisection; vertices on
part interfaces are then handed to a single owner.  A subdomain is the set
of unknowns attached to the vertices one part owns, taken across every
``(group, direction)`` block, optionally grown by layers of the matrix
graph.  The RAS apply solves on the grown sets and keeps only the owned
entries of each local solution.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparse import CsrMatrix, as_index_set, extract_submatrix


class SchwarzError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    element_part: np.ndarray
    np1: int
    np2: int
    vertex_owner: np.ndarray

    @property
    def n_parts(self):
        return self.np1 * self.np2

    def part_sizes(self):
        return np.bincount(self.element_part, minlength=self.n_parts)


# partitioning --------------------------------------------------------------

def _rcb(points, ids, k, out, base):
    if k == 1:
        out[ids] = base
        return
    pts = points[ids]
    axis = int(np.argmax(np.ptp(pts, axis=0)))
    others = [a for a in range(pts.shape[1]) if a != axis]
    # primary key last; ties broken by the other coordinates, then element id
    order = np.lexsort((ids,) + tuple(pts[:, a] for a in reversed(others)) + (pts[:, axis],))
    k1 = k // 2
    n_left = ids.size * k1 // k
    _rcb(points, ids[order[:n_left]], k1, out, base)
    _rcb(points, ids[order[n_left:]], k - k1, out, base + k1)


def rcb_partition(points, k):
    """Recursive coordinate bisection of ``points`` into ``k`` labelled parts."""
    points = np.asarray(points, dtype=float)
    if not 1 <= k <= len(points):
        raise ValueError(f"cannot split {len(points)} points into {k} parts")
    out = np.empty(len(points), dtype=np.int64)
    _rcb(points, np.arange(len(points), dtype=np.int64), k, out, 0)
    return out


def hierarchical_partition(mesh, np1, np2=1):
    """Split the elements into ``np1`` parts, then each of those into ``np2``.

    Part ids are ``outer * np2 + inner``.
    """
    if np1 < 1 or np2 < 1:
        raise ValueError("part counts must be >= 1")
    if np1 * np2 > mesh.n_elements:
        raise ValueError(f"{np1 * np2} parts requested for {mesh.n_elements} elements")
    cent = mesh.element_centroids()
    outer = rcb_partition(cent, np1)
    part = np.empty(mesh.n_elements, dtype=np.int64)
    for o in range(np1):
        ids = np.flatnonzero(outer == o)
        if ids.size < np2:
            raise ValueError(f"outer part {o} has {ids.size} elements, fewer than np2={np2}")
        part[ids] = o * np2 + rcb_partition(cent[ids], np2)
    owner = assign_shared_vertices(mesh, part, np1 * np2)
    return Partition(part, np1, np2, owner)


def assign_shared_vertices(mesh, element_part, n_parts=None):
    """Owner part for every vertex.

    A vertex goes to the part holding most of its adjacent elements.  Ties
    are dealt out in turn, along increasing vertex id, to the tied parts
    (lowest part first), which keeps the interface share balanced.
    """
    element_part = np.asarray(element_part, dtype=np.int64)
    if n_parts is None:
        n_parts = int(element_part.max()) + 1
    conn = mesh.connectivity()
    keys = conn.ravel() * n_parts + np.repeat(element_part, conn.shape[1])
    counts = np.bincount(keys, minlength=mesh.n_vertices * n_parts).reshape(-1, n_parts)
    top = counts.max(axis=1)
    tied = counts == top[:, None]
    owner = np.argmax(tied, axis=1).astype(np.int64)
    n_tied = tied.sum(axis=1)
    turn = {}
    for v in np.flatnonzero(n_tied > 1):
        parts = tuple(np.flatnonzero(tied[v]).tolist())
        t = turn.get(parts, 0)
        owner[v] = parts[t % len(parts)]
        turn[parts] = t + 1
    return owner


# subdomains ----------------------------------------------------------------

def nonoverlap_sets(owner, layout=None):
    """Owned index sets per part; with a layout, replicated over all blocks."""
    owner = np.asarray(owner, dtype=np.int64)
    sets = []
    for p in range(int(owner.max()) + 1):
        s = np.flatnonzero(owner == p)
        if s.size:
            sets.append(layout.replicate(s) if layout is not None else s)
    return sets


def build_overlap(P, sets, layers):
    """Grow each index set by ``layers`` rounds of matrix-graph neighbours."""
    if layers < 0:
        raise ValueError("overlap must be >= 0")
    S = P.to_scipy() if isinstance(P, CsrMatrix) else sp.csr_matrix(P)
    n = S.shape[0]
    out = []
    for s in sets:
        s = as_index_set(s, n)
        for _ in range(layers):
            grown = np.union1d(s, S[s].indices)
            if grown.size == s.size:
                break
            s = grown
        out.append(s)
    return out


class LocalSolver:
    """Approximate inverse of a subdomain matrix: exact LU or SOR sweeps."""

    def __init__(self, A, kind="sor", sweeps=2, omega=1.0, name="subdomain"):
        if kind not in ("sor", "lu"):
            raise ValueError(f"unknown local solver {kind!r}")
        if sweeps < 1 or not 0.0 < omega < 2.0:
            raise ValueError("SOR needs sweeps >= 1 and 0 < omega < 2")
        self.kind, self.sweeps, self.omega = kind, sweeps, omega
        self.A = A.to_scipy() if isinstance(A, CsrMatrix) else sp.csr_matrix(A)
        try:
            if kind == "lu":
                self._lu = spla.splu(self.A.tocsc())
            else:
                d = self.A.diagonal()
                if np.any(d == 0):
                    raise RuntimeError("zero on the diagonal")
                T = sp.tril(self.A, k=-1) + sp.diags(d / omega)
                # lower triangular: natural ordering and no pivoting mean no fill
                self._lu = spla.splu(T.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                                     options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise SchwarzError(f"{name}: factorization failed ({exc})") from exc

    def solve(self, b):
        if self.kind == "lu":
            return self._lu.solve(b)
        x = self._lu.solve(b)
        for _ in range(self.sweeps - 1):
            x = x + self._lu.solve(b - self.A @ x)
        return x


@dataclass(eq=False)
class Subdomain:
    owned: np.ndarray
    overlap: np.ndarray
    keep: np.ndarray  # positions of ``owned`` inside ``overlap``
    solver: LocalSolver


class RestrictedSchwarz:
    """One-level RAS preconditioner ``sum_i R0_i^T inv(P_i) R_i``.

    Parameters
    ----------
    P : CsrMatrix
    owned_sets : list of index arrays
        Disjoint cover of the unknowns.
    overlap : int
        Layers of matrix-graph growth.
    local_solver : {"sor", "lu"}
    sor_sweeps, sor_omega : SOR settings, ignored for LU.
    threads : int
        Worker count for the independent subdomain solves.
    """

    def __init__(self, P, owned_sets, overlap=0, local_solver="sor", sor_sweeps=2,
                 sor_omega=1.0, threads=1):
        self.P = P
        self.owned_sets = [as_index_set(s, P.n_rows) for s in owned_sets]
        self.overlap = overlap
        self.local_solver = local_solver
        self.sor_sweeps = sor_sweeps
        self.sor_omega = sor_omega
        self.threads = threads
        self.subdomains = None

    @property
    def is_setup(self):
        return self.subdomains is not None

    def setup(self):
        check_cover(self.owned_sets, self.P.n_rows)
        grown = build_overlap(self.P, self.owned_sets, self.overlap)
        self.subdomains = []
        for i, (own, ov) in enumerate(zip(self.owned_sets, grown)):
            solver = LocalSolver(extract_submatrix(self.P, ov), self.local_solver,
                                 self.sor_sweeps, self.sor_omega, name=f"subdomain {i}")
            self.subdomains.append(Subdomain(own, ov, np.searchsorted(ov, own), solver))
        return self

    def apply(self, r):
        if not self.is_setup:
            self.setup()
        return ras_apply(self.P, self.subdomains, r, self.threads)

    __call__ = apply


def check_cover(sets, n):
    counts = np.zeros(n, dtype=np.int64)
    for s in sets:
        counts[s] += 1
    if np.any(counts != 1):
        bad = int(np.flatnonzero(counts != 1)[0])
        raise SchwarzError(f"owned sets must cover every unknown exactly once (index {bad})")


def ras_apply(P, subdomains, r, threads=1):
    """``e = sum_i R0_i^T inv(P_i) R_i r`` over prepared subdomains."""
    r = np.asarray(r, dtype=float)
    if r.shape != (P.n_rows,):
        raise ValueError(f"residual length {r.shape} does not match matrix {P.shape}")
    e = np.zeros_like(r)

    def work(sd):
        e[sd.owned] = sd.solver.solve(r[sd.overlap])[sd.keep]

    if threads > 1 and len(subdomains) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, subdomains))
    else:
        for sd in subdomains:
            work(sd)
    return e


def make_ras(P, layout, partition, overlap=0, local_solver="sor", sor_sweeps=2,
             sor_omega=1.0, threads=1):
    """RAS on the transport unknowns from a vertex partition."""
    return RestrictedSchwarz(P, nonoverlap_sets(partition.vertex_owner, layout), overlap,
                             local_solver, sor_sweeps, sor_omega, threads)
