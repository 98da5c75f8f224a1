"""Restarted flexible GMRES with right preconditioning."""

from __future__ import annotations

import numpy as np


def dot(a, b):
    # pairwise summation in a fixed order, independent of BLAS threading
    return float(np.sum(a * b))


def norm(a):
    return float(np.sqrt(dot(a, a)))


class GmresStagnation(RuntimeError):
    """Raised when GMRES exhausts its restart budget.

    ``x`` is the iterate with the smallest true residual seen, ``residual``
    its residual norm and ``iterations`` the inner iteration count spent.
    """

    def __init__(self, message, x, residual, iterations):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iterations = iterations


def _as_callable(op):
    if op is None:
        return None
    if callable(op):
        return op
    if hasattr(op, "apply"):
        return op.apply
    return lambda v: op @ v


def gmres_solve(op, b, precond=None, rtol=1e-1, restart=30, max_restarts=20, x0=None):
    """Solve ``op(x) = b`` with right-preconditioned FGMRES.

    The preconditioner may change from one application to the next; the
    preconditioned basis vectors are stored so the update stays exact.
    Convergence is judged on the recomputed true residual at the end of
    each cycle, so on return ``|b - op(x)| <= rtol |b|`` holds.

    Parameters
    ----------
    op : callable, matrix or object with ``apply``
    b : ndarray
    precond : callable, matrix, object with ``apply``, or None
    rtol : float
    restart : int
        Krylov dimension per cycle.
    max_restarts : int
        Number of cycles before :class:`GmresStagnation` is raised.
    x0 : ndarray, optional

    Returns
    -------
    x : ndarray
    iterations : int
        Total inner iterations across cycles.
    """
    if restart < 1:
        raise ValueError("restart must be >= 1")
    A = _as_callable(op)
    M = _as_callable(precond) or (lambda v: v)
    b = np.asarray(b, dtype=float)
    bnorm = norm(b)
    if bnorm == 0.0:
        raise ValueError("right-hand side is zero")
    target = rtol * bnorm
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x) if x0 is not None else b.copy()
    beta = norm(r)
    best_x, best_res = x.copy(), beta
    total = 0
    if beta <= target:
        return x, 0

    for _cycle in range(max_restarts):
        V = np.zeros((restart + 1, b.size))
        Z = np.zeros((restart, b.size))
        H = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(restart):
            Z[j] = M(V[j])
            w = A(Z[j])
            for i in range(j + 1):
                H[i, j] = dot(w, V[i])
                w = w - H[i, j] * V[i]
            H[j + 1, j] = norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            if den == 0.0:
                break
            cs[j], sn[j] = H[j, j] / den, H[j + 1, j] / den
            hj1 = H[j + 1, j]
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            total += 1
            if abs(g[j + 1]) <= target or hj1 <= 1e-14 * den:
                break
            V[j + 1] = w / hj1
        if j_used == 0:
            break
        y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used])
        x = x + y @ Z[:j_used]
        r = b - A(x)
        beta = norm(r)
        if beta < best_res:
            best_x, best_res = x.copy(), beta
        if beta <= target:
            return x, total
    raise GmresStagnation(
        f"GMRES stagnated after {total} iterations: residual {best_res:.3e} > "
        f"target {target:.3e}", best_x, best_res, total)
