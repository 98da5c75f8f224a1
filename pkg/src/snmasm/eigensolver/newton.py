"""k-eigenvalue solvers: inverse power iteration and Jacobian-free Newton.

The eigenproblem ``A psi = (1/k) B psi`` is recast as the nonlinear system

    F(psi) = A psi - B psi / |B psi| = 0,

whose solution satisfies ``k = |B psi|``.  Newton steps are solved inexactly
with flexible GMRES; Jacobian actions are forward differences of ``F``.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from .krylov import GmresStagnation, gmres_solve, norm

SQRT_EPS = float(np.sqrt(np.finfo(float).eps))

REPORT_FIELDS = ("iter_newton", "iter_gmres_avg", "time_pcsetup", "time_pcapply", "time_ksp",
                 "time_total", "time_func", "time_jac", "time_ls", "time_mf", "final_k",
                 "final_residual_norm")


@dataclass
class EigenState:
    psi: np.ndarray
    k: float


@dataclass
class SolverOptions:
    newton_rtol: float = 1e-6
    newton_stol: float = 1e-12
    gmres_rtol: float = 1e-1
    gmres_restart: int = 30
    gmres_max_restarts: int = 20
    max_newton: int = 50
    max_power: int = 500
    n_initial_power: int = 2
    power_rtol: float = 1e-2
    fd_delta_mode: object = "sqrt_eps"
    ls_c: float = 1e-4
    ls_factor: float = 0.5
    ls_max_halvings: int = 8

    def __post_init__(self):
        for name in ("newton_rtol", "gmres_rtol", "power_rtol", "ls_c", "ls_factor"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.gmres_restart < 1:
            raise ValueError("gmres_restart must be >= 1")
        if self.n_initial_power < 0 or self.max_newton < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.fd_delta_mode != "sqrt_eps" and not float(self.fd_delta_mode) > 0:
            raise ValueError("fd_delta_mode must be 'sqrt_eps' or a positive float")


@dataclass
class ConvergenceReport:
    iter_newton: int = 0
    iter_gmres_avg: float = 0.0
    time_pcsetup: float = 0.0
    time_pcapply: float = 0.0
    time_ksp: float = 0.0
    time_total: float = 0.0
    time_func: float = 0.0
    time_jac: float = 0.0
    time_ls: float = 0.0
    time_mf: float = 0.0
    final_k: float = float("nan")
    final_residual_norm: float = float("nan")
    converged: bool = field(default=False, repr=False)
    residual_history: list = field(default_factory=list, repr=False)
    gmres_iterations: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}

    def without_timing(self):
        d = self.to_dict()
        for k in d:
            if k.startswith("time_"):
                d[k] = 0.0
        return d


class SolverError(RuntimeError):
    """Nonconvergence or breakdown; ``report`` holds the partial statistics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class _Clock:
    def __init__(self):
        self.t = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.t[name] = self.t.get(name, 0.0) + time.perf_counter() - t0


# problems -------------------------------------------------------------------

class OperatorProblem:
    """Adapter giving matrices or callables the ``apply_A``/``apply_B`` shape
    used by the solvers."""

    def __init__(self, A, B, size=None):
        self._A = A if callable(A) else (lambda v, M=A: M @ v)
        self._B = B if callable(B) else (lambda v, M=B: M @ v)
        self.size = size if size is not None else A.shape[0]

    def apply_A(self, psi):
        return self._A(psi)

    def apply_B(self, psi):
        return self._B(psi)


def _size(problem):
    return problem.layout.size if hasattr(problem, "layout") else problem.size


# core operations ------------------------------------------------------------

def eigenvalue_of(psi, B):
    """``|B psi|``; ``B`` is a callable or matrix."""
    psi = np.asarray(psi, dtype=float)
    if not np.any(psi):
        raise ValueError("eigenvalue of a zero vector is undefined")
    Bpsi = B(psi) if callable(B) else B @ psi
    return norm(Bpsi)


def residual(psi, A, B):
    """``F(psi) = A psi - B psi / |B psi|`` for callables ``A`` and ``B``."""
    psi = np.asarray(psi, dtype=float)
    if not np.any(psi):
        raise ValueError("residual of a zero vector is undefined")
    Bpsi = B(psi)
    k = norm(Bpsi)
    if k == 0.0:
        raise ValueError("B psi vanishes: the problem has no fission content")
    return A(psi) - Bpsi / k


def fd_delta(psi, v, mode="sqrt_eps"):
    vnorm = norm(v)
    if vnorm == 0.0 or not np.isfinite(vnorm):
        raise ValueError("finite-difference direction is zero")
    if mode == "sqrt_eps":
        delta = SQRT_EPS * (1.0 + norm(psi)) / vnorm
    else:
        delta = float(mode)
    if delta == 0.0 or not np.isfinite(delta):
        raise ValueError("finite-difference step underflowed")
    return delta


def jfnk_matvec(psi, v, F, F_psi=None, mode="sqrt_eps"):
    """Forward-difference Jacobian action ``(F(psi + d v) - F(psi)) / d``."""
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    delta = fd_delta(psi, v, mode)
    if F_psi is None:
        F_psi = F(psi)
    return (F(psi + delta * v) - F_psi) / delta


def inverse_power_iterate(state, n_iters, A, B, linear_solver):
    """Run ``n_iters`` steps of ``A psi' = B psi / |B psi|``.

    ``linear_solver(b)`` returns an approximate solution of ``A x = b``.
    ``A`` is accepted for interface symmetry; only the solver touches it.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    psi = np.asarray(state.psi, dtype=float)
    Bpsi = B(psi)
    k = norm(Bpsi)
    if k == 0.0:
        raise ValueError("B psi vanishes: the problem has no fission content")
    for it in range(n_iters):
        try:
            psi = linear_solver(Bpsi / k)
        except (GmresStagnation, np.linalg.LinAlgError) as exc:
            raise SolverError(f"linear solve failed in power iteration {it + 1}: {exc}") from exc
        Bpsi = B(psi)
        k = norm(Bpsi)
        if k == 0.0:
            raise SolverError(f"fission source vanished in power iteration {it + 1}")
    return EigenState(psi, k)


def power_solve(problem, opts=None, rtol=1e-8, linear_solver=None):
    """Plain inverse power iteration to a relative change in ``k`` below ``rtol``."""
    opts = opts or SolverOptions()
    A, B = problem.apply_A, problem.apply_B
    if linear_solver is None:
        def linear_solver(b):
            return gmres_solve(A, b, rtol=opts.power_rtol, restart=opts.gmres_restart,
                               max_restarts=opts.gmres_max_restarts)[0]
    state = EigenState(np.ones(_size(problem)), 0.0)
    k_old = None
    for _ in range(opts.max_power):
        state = inverse_power_iterate(state, 1, A, B, linear_solver)
        if k_old is not None and abs(state.k - k_old) <= rtol * abs(state.k):
            return state
        k_old = state.k
    raise SolverError(f"power iteration did not converge in {opts.max_power} steps")


# Newton ---------------------------------------------------------------------

def _wrap_preconditioner(pc, clock):
    if pc is None:
        return None
    apply = pc.apply if hasattr(pc, "apply") else pc

    def timed(r):
        with clock("pcapply"):
            return apply(r)
    return timed


def newton_solve(problem, preconditioner=None, opts=None, psi0=None, source=None):
    """Solve the k-eigenvalue problem (or ``A psi = source``) with JFNK.

    Parameters
    ----------
    problem : object with ``apply_A``, ``apply_B`` and ``layout`` or ``size``
    preconditioner : object with ``apply`` (and optionally ``setup``), callable, or None
        Right preconditioner for every Krylov solve.  An object that has not
        been set up yet is set up here and timed as part of the first solve.
    opts : SolverOptions
    psi0 : ndarray, optional
        Initial guess; all ones by default.
    source : ndarray, optional
        Fixed-source mode: solve ``A psi = source`` without power iterations.

    Returns
    -------
    (EigenState, ConvergenceReport)

    Raises
    ------
    SolverError
        On too many Newton steps, a failed line search or a zero fission
        source.  The partial report is attached.
    """
    opts = opts or SolverOptions()
    clock = _Clock()
    report = ConvergenceReport()
    t_start = time.perf_counter()
    A, B = problem.apply_A, problem.apply_B
    n = _size(problem)
    psi = np.ones(n) if psi0 is None else np.array(psi0, dtype=float)
    if psi.shape != (n,):
        raise ValueError(f"initial guess must have length {n}")
    pc_apply = _wrap_preconditioner(preconditioner, clock)

    def finish(psi, k, fnorm, converged):
        report.converged = converged
        report.iter_newton = len(report.gmres_iterations)
        report.iter_gmres_avg = (float(np.mean(report.gmres_iterations))
                                 if report.gmres_iterations else 0.0)
        report.final_k = float(k)
        report.final_residual_norm = float(fnorm)
        report.time_total = time.perf_counter() - t_start
        report.time_pcsetup = clock.t.get("pcsetup", 0.0)
        report.time_pcapply = clock.t.get("pcapply", 0.0)
        report.time_ksp = clock.t.get("ksp", 0.0)
        report.time_func = clock.t.get("func", 0.0)
        report.time_jac = clock.t.get("jac", 0.0)
        report.time_ls = clock.t.get("ls", 0.0)
        report.time_mf = clock.t.get("mf", 0.0)

    def ksp(op, b, rtol, x0=None):
        with clock("ksp"):
            if preconditioner is not None and hasattr(preconditioner, "setup") \
                    and not getattr(preconditioner, "is_setup", True):
                with clock("pcsetup"):
                    preconditioner.setup()
            return gmres_solve(op, b, pc_apply, rtol=rtol, restart=opts.gmres_restart,
                               max_restarts=opts.gmres_max_restarts, x0=x0)

    if source is not None:
        source = np.asarray(source, dtype=float)

        def evaluate(x):
            with clock("func"):
                Ax = A(x)
                return Ax - source, norm(Ax)

        def current_k(x):
            return float("nan")
    else:
        def evaluate(x):
            with clock("func"):
                Bx = B(x)
                k = norm(Bx)
                if k == 0.0:
                    raise SolverError("B psi vanishes: the problem has no fission content",
                                      report)
                Ax = A(x)
                return Ax - Bx / k, norm(Ax)

        def current_k(x):
            return norm(B(x))

        if opts.n_initial_power:
            def solve_A(b):
                return ksp(A, b, opts.power_rtol)[0]
            try:
                psi = inverse_power_iterate(EigenState(psi, 0.0), opts.n_initial_power,
                                            A, B, solve_A).psi
            except (SolverError, ValueError) as exc:
                finish(psi, float("nan"), float("nan"), False)
                raise SolverError(str(exc), report) from exc

    F, Anorm = evaluate(psi)
    fnorm = norm(F)
    report.residual_history.append(fnorm)
    target = max(opts.newton_rtol * fnorm, opts.newton_stol * Anorm)

    while fnorm > target:
        if len(report.gmres_iterations) >= opts.max_newton:
            finish(psi, current_k(psi), fnorm, False)
            raise SolverError(f"Newton did not converge in {opts.max_newton} steps "
                              f"(|F| = {fnorm:.3e})", report)
        with clock("jac"):
            base_psi, base_F = psi.copy(), F.copy()

        def J(v):
            with clock("mf"):
                return jfnk_matvec(base_psi, v, lambda x: evaluate(x)[0], base_F,
                                   opts.fd_delta_mode)

        try:
            step, its = ksp(J, -F, opts.gmres_rtol)
        except GmresStagnation as exc:
            # fall back to the best iterate when it still makes progress
            if exc.residual >= fnorm:
                report.gmres_iterations.append(exc.iterations)
                finish(psi, current_k(psi), fnorm, False)
                raise SolverError(f"Newton step {len(report.gmres_iterations)}: {exc}",
                                  report) from exc
            step, its = exc.x, exc.iterations
        report.gmres_iterations.append(its)

        with clock("ls"):
            alpha = 1.0
            for _ in range(opts.ls_max_halvings + 1):
                trial = psi + alpha * step
                F_new, A_new = evaluate(trial)
                f_new = norm(F_new)
                if f_new ** 2 <= (1.0 - 2.0 * opts.ls_c * alpha) * fnorm ** 2:
                    break
                alpha *= opts.ls_factor
            else:
                finish(psi, current_k(psi), fnorm, False)
                raise SolverError(f"line search failed at Newton step "
                                  f"{len(report.gmres_iterations)}", report)
        psi, F, fnorm, Anorm = trial, F_new, f_new, A_new
        report.residual_history.append(fnorm)
        target = max(target, opts.newton_stol * Anorm)

    if source is None:
        k = current_k(psi)
        if _group0_flux_mean(problem, psi) < 0:
            psi = -psi
    else:
        k = float("nan")
    finish(psi, k, fnorm, True)
    return EigenState(psi, k), report


def _group0_flux_mean(problem, psi):
    if hasattr(problem, "scalar_flux"):
        return float(np.mean(problem.scalar_flux(psi)[0]))
    return float(np.mean(psi))
