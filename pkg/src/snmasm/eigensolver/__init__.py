"""Eigenvalue and Krylov solvers."""

from .krylov import GmresStagnation, dot, gmres_solve, norm
from .newton import (
    REPORT_FIELDS, ConvergenceReport, EigenState, OperatorProblem, SolverError, SolverOptions,
    eigenvalue_of, fd_delta, inverse_power_iterate, jfnk_matvec, newton_solve, power_solve,
    residual,
)

__all__ = [
    "GmresStagnation", "dot", "gmres_solve", "norm", "REPORT_FIELDS", "ConvergenceReport",
    "EigenState", "OperatorProblem", "SolverError", "SolverOptions", "eigenvalue_of",
    "fd_delta", "inverse_power_iterate", "jfnk_matvec", "newton_solve", "power_solve",
    "residual",
]
