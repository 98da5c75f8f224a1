import json

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from snmasm.discretization import assemble, infinite_medium, mini_lattice, pure_absorber
from snmasm.eigensolver import (
    REPORT_FIELDS, EigenState, GmresStagnation, OperatorProblem, SolverError, SolverOptions,
    eigenvalue_of, gmres_solve, inverse_power_iterate, jfnk_matvec, newton_solve, power_solve,
    residual,
)

TWO_GROUP = dict(sigma_t=[1.0, 1.5], sigma_s=[[0.6, 0.0], [0.3, 1.2]],
                 nu_sigma_f=[0.1, 0.5], chi=[1.0, 0.0])


def two_group_oracle(sigma_t, sigma_s, nu_sigma_f, chi):
    """Largest eigenvalue of the infinite-medium group balance."""
    T = np.diag(sigma_t) - np.array(sigma_s)
    F = np.outer(chi, nu_sigma_f)
    return max(np.linalg.eigvals(np.linalg.solve(T, F)).real)


def identity_problem(n=6, scale=2.0):
    return OperatorProblem(np.eye(n), scale * np.eye(n))


# scalar operations -------------------------------------------------------

def test_eigenvalue_of_scaled_identity():
    psi = np.ones(4) / 2.0
    assert eigenvalue_of(psi, 2 * np.eye(4)) == pytest.approx(2.0, rel=1e-15)


def test_eigenvalue_of_zero_operator():
    assert eigenvalue_of(np.ones(3), np.zeros((3, 3))) == 0.0


def test_eigenvalue_of_zero_vector():
    with pytest.raises(ValueError):
        eigenvalue_of(np.zeros(3), np.eye(3))


def test_residual_fixed_point_at_unit_norm():
    psi = np.array([0.6, 0.8, 0.0])
    F = residual(psi, lambda x: x, lambda x: 2 * x)
    assert np.abs(F).max() <= 1e-16


def test_residual_at_norm_two():
    psi = np.array([1.2, 1.6, 0.0])
    np.testing.assert_allclose(residual(psi, lambda x: x, lambda x: 2 * x), psi / 2, rtol=1e-15)


def test_residual_without_fission():
    with pytest.raises(ValueError, match="fission"):
        residual(np.ones(3), lambda x: x, lambda x: 0 * x)


def test_power_iteration_scaled_identity():
    rng = np.random.default_rng(0)
    state = EigenState(rng.random(6), 0.0)
    out = inverse_power_iterate(state, 1, lambda x: x, lambda x: 2 * x, lambda b: b)
    assert out.k == pytest.approx(2.0, rel=1e-15)


def test_newton_on_operator_problem():
    state, report = newton_solve(identity_problem())
    assert state.k == pytest.approx(2.0, rel=1e-12)
    assert report.converged


def test_power_iteration_needs_an_iteration():
    with pytest.raises(ValueError):
        inverse_power_iterate(EigenState(np.ones(2), 1.0), 0, None, lambda x: x, lambda b: b)


def test_power_solve_infinite_medium():
    system = assemble(infinite_medium(mesh=2))
    state = power_solve(system, SolverOptions(power_rtol=1e-10), rtol=1e-12)
    assert state.k == pytest.approx(1.2, abs=1e-8)


# Jacobian-free matvec ---------------------------------------------------

def test_jfnk_linear_matches_operator():
    system = assemble(pure_absorber(mesh=2))
    rng = np.random.default_rng(1)
    q = rng.random(system.layout.size)
    psi, v = rng.random((2, system.layout.size))
    Jv = jfnk_matvec(psi, v, lambda x: system.apply_A(x) - q)
    Av = system.apply_A(v)
    assert np.linalg.norm(Jv - Av) <= 1e-6 * np.linalg.norm(Av)


def test_jfnk_zero_direction():
    with pytest.raises(ValueError):
        jfnk_matvec(np.ones(3), np.zeros(3), lambda x: x)


def test_jfnk_matches_central_difference():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=2))
    rng = np.random.default_rng(2)
    psi, v = rng.random((2, system.layout.size))

    def F(x):
        return residual(x, system.apply_A, system.apply_B)

    h = 1e-5
    central = (F(psi + h * v) - F(psi - h * v)) / (2 * h)
    Jv = jfnk_matvec(psi, v, F)
    assert np.linalg.norm(Jv - central) <= 1e-4 * np.linalg.norm(central)


# GMRES --------------------------------------------------------------------

def test_gmres_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, its = gmres_solve(lambda v: v, b, precond=lambda v: 3 * v, rtol=1e-12)
    assert its == 1
    np.testing.assert_allclose(x, b, rtol=1e-14)


def test_gmres_exact_lu_preconditioner():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=2))
    P = system.P.to_scipy().tocsc()
    lu = spla.splu(P)
    b = np.random.default_rng(3).random(P.shape[0])
    x, its = gmres_solve(P, b, precond=lu.solve, rtol=1e-10)
    assert its <= 2
    assert np.linalg.norm(b - P @ x) <= 1e-10 * np.linalg.norm(b)


def test_gmres_diagonal_matches_dense_solve():
    D = np.diag(np.arange(1.0, 11.0))
    b = np.random.default_rng(4).standard_normal(10)
    x, its = gmres_solve(D, b, rtol=1e-10)
    np.testing.assert_allclose(x, np.linalg.solve(D, b), rtol=1e-9)
    assert its <= 10


def test_gmres_restarted_contract():
    rng = np.random.default_rng(5)
    A = np.eye(40) * 4 + rng.standard_normal((40, 40)) * 0.3
    b = rng.standard_normal(40)
    x, _ = gmres_solve(A, b, rtol=1e-8, restart=5, max_restarts=200)
    assert np.linalg.norm(b - A @ x) <= 1e-8 * np.linalg.norm(b)


def test_gmres_stagnation_carries_best_iterate():
    # cyclic shift: GMRES makes no progress until the full dimension
    n = 12
    S = np.roll(np.eye(n), 1, axis=0)
    b = np.zeros(n)
    b[0] = 1.0
    with pytest.raises(GmresStagnation) as err:
        gmres_solve(S, b, rtol=1e-8, restart=3, max_restarts=2)
    exc = err.value
    assert exc.iterations == 6
    assert exc.x.shape == (n,)
    assert exc.residual == pytest.approx(np.linalg.norm(b - S @ exc.x))


def test_gmres_zero_rhs():
    with pytest.raises(ValueError):
        gmres_solve(np.eye(3), np.zeros(3))


# Newton --------------------------------------------------------------------

def test_newton_infinite_medium():
    system = assemble(infinite_medium(mesh=4))
    state, report = newton_solve(system)
    assert state.k == pytest.approx(1.2, abs=1e-8)
    assert report.converged


def test_newton_two_group_oracle():
    expected = two_group_oracle(**TWO_GROUP)
    assert expected == pytest.approx(1.5, rel=1e-14)
    system = assemble(infinite_medium(mesh=3, **TWO_GROUP))
    state, _ = newton_solve(system)
    assert state.k == pytest.approx(expected, abs=1e-8)


def test_newton_scale_invariance():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=2))
    opts = SolverOptions(newton_rtol=1e-9)
    psi0 = np.ones(system.layout.size)
    k1 = newton_solve(system, opts=opts, psi0=psi0)[0].k
    k2 = newton_solve(system, opts=opts, psi0=2 * psi0)[0].k
    assert abs(k1 - k2) <= 1e-8


def test_newton_matches_dense_eigen_oracle():
    import scipy.linalg as sla
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=2))
    n = system.layout.size
    eye = np.eye(n)
    A = np.column_stack([system.apply_A(e) for e in eye])
    B = np.column_stack([system.apply_B(e) for e in eye])
    lam = sla.eigvals(B, A)
    k_ref = max(lam[np.isfinite(lam)].real)
    state, _ = newton_solve(system, opts=SolverOptions(newton_rtol=1e-9))
    assert state.k == pytest.approx(k_ref, abs=1e-8)


def test_newton_monotone_residual_and_report():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=2))
    state, report = newton_solve(system)
    hist = report.residual_history
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert report.time_pcsetup + report.time_pcapply <= report.time_ksp <= report.time_total
    d = report.to_dict()
    assert tuple(d) == REPORT_FIELDS
    json.dumps(d)
    assert state.k > 0
    assert np.mean(system.scalar_flux(state.psi)[0]) > 0
    assert np.linalg.norm(system.apply_B(state.psi)) == pytest.approx(state.k, rel=1e-12)


def test_newton_fixed_source_is_linear():
    system = assemble(pure_absorber(mesh=3))
    q = np.ones(system.layout.size)
    opts = SolverOptions(gmres_rtol=1e-9, newton_rtol=1e-8)
    state, report = newton_solve(system, opts=opts, source=q)
    assert report.iter_newton <= 2
    assert np.linalg.norm(system.apply_A(state.psi) - q) <= 1e-7 * np.linalg.norm(q)


def test_newton_budget_exceeded():
    system = assemble(mini_lattice(n_pins=2, cells_per_pin=2))
    with pytest.raises(SolverError) as err:
        newton_solve(system, opts=SolverOptions(max_newton=1, newton_rtol=1e-9))
    assert err.value.report is not None
    assert err.value.report.iter_newton == 1


def test_newton_non_fissile():
    with pytest.raises(SolverError, match="fission"):
        newton_solve(assemble(pure_absorber(mesh=2)))


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(newton_rtol=2.0)
    with pytest.raises(ValueError):
        SolverOptions(gmres_restart=0)
