import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from fracporo.errors import IterationLimit, NonConvergence, OuterNonConvergence, SingularMatrix
from fracporo.solvers import (
    FixedPointConfig,
    GmresConfig,
    NewtonConfig,
    SolverCounters,
    gmres,
    ilu0,
    jacobi,
    make_preconditioner,
    newton_krylov_fixed_point,
    newton_solve,
    sparse_lu,
)


def laplacian(n):
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return sps.diags([off, main, off], [-1, 0, 1], format="csr")


def convection_diffusion(n, c=0.4):
    off_lo = -(1 + c) * np.ones(n - 1)
    off_hi = -(1 - c) * np.ones(n - 1)
    return sps.diags([off_lo, 2.2 * np.ones(n), off_hi], [-1, 0, 1], format="csr")


@pytest.mark.parametrize("prec", [None, "jacobi", "ilu0"])
def test_gmres_nonsymmetric(prec, rng):
    A = convection_diffusion(200)
    b = rng.standard_normal(200)
    M = {None: None, "jacobi": jacobi, "ilu0": ilu0}[prec]
    res = gmres(A, b, M(A) if M else None, tol=1e-10, restart=40, max_iters=2000)
    assert res.converged
    assert np.linalg.norm(b - A @ res.x) <= 1e-9 * np.linalg.norm(b)


def test_ilu0_exact_for_tridiagonal(rng):
    A = convection_diffusion(50)
    b = rng.standard_normal(50)
    # no fill-in: ILU(0) is the exact LU
    np.testing.assert_allclose(A @ ilu0(A)(b), b, atol=1e-10)


def test_gmres_iteration_limit(rng):
    A = laplacian(400)
    with pytest.raises(IterationLimit):
        gmres(A, rng.standard_normal(400), tol=1e-12, restart=5, max_iters=10)
    res = gmres(A, rng.standard_normal(400), tol=1e-12, restart=5, max_iters=10, raise_on_failure=False)
    assert not res.converged and res.iterations <= 10


def test_gmres_zero_rhs():
    res = gmres(laplacian(10), np.zeros(10))
    assert res.converged and not np.any(res.x)


def test_cpr_preconditioner_on_block_system(rng):
    n = 100
    A = sps.kron(laplacian(n), np.array([[2.0, -1.0], [0.5, 1.5]])).tocsr() + sps.identity(2 * n) * 0.1
    b = rng.standard_normal(2 * n)
    res = gmres(A, b, make_preconditioner(A, "cpr"), tol=1e-10, restart=50, max_iters=500)
    assert res.converged
    plain = gmres(A, b, None, tol=1e-10, restart=50, max_iters=5000)
    assert res.iterations < plain.iterations


def test_sparse_lu(rng):
    A = convection_diffusion(30).tocsc()
    b = rng.standard_normal(30)
    np.testing.assert_allclose(A @ sparse_lu(A).solve(b), b, atol=1e-12)
    with pytest.raises(SingularMatrix):
        sparse_lu(sps.csr_matrix((3, 3)))


def test_newton_quadratic_convergence():
    res = newton_solve(lambda x: x**2 - 2.0, lambda x: np.diag(2 * x), np.array([1.0]), NewtonConfig(rel_residual_tol=1e-14, max_primary_increment_tol=1e-15))
    assert res.x[0] == pytest.approx(np.sqrt(2.0), rel=1e-14)
    assert res.iterations <= 6


def test_newton_failure():
    with pytest.raises(NonConvergence):
        # Newton on arctan diverges from |x0| > 1.39
        newton_solve(np.arctan, lambda x: np.diag(1 / (1 + x**2)), np.array([2.0]), NewtonConfig(max_iters=5))


def test_newton_accept_hook_delays_convergence():
    calls = []

    def accept(x, R):
        calls.append(abs(R[0]))
        return abs(R[0]) < 1e-13

    res = newton_solve(
        lambda x: x**2 - 2.0, lambda x: np.diag(2 * x), np.array([1.0]), NewtonConfig(rel_residual_tol=1e-2), accept=accept
    )
    assert abs(res.x[0] ** 2 - 2) < 1e-13
    assert len(calls) >= 2


def test_newton_update_hook():
    res = newton_solve(
        lambda x: np.exp(x) - 1.0,
        lambda x: np.diag(np.exp(x)),
        np.array([5.0]),
        NewtonConfig(max_iters=100, rel_residual_tol=1e-12),
        update=lambda x, dx: x + np.clip(dx, -0.5, 0.5),
    )
    assert abs(res.x[0]) < 1e-8


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 0.9), b=st.floats(-5, 5))
def test_fixed_point_affine_map(a, b):
    # G(u) = a R u + b with a rotation R: unique fixed point (I - aR)^-1 b
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    rhs = np.array([b, 1.0])
    res = newton_krylov_fixed_point(lambda u: a * R @ u + rhs, np.zeros(2), FixedPointConfig(rel_displacement_increment_tol=1e-10))
    np.testing.assert_allclose(res.u, np.linalg.solve(np.eye(2) - a * R, rhs), atol=1e-7)


def test_fixed_point_nonlinear_with_jvp():
    def G(u):
        return 0.5 * np.cos(u)

    def jvp(u, v):
        return -0.5 * np.sin(u) * v - v

    res = newton_krylov_fixed_point(G, np.zeros(3), FixedPointConfig(rel_displacement_increment_tol=1e-12), jvp=jvp)
    np.testing.assert_allclose(res.u, 0.5 * np.cos(res.u), atol=1e-11)
    assert res.iterations <= 6


def test_fixed_point_failure():
    with pytest.raises(OuterNonConvergence):
        newton_krylov_fixed_point(lambda u: u + 1.0, np.zeros(2), FixedPointConfig(max_outer_iters=3))


@pytest.mark.parametrize(
    "factory,kwargs",
    [
        (NewtonConfig, dict(max_iters=0)),
        (NewtonConfig, dict(mass_tol=-1.0)),
        (GmresConfig, dict(preconditioner="magic")),
        (FixedPointConfig, dict(inner_tol=2.0)),
    ],
)
def test_config_validation(factory, kwargs):
    with pytest.raises(ValueError):
        factory(**kwargs)


def test_counter_names():
    assert list(SolverCounters().as_dict()) == ["N_dt", "N_Chops", "N_Newton", "N_GMRes", "N_GMRes_NK", "N_NK", "CPU"]
