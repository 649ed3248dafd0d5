"""BiCGStab tests."""

import numpy as np
import pytest
import scipy.sparse as sp

from biotfv.errors import SolverError
from biotfv.linsolve.amg import build_amg
from biotfv.linsolve.krylov import bicgstab


def test_identity_converges_in_one_iteration():
    rhs = np.array([1.0, -2.0, 3.0])
    result = bicgstab(np.eye(3), rhs, rtol=1e-12)
    assert result.iterations == 1
    assert np.allclose(result.x, rhs, atol=1e-14)


def test_exact_preconditioner_converges_in_one_iteration():
    a = np.array([[4.0, 1.0], [1.0, 3.0]])
    inv = np.linalg.inv(a)
    rhs = np.array([1.0, 2.0])
    result = bicgstab(a, rhs, preconditioner=lambda v: inv @ v, rtol=1e-10)
    assert result.iterations == 1
    assert np.allclose(result.x, np.linalg.solve(a, rhs), atol=1e-10)


def test_matches_dense_solve_on_small_nonsymmetric_system():
    rng = np.random.default_rng(17)
    a = np.eye(50) * 10.0 + rng.standard_normal((50, 50))
    rhs = rng.standard_normal(50)
    expected = np.linalg.solve(a, rhs)
    result = bicgstab(a, rhs, rtol=1e-9, max_iter=200)
    err = np.linalg.norm(result.x - expected) / np.linalg.norm(expected)
    assert err <= 1e-8  # rtol * 10


def test_trace_records_per_iteration_residuals():
    rng = np.random.default_rng(3)
    a = np.eye(30) * 4.0 + 0.5 * rng.standard_normal((30, 30))
    rhs = rng.standard_normal(30)
    result = bicgstab(a, rhs, rtol=1e-8, max_iter=100)
    assert len(result.trace) == result.iterations + 1
    assert result.trace[0] == pytest.approx(np.linalg.norm(rhs))
    assert result.trace[-1] <= 1e-8 * np.linalg.norm(rhs)


def test_true_residual_at_convergence():
    rng = np.random.default_rng(5)
    a = sp.random(200, 200, density=0.05, random_state=7) + sp.eye(200) * 3.0
    rhs = rng.standard_normal(200)
    result = bicgstab(a.tocsr(), rhs, rtol=1e-7, max_iter=500)
    res = np.linalg.norm(rhs - a @ result.x)
    assert res <= 1e-7 * np.linalg.norm(rhs)


def test_amg_preconditioned_laplacian():
    n = 12
    a1 = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    a = sp.kronsum(sp.kronsum(a1, a1), a1).tocsr()
    hier = build_amg(a)
    rng = np.random.default_rng(0)
    rhs = rng.standard_normal(a.shape[0])
    plain = bicgstab(a, rhs, rtol=1e-8, max_iter=2000)
    pre = bicgstab(a, rhs, preconditioner=hier.apply, rtol=1e-8, max_iter=2000)
    assert pre.iterations < plain.iterations
    assert pre.iterations <= 15


def test_zero_rhs_returns_zero():
    result = bicgstab(np.eye(4), np.zeros(4))
    assert np.all(result.x == 0.0)
    assert result.trace == [0.0]


def test_warm_start_with_exact_solution():
    a = np.diag([2.0, 3.0, 4.0])
    rhs = np.array([2.0, 6.0, 12.0])
    result = bicgstab(a, rhs, rtol=1e-10, x0=np.array([1.0, 2.0, 3.0]))
    assert result.iterations == 0


def test_warm_start_speeds_convergence():
    rng = np.random.default_rng(8)
    a = np.eye(40) * 5.0 + rng.standard_normal((40, 40)) * 0.5
    rhs = rng.standard_normal(40)
    cold = bicgstab(a, rhs, rtol=1e-10, max_iter=200)
    near = cold.x + 1e-8 * rng.standard_normal(40)
    warm = bicgstab(a, rhs, rtol=1e-10, max_iter=200, x0=near)
    assert warm.iterations <= cold.iterations


def test_invalid_rtol_rejected():
    with pytest.raises(ValueError):
        bicgstab(np.eye(2), np.ones(2), rtol=0.0)


def test_max_iter_exceeded_carries_trace():
    rng = np.random.default_rng(21)
    a = np.eye(60) * 2.0 + rng.standard_normal((60, 60)) * 0.3
    rhs = rng.standard_normal(60)
    with pytest.raises(SolverError) as err:
        bicgstab(a, rhs, rtol=1e-14, max_iter=1)
    assert len(err.value.trace) == 2


def test_skew_system_breaks_down_after_one_restart():
    # <shadow, A p> = 0 immediately; the restart reproduces the same state
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rhs = np.array([1.0, 1.0])
    with pytest.raises(SolverError) as err:
        bicgstab(a, rhs, rtol=1e-10)
    assert "breakdown" in str(err.value)


def test_callable_operator():
    a = np.diag([1.0, 2.0, 5.0])
    result = bicgstab(lambda v: a @ v, np.ones(3), rtol=1e-12)
    assert np.allclose(result.x, [1.0, 0.5, 0.2], atol=1e-12)
