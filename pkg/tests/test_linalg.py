import numpy as np
import pytest

from hfhrlab.linalg import (
    LyapunovSolveError,
    cumulative_simpson,
    operator_norm,
    solve_lyapunov,
    symmetric_eigenvalues,
)


def test_jacobi_identity():
    assert np.allclose(symmetric_eigenvalues(np.eye(3)), [1.0, 1.0, 1.0])


def test_jacobi_diagonal():
    assert np.allclose(symmetric_eigenvalues(np.diag([2.0, 5.0])), [2.0, 5.0])


def test_jacobi_vs_numpy_oracle():
    gen = np.random.default_rng(3)
    for n in (2, 3, 5, 12, 40):
        a = gen.standard_normal((n, n))
        a = a + a.T
        ours = symmetric_eigenvalues(a)
        ref = np.linalg.eigvalsh(a)
        assert np.max(np.abs(ours - ref)) < 1e-10 * max(1.0, np.abs(ref).max())


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        symmetric_eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_operator_norm_matches_svd():
    gen = np.random.default_rng(7)
    a = gen.standard_normal((4, 4))
    assert abs(operator_norm(a) - np.linalg.norm(a, 2)) < 1e-10


def test_lyapunov_scalar_case():
    # -K - K = -2 so K = 1
    k, res = solve_lyapunov(-np.eye(1), -2.0 * np.eye(1))
    assert np.allclose(k, np.eye(1))
    assert res < 1e-14


def test_lyapunov_random_hurwitz():
    gen = np.random.default_rng(11)
    for n in (2, 4, 8):
        b = gen.standard_normal((n, n)) - 3.0 * np.eye(n)
        c = gen.standard_normal((n, n))
        c = c + c.T
        k, res = solve_lyapunov(b, c)
        assert np.allclose(k, k.T, atol=1e-12)
        assert res <= 1e-10 * np.linalg.norm(c)


def test_lyapunov_rejects_non_hurwitz():
    with pytest.raises(LyapunovSolveError):
        solve_lyapunov(np.diag([1.0, -1.0]), np.eye(2))


def test_lyapunov_rejects_asymmetric_rhs():
    with pytest.raises(ValueError):
        solve_lyapunov(-np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_cumulative_simpson_polynomials():
    # the local quadratic interpolant integrates quadratics exactly
    x = np.linspace(0.0, 2.0, 101)
    h = x[1] - x[0]
    for k in range(3):
        got = cumulative_simpson(x ** k, h)
        want = x ** (k + 1) / (k + 1)
        assert np.max(np.abs(got - want)) < 1e-12


def test_cumulative_simpson_exponential_convergence():
    exact = np.expm1(1.0)

    def err(n):
        x = np.linspace(0.0, 1.0, n + 1)
        return abs(cumulative_simpson(np.exp(x), x[1] - x[0])[-1] - exact)

    # halving h cuts the error by about 2^4
    assert err(32) / err(64) > 12.0
