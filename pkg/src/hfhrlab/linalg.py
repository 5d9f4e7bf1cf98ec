"""Small dense linear-algebra kernels.

The sizes that occur here are tiny (2x2 up to 60x60), so the solvers favor
exactness and verifiability over speed: a cyclic Jacobi eigensolver for
symmetric matrices, and a Lyapunov-equation solve done by assembling the
vectorized n^2 x n^2 linear system explicitly.
"""

import numpy as np


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def symmetric_eigenvalues(a, tol=1e-12, max_sweeps=128):
    """Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.

    Sweeps rotate away every off-diagonal pair (p, q) in a fixed order until
    the off-diagonal Frobenius norm drops below ``tol`` times the scale of the
    input.  Convergence is quadratic, so ``max_sweeps`` is never reached in
    practice for the matrix sizes used here.
    """
    a = _as_square(a)
    scale = max(1.0, float(np.abs(a).max()))
    if not np.allclose(a, a.T, atol=1e-10 * scale):
        raise ValueError("symmetric_eigenvalues: input is not symmetric")
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    w = 0.5 * (a + a.T)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(np.square(w)) - np.sum(np.square(np.diagonal(w))), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                theta = (w[q, q] - w[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0 else 1.0
                t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = w[p, :].copy(), w[q, :].copy()
                w[p, :] = c * rp - s * rq
                w[q, :] = s * rp + c * rq
                cp, cq = w[:, p].copy(), w[:, q].copy()
                w[:, p] = c * cp - s * cq
                w[:, q] = s * cp + c * cq
                w[p, q] = 0.0
                w[q, p] = 0.0
    return np.sort(np.diagonal(w).copy())


def operator_norm(a):
    """Spectral norm via the Jacobi eigensolver applied to A^T A."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("operator_norm expects a matrix")
    if a.size == 0:
        return 0.0
    eigs = symmetric_eigenvalues(a.T @ a)
    return float(np.sqrt(max(eigs[-1], 0.0)))


class LyapunovSolveError(RuntimeError):
    pass


def solve_lyapunov(b, c):
    """Solve ``B^T K + K B = C`` for the symmetric matrix K.

    The equation is vectorized into the dense ``n^2 x n^2`` system
    ``(kron(B^T, I) + kron(I, B^T)) vec(K) = vec(C)`` (row-major vec) and
    solved directly.  A unique symmetric solution exists when B is Hurwitz;
    callers guarantee that structurally (drift matrix with positive-definite
    stiffness block and positive friction).  A singular or badly conditioned
    system raises :class:`LyapunovSolveError` naming the spectrum of B.

    Returns ``(K, residual)`` with ``residual = ||B^T K + K B - C||_F``.
    """
    b = _as_square(b, "B")
    c = _as_square(c, "C")
    if b.shape != c.shape:
        raise ValueError("B and C must have matching shapes")
    scale = max(1.0, float(np.linalg.norm(c)))
    if not np.allclose(c, c.T, atol=1e-10 * scale):
        raise ValueError("solve_lyapunov: C is not symmetric")
    n = b.shape[0]
    eye = np.eye(n)
    system = np.kron(b.T, eye) + np.kron(eye, b.T)
    try:
        vec = np.linalg.solve(system, c.reshape(-1))
    except np.linalg.LinAlgError as exc:
        spec = np.linalg.eigvals(b)
        raise LyapunovSolveError(
            f"Lyapunov system singular; spectrum of B: {spec}"
        ) from exc
    k = vec.reshape(n, n)
    k = 0.5 * (k + k.T)
    residual = float(np.linalg.norm(b.T @ k + k @ b - c))
    if residual > 1e-6 * scale:
        spec = np.linalg.eigvals(b)
        raise LyapunovSolveError(
            f"Lyapunov solve inaccurate (residual {residual:.3e}); "
            f"B is likely not Hurwitz, spectrum: {spec}"
        )
    return k, residual


def cumulative_simpson(y, h):
    """Cumulative integral of samples ``y`` on a uniform grid of spacing ``h``.

    Returns an array I with I[0] = 0 and I[k] = integral over [x_0, x_k],
    fourth-order accurate at every node.  Even nodes use composite Simpson;
    odd nodes add the integral of the local quadratic interpolant over the
    trailing half panel.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    out = np.zeros_like(y)
    if n < 2:
        return out
    if n == 2:
        out[1] = 0.5 * h * (y[0] + y[1])
        return out
    # even nodes: pairwise Simpson panels
    pair = (h / 3.0) * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(pair)
    # odd nodes: quadratic through the three nodes ending (k-2, k-1, k)
    out[1] = (h / 12.0) * (5.0 * y[0] + 8.0 * y[1] - y[2])
    if n > 3:
        out[3::2] = out[2:-1:2] + (h / 12.0) * (
            -y[1:-2:2] + 8.0 * y[2:-1:2] + 5.0 * y[3::2]
        )
    return out
