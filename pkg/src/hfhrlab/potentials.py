"""Target potentials with certified assumption constants.

Every model exposes the energy U, its exact analytic gradient and Laplacian,
and the structural constants used throughout the contraction machinery:
a Lipschitz constant L for the gradient, a dissipativity pair (lambda, A)
with ``0.5 q . grad U >= lambda (U + gamma^2 |q|^2 / 4) - A``, the limiting
stiffness matrix Q_infinity with its tail moduli, and the values of U and
|grad U| at the origin.

All evaluation methods accept a single point of shape ``(d,)`` or a batch of
shape ``(m, d)`` and vectorize over the batch.
"""

import numpy as np
from dataclasses import dataclass

from .linalg import symmetric_eigenvalues


@dataclass(frozen=True)
class AssumptionConstants:
    """Structural constants of a target potential.

    lam is the dissipativity rate (in (0, 1/4]), A the dissipativity offset,
    Q_infinity the symmetric positive-definite stiffness of the gradient at
    infinity, and C_linear the radius beyond which the tail modulus bound is
    valid.
    """

    L: float
    lam: float
    A: float
    gamma: float
    Q_infinity: np.ndarray
    C_linear: float
    grad_at_zero: float
    U_at_zero: float

    def __post_init__(self):
        if not (0.0 < self.lam <= 0.25):
            raise ValueError(f"lambda must lie in (0, 1/4], got {self.lam}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.L <= 0:
            raise ValueError("L must be positive")
        q = np.asarray(self.Q_infinity, dtype=float)
        if not np.allclose(q, q.T, atol=1e-10 * max(1.0, abs(q).max())):
            raise ValueError("Q_infinity must be symmetric")
        if symmetric_eigenvalues(q)[0] <= 0:
            raise ValueError("Q_infinity must be positive definite")


class PotentialModel:
    """Base class: dimension, energy/gradient/laplacian, tail moduli."""

    def __init__(self, dim, constants):
        self.dim = int(dim)
        self.constants = constants

    # -- evaluation ---------------------------------------------------------

    def _check(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.dim:
            raise ValueError(
                f"dimension mismatch: expected trailing axis {self.dim}, "
                f"got shape {q.shape}"
            )
        return q

    def energy(self, q):
        raise NotImplementedError

    def gradient(self, q):
        raise NotImplementedError

    def laplacian(self, q, fd_step=1e-4):
        """Trace of the Hessian of U.

        The built-in models override this with their exact expressions; the
        base implementation falls back to a central-difference Laplacian
        (certificates relying on it should widen tolerances to ~1e-4).
        """
        q = self._check(q)
        out = np.zeros(q.shape[:-1])
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = fd_step
            out += (
                self.energy(q + e) - 2.0 * self.energy(q) + self.energy(q - e)
            ) / (fd_step * fd_step)
        return out

    # -- tail moduli --------------------------------------------------------

    def _check_radius(self, r, onset):
        r = float(r)
        if r < onset:
            raise ValueError(
                f"radius {r} below onset {onset}; tail bound not valid there"
            )
        return r

    def tail_modulus(self, r):
        """Closed-form upper bound on sup_{|q|>=r} |grad U(q) - Q_inf q| / |q|."""
        raise NotImplementedError

    def delta_u_bound(self, r):
        """Closed-form upper bound on sup_{|q|>=r} |U - 0.5 q.Q_inf q| / (1+|q|^2)."""
        raise NotImplementedError

    def cutoff_radius(self, rho_star):
        """Smallest radius where the tail modulus drops below rho_star,
        inverted in closed form per model."""
        raise NotImplementedError


def _dissipativity_from_gradient(c_m, c_lin, L, u0, grad0, gamma, lam=None):
    """Convert a gradient coercivity bound into an Assumption-1(iii) pair.

    Given ``<grad U(q), q> >= c_m |q|^2 - c_lin |q|`` and the smooth upper
    bound ``U(q) <= u0 + grad0 |q| + L |q|^2 / 2``, any

        lambda <= min(1/4, (c_m / 2) / (L + gamma^2 / 2))

    leaves a quadratic margin of at least (c_m / 4) |q|^2 in

        0.5 <grad U, q> - lambda (U + gamma^2 |q|^2 / 4),

    and the leftover linear term is absorbed by completing the square:

        A = lambda * u0 + (c_lin / 2 + lambda * grad0)^2 / c_m.

    The dissipativity certificate test is authoritative for this conversion.
    """
    lam_max = min(0.25, 0.5 * c_m / (L + 0.5 * gamma * gamma))
    if lam is None:
        lam = lam_max
    elif lam > lam_max:
        raise ValueError(f"lambda must not exceed the certified {lam_max:.6g}")
    b = 0.5 * c_lin + lam * grad0
    a_const = lam * u0 + b * b / c_m
    return lam, a_const


def multiwell_component(s):
    """Component double-well: (|s|-1)^2/2 outside |s|=1/2, 1/4 - s^2/2 inside."""
    s = np.asarray(s, dtype=float)
    outer = 0.5 * np.square(np.abs(s) - 1.0)
    inner = 0.25 - 0.5 * np.square(s)
    return np.where(np.abs(s) >= 0.5, outer, inner)


def multiwell_component_deriv(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) >= 0.5, s - np.sign(s), -s)


def multiwell_offset(gamma):
    """Per-coordinate dissipativity offset A_1(gamma) of the double-well."""
    g2 = gamma * gamma
    return (g2 * g2 + 6.0 * g2 + 16.0) / (4.0 * (g2 * g2 + 10.0 * g2 + 24.0))


class MultiWellPotential(PotentialModel):
    """Separable multi-well target: U(q) = sum_i v(q_i), 2^d wells at (+-1,...)."""

    def __init__(self, dim, gamma, lam=None):
        lam_max = 1.0 / (4.0 + gamma * gamma)
        if lam is None:
            lam = lam_max
        if not (0.0 < lam <= lam_max):
            raise ValueError(f"multi-well lambda must lie in (0, {lam_max:.6g}]")
        constants = AssumptionConstants(
            L=1.0,
            lam=lam,
            A=dim * multiwell_offset(gamma),
            gamma=gamma,
            Q_infinity=np.eye(dim),
            C_linear=float(np.sqrt(dim)),
            grad_at_zero=0.0,
            U_at_zero=0.25 * dim,
        )
        super().__init__(dim, constants)

    def energy(self, q):
        q = self._check(q)
        return multiwell_component(q).sum(axis=-1)

    def gradient(self, q):
        q = self._check(q)
        return multiwell_component_deriv(q)

    def laplacian(self, q):
        q = self._check(q)
        # v'' = -1 inside |s| < 1/2 and +1 outside (a.e.)
        return np.where(np.abs(q) >= 0.5, 1.0, -1.0).sum(axis=-1)

    def tail_modulus(self, r):
        r = self._check_radius(r, max(1.0, self.constants.C_linear))
        return np.sqrt(self.dim) / r

    def delta_u_bound(self, r):
        # |v(s) - s^2/2| <= 1/4 + |s|, so |U - |q|^2/2| <= d/4 + sqrt(d)|q|;
        # the ratio against 1 + |q|^2 is decreasing for r >= 1.
        r = self._check_radius(r, 1.0)
        d = self.dim
        return (0.25 * d + np.sqrt(d) * r) / (1.0 + r * r)

    def cutoff_radius(self, rho_star):
        root_d = np.sqrt(self.dim)
        return max(1.0, self.constants.C_linear, root_d / rho_star)


class GaussianPotential(PotentialModel):
    """Reference target U(q) = |q|^2 / 2 with exactly known moments."""

    def __init__(self, dim, gamma):
        lam = min(0.25, 2.0 / (2.0 + gamma * gamma))
        constants = AssumptionConstants(
            L=1.0,
            lam=lam,
            A=0.0,
            gamma=gamma,
            Q_infinity=np.eye(dim),
            C_linear=1.0,
            grad_at_zero=0.0,
            U_at_zero=0.0,
        )
        super().__init__(dim, constants)

    def energy(self, q):
        q = self._check(q)
        return 0.5 * np.square(q).sum(axis=-1)

    def gradient(self, q):
        return self._check(q).copy()

    def laplacian(self, q):
        q = self._check(q)
        return np.full(q.shape[:-1], float(self.dim))

    def tail_modulus(self, r):
        self._check_radius(r, 1.0)
        return 0.0

    def delta_u_bound(self, r):
        # U is exactly quadratic with Q_infinity = I.
        self._check_radius(r, 1.0)
        return 0.0

    def cutoff_radius(self, rho_star):
        return max(1.0, self.constants.C_linear)


class LinearRegressionPotential(PotentialModel):
    """Bayesian linear regression with a smoothed L^p regularizer.

    U(q) = |y - X q|^2 / (2 sigma^2) + iota * sum_j (q_j^2 + eps^2)^(p/2),
    which is non-convex for p in (1, 2).
    """

    def __init__(self, X, y, sigma, iota, p, eps, gamma, lam=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be n x d with matching response vector y")
        if sigma <= 0 or iota <= 0:
            raise ValueError("sigma and iota must be positive")
        if not (1.0 < p < 2.0):
            raise ValueError(f"p must lie in (1, 2), got {p}")
        if eps <= 0:
            raise ValueError("eps must be positive (L blows up at eps = 0)")
        d = X.shape[1]
        gram = X.T @ X
        eigs = symmetric_eigenvalues(gram)
        m, M = float(eigs[0]), float(eigs[-1])
        if m <= 0:
            raise ValueError("X^T X must be positive definite (rank-deficient design)")
        self.X, self.y = X, y
        self.sigma, self.iota, self.p, self.eps = float(sigma), float(iota), float(p), float(eps)
        self.gram = gram
        self.m, self.M = m, M
        self.xty = X.T @ y
        sig2 = sigma * sigma
        L = M / sig2 + iota * p * eps ** (p - 2.0)
        u0 = float(y @ y) / (2.0 * sig2) + iota * d * eps ** p
        grad0 = float(np.linalg.norm(self.xty)) / sig2
        c_m = m / sig2
        c_lin = float(np.linalg.norm(self.xty)) / sig2
        lam, a_const = _dissipativity_from_gradient(
            c_m, c_lin, L, u0, grad0, gamma, lam=lam
        )
        constants = AssumptionConstants(
            L=L,
            lam=lam,
            A=a_const,
            gamma=gamma,
            Q_infinity=gram / sig2,
            C_linear=1.0,
            grad_at_zero=grad0,
            U_at_zero=u0,
        )
        super().__init__(d, constants)
        # tail-modulus coefficients of the smoothed L^p remainder
        self.c0_lr = grad0 + iota * p * np.sqrt(d) * eps ** (p - 1.0)
        self.c1_lr = iota * p * d ** (0.5 * (2.0 - p))

    def energy(self, q):
        q = self._check(q)
        resid = self.y - q @ self.X.T
        fit = 0.5 * np.square(resid).sum(axis=-1) / (self.sigma ** 2)
        reg = self.iota * np.power(np.square(q) + self.eps ** 2, 0.5 * self.p).sum(axis=-1)
        return fit + reg

    def gradient(self, q):
        q = self._check(q)
        lin = q @ self.gram / (self.sigma ** 2) - self.xty / (self.sigma ** 2)
        reg = self.iota * self.p * q * np.power(
            np.square(q) + self.eps ** 2, 0.5 * self.p - 1.0
        )
        return lin + reg

    def laplacian(self, q):
        q = self._check(q)
        t2 = np.square(q) + self.eps ** 2
        psi2 = self.p * np.power(t2, 0.5 * self.p - 2.0) * (
            self.eps ** 2 + (self.p - 1.0) * np.square(q)
        )
        base = float(np.trace(self.gram)) / (self.sigma ** 2)
        return base + self.iota * psi2.sum(axis=-1)

    def tail_modulus(self, r):
        r = self._check_radius(r, max(1.0, self.constants.C_linear))
        return lr_tail_modulus(self.c0_lr, self.c1_lr, self.p, r)

    def delta_u_bound(self, r):
        r = self._check_radius(r, 1.0)
        b_norm = float(np.linalg.norm(self.xty)) / self.sigma ** 2
        y_term = float(self.y @ self.y) / (2.0 * self.sigma ** 2)
        return lr_delta_u_bound(
            b_norm, self.iota, self.dim, self.p, self.eps, y_term, r
        )

    def cutoff_radius(self, rho_star):
        # both tail terms are decreasing in R, so inverting them separately
        # and taking the max guarantees the sum is below rho_star
        return max(
            1.0,
            self.constants.C_linear,
            2.0 * self.c0_lr / rho_star,
            (2.0 * self.c1_lr / rho_star) ** (1.0 / (2.0 - self.p)),
        )


def lr_tail_modulus(c0, c1, p, r):
    """Tail modulus bound c0 / r + c1 r^(p-2) of the regression potential."""
    return c0 / r + c1 * r ** (p - 2.0)


def lr_delta_u_bound(b_norm, iota, d, p, eps, y_sq_half_sig, r):
    """Term-wise quadratic-tail bound for the regression potential."""
    return (
        b_norm / r
        + iota * d ** (1.0 - 0.5 * p) * r ** (p - 2.0)
        + (iota * d * eps ** p + y_sq_half_sig) / (r * r)
    )


def tukey_loss(t, t0):
    """Tukey bisquare loss: 1 - (1 - (t/t0)^2)^3 capped at 1 outside |t| <= t0."""
    t = np.asarray(t, dtype=float)
    u2 = np.square(t / t0)
    return np.where(u2 <= 1.0, 1.0 - (1.0 - np.minimum(u2, 1.0)) ** 3, 1.0)


def tukey_dloss(t, t0):
    t = np.asarray(t, dtype=float)
    u2 = np.square(t / t0)
    inner = 6.0 * t / (t0 * t0) * np.square(1.0 - np.minimum(u2, 1.0))
    return np.where(u2 <= 1.0, inner, 0.0)


def tukey_d2loss(t, t0):
    t = np.asarray(t, dtype=float)
    u2 = np.square(t / t0)
    u2c = np.minimum(u2, 1.0)
    inner = 6.0 / (t0 * t0) * (1.0 - u2c) * (1.0 - 5.0 * u2c)
    return np.where(u2 <= 1.0, inner, 0.0)


def tukey_sup_dloss(t0):
    """sup |phi'| of the bisquare loss, attained at t = t0 / sqrt(5)."""
    return 96.0 / (25.0 * np.sqrt(5.0) * t0)


def tukey_sup_d2loss(t0):
    """sup |phi''| = 6 / t0^2, attained at t = 0."""
    return 6.0 / (t0 * t0)


class ClassificationPotential(PotentialModel):
    """Bayesian binary classification with Tukey bisquare loss and ridge term.

    U(q) = (1/n) sum_i phi(y_i - h(<q, x_i>)) + iota |q|^2 / 2, with the
    identity prediction function h(z) = z.  A hook for other prediction
    functions is intentionally not provided.
    """

    def __init__(self, features, labels, iota, t0, gamma, lam=None):
        X = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("features must be n x d with matching labels")
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("labels must be binary in {0, 1}")
        if iota <= 0 or t0 <= 0:
            raise ValueError("iota and t0 must be positive")
        d = X.shape[1]
        self.X, self.y = X, y
        self.iota, self.t0 = float(iota), float(t0)
        b_x = float(np.max(np.linalg.norm(X, axis=1)))
        phi1 = tukey_sup_dloss(t0)
        phi2 = tukey_sup_d2loss(t0)
        h1, h2 = 1.0, 0.0  # identity prediction function
        self.B_x, self.Phi1, self.Phi2, self.H1, self.H2 = b_x, phi1, phi2, h1, h2
        self.C0 = phi1 * h1 * b_x
        self.A_phi = abs(float(tukey_loss(0.0, t0))) + phi1 * (1.0 + 0.0)
        L = iota + (phi2 * h1 * h1 + phi1 * h2) * b_x * b_x
        u0 = float(tukey_loss(y, t0).mean())
        g0 = -np.mean(tukey_dloss(y, t0)[:, None] * X, axis=0)
        grad0 = float(np.linalg.norm(g0))
        # <grad U, q> >= iota |q|^2 - C0 |q| with C0 = Phi1 H1 B_x
        lam, a_const = _dissipativity_from_gradient(
            iota, self.C0, L, u0, grad0, gamma, lam=lam
        )
        constants = AssumptionConstants(
            L=L,
            lam=lam,
            A=a_const,
            gamma=gamma,
            Q_infinity=iota * np.eye(d),
            C_linear=1.0,
            grad_at_zero=grad0,
            U_at_zero=u0,
        )
        super().__init__(d, constants)

    def _margins(self, q):
        return q @ self.X.T  # (..., n)

    def energy(self, q):
        q = self._check(q)
        t = self.y - self._margins(q)
        return tukey_loss(t, self.t0).mean(axis=-1) + 0.5 * self.iota * np.square(q).sum(axis=-1)

    def gradient(self, q):
        q = self._check(q)
        t = self.y - self._margins(q)
        w = tukey_dloss(t, self.t0)  # (..., n)
        return -(w @ self.X) / self.X.shape[0] + self.iota * q

    def laplacian(self, q):
        q = self._check(q)
        t = self.y - self._margins(q)
        w = tukey_d2loss(t, self.t0)
        sq = np.square(self.X).sum(axis=1)
        return self.iota * self.dim + (w @ sq) / self.X.shape[0]

    def tail_modulus(self, r):
        r = self._check_radius(r, max(1.0, self.constants.C_linear))
        return self.C0 / r

    def delta_u_bound(self, r):
        r = self._check_radius(r, 1.0)
        return self.C0 / r + self.A_phi / (r * r)

    def cutoff_radius(self, rho_star):
        return max(1.0, self.constants.C_linear, self.C0 / rho_star)
