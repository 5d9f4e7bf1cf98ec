"""The explicit constant calculus: Lyapunov bounds, baseline drift constants,
the quadratic corrector from a Lyapunov matrix equation, contraction-rate
branches, and the full acceleration ledger.

Conventions.  The baseline Lyapunov function is

    V0(q, p) = U(q) + (gamma^2/4) ((1-lam)|q|^2) + (gamma/2) <q, p> + |p|^2 / 2,

whose pure-quadratic part has the 2x2 coefficient matrix
M = (1/4) [[gamma^2 (1-lam), gamma], [gamma, 2]] per coordinate pair.  The
generator of the dynamics with resolution alpha splits as
A0 + alpha A' + alpha Lap_q + gamma Lap_p with A' = -grad U . grad_q.

Two Lambda conventions coexist deliberately: the master contraction theorem
uses Lambda = L_eff R1^2 / 8 with the cutoff radius R1, while the
metric-branch acceleration analysis uses the dimension-free
Lambda = J2 L_eff / lam with the metric weight frozen at alpha = 0.  The
ledger records both.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import operator_norm, solve_lyapunov, symmetric_eigenvalues
from .potentials import MultiWellPotential, multiwell_offset


# ---------------------------------------------------------------------------
# Lyapunov function V0 and its quadratic bounds
# ---------------------------------------------------------------------------


def mu_min_max(gamma, lam):
    """Closed-form extreme eigenvalues of the quadratic-part matrix M."""
    a = gamma * gamma * (1.0 - lam)
    root = math.sqrt((a - 2.0) ** 2 + 4.0 * gamma * gamma)
    return 0.125 * (a + 2.0 - root), 0.125 * (a + 2.0 + root)


@dataclass(frozen=True)
class LyapunovSpec:
    """Quadratic sandwich constants of V0.

    c1 (1 + U + |q|^2 + |p|^2) <= 1 + V0 <= c2 (...), and the purely
    quadratic second-moment bounds with c1', c2' (the latter absorbs
    U(0), L/2 and |grad U(0)|/2).
    """

    gamma: float
    lam: float
    mu_min: float
    mu_max: float
    c1: float
    c2: float
    c1_prime: float
    c2_prime: float


def lyapunov_quadratic_bounds(gamma, lam, u0, grad0, L):
    if not (0.0 < lam <= 0.25):
        raise ValueError(f"lambda must lie in (0, 1/4], got {lam}")
    mu_lo, mu_hi = mu_min_max(gamma, lam)
    return LyapunovSpec(
        gamma=gamma,
        lam=lam,
        mu_min=mu_lo,
        mu_max=mu_hi,
        c1=min(1.0, mu_lo),
        c2=max(1.0, mu_hi),
        c1_prime=min(1.0, mu_lo),
        c2_prime=max(1.0, mu_hi) + u0 + 0.5 * L + 0.5 * grad0,
    )


def v0_value(model, lam, q, p):
    g = model.constants.gamma
    u = model.energy(q)
    qq = np.square(q).sum(axis=-1)
    pp = np.square(p).sum(axis=-1)
    qp = (q * p).sum(axis=-1)
    return u + 0.25 * g * g * (1.0 - lam) * qq + 0.5 * g * qp + 0.5 * pp


def generator_on_v0(model, lam, alpha, q, p):
    """Pointwise L_alpha V0 using exact gradients and Hessian traces."""
    g = model.constants.gamma
    grad = model.gradient(q)
    gq = grad + 0.5 * g * g * (1.0 - lam) * q + 0.5 * g * p  # grad_q V0
    gp = p + 0.5 * g * q                                     # grad_p V0
    lap_q = model.laplacian(q) + 0.5 * g * g * model.dim * (1.0 - lam)
    drift_q = ((p - alpha * grad) * gq).sum(axis=-1)
    drift_p = ((-g * p - grad) * gp).sum(axis=-1)
    return drift_q + drift_p + alpha * lap_q + g * model.dim


# ---------------------------------------------------------------------------
# Baseline drift constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineDrift:
    """Perturbation constants of the baseline drift inequality.

    L_alpha V0 <= gamma (d + A_alpha - lambda_hat_alpha V0) with
    lambda_hat_alpha = lam - (J1/gamma) alpha, valid down to lam/2 for
    alpha <= alpha0.
    """

    gamma: float
    lam: float
    A: float
    K_A: float
    K_Delta: float
    J1: float
    alpha0: float

    def lambda_hat(self, alpha):
        return self.lam - self.J1 / self.gamma * alpha

    def A_alpha(self, alpha):
        return self.A + self.J1 / self.gamma * alpha


def baseline_drift_constants(gamma, lam, A, L, d):
    spec = lyapunov_quadratic_bounds(gamma, lam, 0.0, 0.0, L)
    k_a = (0.25 * gamma ** 4 * (1.0 - lam) ** 2 + 0.25 * gamma ** 2) / spec.c1
    k_d = L * d + 0.5 * gamma * gamma * d * (1.0 - lam)
    j1 = k_a + k_d
    return BaselineDrift(
        gamma=gamma, lam=lam, A=A, K_A=k_a, K_Delta=k_d, J1=j1,
        alpha0=0.5 * gamma * lam / j1,
    )


# ---------------------------------------------------------------------------
# Quadratic corrector
# ---------------------------------------------------------------------------


def drift_matrix_at_infinity(q_inf, gamma):
    d = q_inf.shape[0]
    top = np.hstack([np.zeros((d, d)), np.eye(d)])
    bot = np.hstack([-q_inf, -gamma * np.eye(d)])
    return np.vstack([top, bot])


def corrector_rhs(q_inf, gamma, lam):
    """Hessian of the quadratic form driving the Lyapunov equation.

    The form subtracts from the interaction drift its own limiting quadratic
    and the coercive comparison term, leaving blocks

        C_qq = 2 Q^2 + gamma^2 (1-lam) Q - Q - (gamma^2/2)(1-lam) I,
        C_qp = (gamma/2) (Q - I),   C_pp = -I.
    """
    d = q_inf.shape[0]
    g2 = gamma * gamma
    c_qq = (
        2.0 * q_inf @ q_inf
        + g2 * (1.0 - lam) * q_inf
        - q_inf
        - 0.5 * g2 * (1.0 - lam) * np.eye(d)
    )
    c_qp = 0.5 * gamma * (q_inf - np.eye(d))
    top = np.hstack([c_qq, c_qp])
    bot = np.hstack([c_qp.T, -np.eye(d)])
    return np.vstack([top, bot])


@dataclass(frozen=True)
class CorrectorSpec:
    """Quadratic corrector M(z) = z^T K z / 2 and its derived constants."""

    K: np.ndarray
    residual: float
    C_M: float
    C_Delta: float
    a_min: float
    a_max: float
    a_lower: float       # coercivity floor of the comparison quadratic
    a_upper: float
    rho_star: float
    R0: float
    delta_U_R0: float
    c_imp_lower: float
    C_imp: float

    @property
    def blocks(self):
        d = self.K.shape[0] // 2
        return (
            self.K[:d, :d], self.K[:d, d:],
            self.K[d:, :d], self.K[d:, d:],
        )


def corrector_value(K, q, p):
    z = np.concatenate([q, p], axis=-1)
    return 0.5 * ((z @ K) * z).sum(axis=-1)


def improvement_lhs(model, lam, K, q, p):
    """A0 M + A' V0 for the quadratic corrector M(z) = z^T K z / 2."""
    g = model.constants.gamma
    d = model.dim
    grad = model.gradient(q)
    k_qq, k_qp, k_pq, k_pp = K[:d, :d], K[:d, d:], K[d:, :d], K[d:, d:]
    mq = q @ k_qq.T + p @ k_qp.T   # grad_q M
    mp = q @ k_pq.T + p @ k_pp.T   # grad_p M
    a0 = (p * mq).sum(axis=-1) + ((-g * p - grad) * mp).sum(axis=-1)
    aprime = (
        -np.square(grad).sum(axis=-1)
        - 0.5 * g * g * (1.0 - lam) * (grad * q).sum(axis=-1)
        - 0.5 * g * (grad * p).sum(axis=-1)
    )
    return a0 + aprime


def ball_directions(dim, count, seed=0):
    """Deterministic unit directions: signed axes first, then seeded draws."""
    dirs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        dirs.append(e)
        dirs.append(-e)
    if len(dirs) < count:
        gen = np.random.Generator(np.random.Philox(key=seed))
        extra = gen.standard_normal((count - len(dirs), dim))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        dirs.extend(extra)
    return np.array(dirs[:count]) if count <= len(dirs) else np.array(dirs)


def _sup_over_p(model, lam, K, c_imp, q_points):
    """sup_p of (A0 M + A' V0 + c_imp V0) at each q, exact in p.

    For fixed q the expression is a quadratic in p with curvature
    H = (K_qp + K_qp^T) - 2 gamma K_pp + c_imp I.  The construction makes H
    negative definite; that is asserted rather than assumed.
    """
    g = model.constants.gamma
    d = model.dim
    k_qq, k_qp, k_pq, k_pp = K[:d, :d], K[:d, d:], K[d:, :d], K[d:, d:]
    h = (k_qp + k_qp.T) - 2.0 * g * k_pp + c_imp * np.eye(d)
    if symmetric_eigenvalues(h)[-1] >= 0:
        raise RuntimeError(
            "p-curvature of the improvement form is not negative definite; "
            "the supremum over momenta is infinite"
        )
    grad = model.gradient(q_points)
    lin = (
        q_points @ k_qq.T
        - g * (q_points @ k_pq.T)
        - grad @ k_pp.T
        - 0.5 * g * grad
        + 0.5 * c_imp * g * q_points
    )
    const = (
        -(grad * (q_points @ k_pq.T)).sum(axis=-1)
        - np.square(grad).sum(axis=-1)
        - 0.5 * g * g * (1.0 - lam) * (grad * q_points).sum(axis=-1)
        + c_imp * (model.energy(q_points) + 0.25 * g * g * (1.0 - lam)
                   * np.square(q_points).sum(axis=-1))
    )
    h_inv = np.linalg.solve(h, lin.T).T
    return const - 0.5 * (lin * h_inv).sum(axis=-1)


def _c_imp_supremum(model, lam, K, c_imp, r0, n_radial=512, n_angular=32):
    """Numerical supremum over the compact region |q| <= R0 (documented as
    numerical, not exact): analytic maximization in p, grid in q, then a
    derivative-free polish from the best grid points.

    The radial grid is dual-scale: linear up to radius ~40 where the
    certificate grids live, geometric beyond (R0 can be huge when the tail
    modulus decays slowly), so neither scale is undersampled.
    """
    from scipy import optimize

    d = model.dim
    near = min(r0, 40.0)
    radii = np.linspace(0.0, near, n_radial)
    if r0 > near:
        radii = np.unique(np.concatenate([
            radii, np.geomspace(near, r0, n_radial // 4)
        ]))
    dirs = ball_directions(d, max(n_angular, 2 * d)) if d > 1 else np.array([[1.0], [-1.0]])
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    vals = _sup_over_p(model, lam, K, c_imp, pts)
    order = np.argsort(vals)[::-1]
    best = float(vals[order[0]])

    def neg(qflat):
        q = np.asarray(qflat)
        nrm = np.linalg.norm(q)
        if nrm > r0:
            q = q * (r0 / nrm)
        return -float(_sup_over_p(model, lam, K, c_imp, q[None, :])[0])

    for idx in order[:3]:
        res = optimize.minimize(neg, pts[idx], method="Powell",
                                options={"maxiter": 200 * d, "xtol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def build_corrector(model, gamma=None, lam=None, r_search_max=1e6):
    """Assemble the corrector for a model satisfying the asymptotic-linearity
    assumption: solve the Lyapunov equation for K, derive the coercivity
    window, invert the tail modulus for the cutoff radius R0, and certify the
    improvement constants."""
    gamma = model.constants.gamma if gamma is None else gamma
    lam = model.constants.lam if lam is None else lam
    q_inf = np.asarray(model.constants.Q_infinity, dtype=float)
    eigs = symmetric_eigenvalues(q_inf)
    if eigs[0] <= 0 or gamma <= 0:
        raise ValueError(
            f"drift matrix not Hurwitz: lambda_min(Q_inf) = {eigs[0]}, gamma = {gamma}"
        )
    b = drift_matrix_at_infinity(q_inf, gamma)
    c_b1 = corrector_rhs(q_inf, gamma, lam)
    K, residual = solve_lyapunov(b, c_b1)
    d = model.dim
    k_pq, k_pp = K[d:, :d], K[d:, d:]

    a_min = float(eigs[0]) + 0.5 * gamma * gamma * (1.0 - lam)
    a_max = float(eigs[-1]) + 0.5 * gamma * gamma * (1.0 - lam)
    root_min = math.sqrt((a_min - 1.0) ** 2 + gamma * gamma)
    root_max = math.sqrt((a_max - 1.0) ** 2 + gamma * gamma)
    a_lower = 0.25 * (a_min + 1.0 - root_min)
    a_upper = 0.25 * (a_max + 1.0 + root_max)

    lin_coef = (
        2.0 * (operator_norm(k_pq) + operator_norm(k_pp))
        + 4.0 * float(eigs[-1])
        + gamma * gamma * abs(1.0 - lam)
        + gamma
    )
    rho_star = 0.5 * (-lin_coef + math.sqrt(lin_coef ** 2 + 1.25 * a_lower))

    onset = max(1.0, model.constants.C_linear)
    try:
        r0 = float(model.cutoff_radius(rho_star))
    except NotImplementedError:
        r0 = _invert_tail_modulus(model, rho_star, onset, r_search_max)
    if model.tail_modulus(r0) > rho_star * (1.0 + 1e-12):
        raise RuntimeError(
            f"cutoff radius R0 = {r0:g} does not bring the tail modulus "
            f"below rho_star = {rho_star:.3e}"
        )
    delta_u = float(model.delta_u_bound(r0))
    c_imp = 0.375 * (a_min + 1.0 - root_min) / (a_max + 1.0 + root_max + 8.0 * delta_u)
    c_big = _c_imp_supremum(model, lam, K, c_imp, r0)
    return CorrectorSpec(
        K=K,
        residual=residual,
        C_M=0.5 * operator_norm(K),
        C_Delta=2.0 * d * operator_norm(K),
        a_min=a_min,
        a_max=a_max,
        a_lower=a_lower,
        a_upper=a_upper,
        rho_star=rho_star,
        R0=r0,
        delta_U_R0=delta_u,
        c_imp_lower=c_imp,
        C_imp=c_big,
    )


def _invert_tail_modulus(model, rho_star, onset, r_max):
    """Smallest radius >= onset where the tail modulus drops below rho_star.

    The built-in models have decreasing closed-form moduli, so bisection on
    [onset, r_max] suffices once a valid upper end is found.
    """
    if model.tail_modulus(onset) <= rho_star:
        return onset
    hi = onset
    while model.tail_modulus(hi) > rho_star:
        hi *= 2.0
        if hi > r_max:
            raise RuntimeError(
                f"tail modulus never drops below rho_star = {rho_star:.3e} "
                f"within R <= {r_max:g}; asymptotic linearity is effectively violated"
            )
    lo = hi / 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if model.tail_modulus(mid) <= rho_star:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi


# ---------------------------------------------------------------------------
# Drift expansion of the refined Lyapunov function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftExpansion:
    """First-order drift gain delta and its quadratic penalty C_lambda.

    lambda_alpha >= lam + delta alpha - C_lambda alpha^2 for
    alpha in (0, alpha1], with alpha1 = min(alpha0, 1, alpha_star, alpha_pos).
    """

    lam: float
    delta: float
    C_lambda: float
    C1: float
    C2: float
    C_M_tilde: float
    alpha_star: float
    alpha_pos: float
    alpha1: float
    gamma: float
    A: float
    c_imp_lower: float
    provable_gain: bool

    def lambda_alpha_lower(self, alpha):
        return self.lam + self.delta * alpha - self.C_lambda * alpha * alpha

    def A_alpha_prime(self, alpha):
        extra = self.C1 + alpha * self.C2 + self.C_M_tilde * (self.lam + self.c_imp_lower)
        return self.A + alpha / self.gamma * extra


def alpha_positivity_threshold(lam, delta, c_lambda):
    """Largest certified alpha keeping lam + delta a - C_lambda a^2 >= lam/2."""
    if c_lambda > 0:
        return min(1.0, (delta + math.sqrt(delta * delta + 2.0 * c_lambda * lam))
                   / (2.0 * c_lambda))
    return min(1.0, lam / (2.0 * max(1.0, abs(delta))))


def drift_expansion(model, corrector, baseline, lyap,
                    c1_override=None, delta_override=None,
                    c_lambda_override=None, c1_const_override=None,
                    c2_const_override=None, c_m_override=None):
    """Combine corrector and baseline constants into the drift expansion.

    The ``*_override`` hooks let a case study substitute its sharper explicit
    constants (used by the multi-well specialization) while keeping the
    alpha-threshold logic in one place.
    """
    gamma, lam = baseline.gamma, baseline.lam
    L = model.constants.L
    d = model.dim
    c1 = lyap.c1 if c1_override is None else c1_override
    c_m = corrector.C_M if c_m_override is None else c_m_override
    ctilde = c_m / c1
    k_qq = corrector.K[:d, :d] if corrector is not None else None
    if c1_const_override is not None:
        c1_const = c1_const_override
    else:
        c1_const = (
            corrector.C_imp
            + gamma * float(np.trace(corrector.K[d:, d:]))
            + baseline.K_Delta
        )
    if c2_const_override is not None:
        c2_const = c2_const_override
    else:
        c2_const = abs(float(np.trace(k_qq))) + 3.0 * c_m * (
            L + model.constants.grad_at_zero
        ) / c1
    c_imp = corrector.c_imp_lower if delta_override is None else None
    delta = (c_imp - lam * ctilde) if delta_override is None else delta_override
    c_lambda = (
        c2_const + ctilde * (corrector.c_imp_lower if corrector is not None else 0.0)
        if c_lambda_override is None
        else c_lambda_override
    )
    alpha_star = c1 / (2.0 * c_m)
    alpha_pos = alpha_positivity_threshold(lam, delta, c_lambda)
    alpha1 = min(baseline.alpha0, 1.0, alpha_star, alpha_pos)
    return DriftExpansion(
        lam=lam,
        delta=delta,
        C_lambda=c_lambda,
        C1=c1_const,
        C2=c2_const,
        C_M_tilde=ctilde,
        alpha_star=alpha_star,
        alpha_pos=alpha_pos,
        alpha1=alpha1,
        gamma=gamma,
        A=baseline.A,
        c_imp_lower=(corrector.c_imp_lower if corrector is not None else delta + lam * ctilde),
        provable_gain=delta > 0,
    )


# ---------------------------------------------------------------------------
# Contraction rate (master theorem)
# ---------------------------------------------------------------------------

BRANCH_LYAPUNOV = "lyapunov"
BRANCH_METRIC_2 = "metric-2"
BRANCH_METRIC_3 = "metric-3"


def solve_r1(lam, alpha, gamma, L, d, d_const):
    """Cutoff radius at equality in the large-distance coverage condition.

    The condition couples R1 to itself through the slack eta0 = 8/(L R1^2)
    inside the metric weight, but expands to the scalar equation
    a2 x^2 + (b2 - w) x + c2 = 0 in x = R1^2.  The larger root is the stable
    branch (R1 grows with d + D); when no root exists the condition holds for
    every radius and the minimizer of the left side is returned.
    """
    if not (0.0 < lam <= 0.25):
        raise ValueError(f"lambda must lie in (0, 1/4], got {lam}")
    l_eff = (1.0 + alpha * gamma) * L
    w = 96.0 * (d + d_const) / (5.0 * lam * (1.0 - 2.0 * lam) * gamma * gamma)
    a = l_eff / (gamma * gamma)
    b = 8.0 * l_eff / (L * gamma * gamma)
    a2 = (1.0 + a) ** 2 + 1.0 / (gamma * gamma)
    b2 = 2.0 * (1.0 + a) * b
    c2 = b * b
    disc = (w - b2) ** 2 - 4.0 * a2 * c2
    if w <= b2 or disc < 0.0:
        warnings.warn("coverage condition holds for all radii; using its minimizer")
        x = math.sqrt(c2 / a2)
    else:
        x = ((w - b2) + math.sqrt(disc)) / (2.0 * a2)
    return math.sqrt(x)


@dataclass(frozen=True)
class RateReport:
    """Certified contraction rate and its three branches."""

    lam: float
    alpha: float
    gamma: float
    L: float
    d: int
    d_const: float
    kappa_adjust: float
    R1: float
    eta0: float
    theta: float
    Lambda_alpha: float
    branch_lyapunov: float
    branch_metric_2: float
    branch_metric_3: float
    c: float
    active_branch: str
    epsilon: float

    @property
    def k1(self):
        return self.theta / (1.0 + self.gamma * (1.0 + self.theta))

    @property
    def k2(self):
        return math.sqrt((self.theta + 1.0) ** 2 + 1.0 / self.gamma ** 2)


def contraction_rate(lam, alpha, gamma, L, d, d_const, kappa_adjust=0.5):
    """Evaluate the explicit rate c(lam) = (gamma/384) min of the branches.

    ``d_const`` is the drift offset of the Lyapunov function in force
    (A_alpha for the baseline V0, A'_alpha for the corrected one).
    """
    if not (0.0 < kappa_adjust < 1.0):
        raise ValueError("kappa_adjust must lie in (0, 1)")
    r1 = solve_r1(lam, alpha, gamma, L, d, d_const)
    l_eff = (1.0 + alpha * gamma) * L
    eta0 = 8.0 / (L * r1 * r1)
    theta = (1.0 + eta0) * l_eff / (gamma * gamma)
    lam_big = l_eff * r1 * r1 / 8.0
    decay = math.sqrt(lam_big) * math.exp(-lam_big)
    branches = {
        BRANCH_LYAPUNOV: lam * l_eff / (gamma * gamma),
        BRANCH_METRIC_2: decay * l_eff / (gamma * gamma),
        BRANCH_METRIC_3: kappa_adjust * decay,
    }
    active = min(branches, key=branches.get)
    c = gamma / 384.0 * branches[active]
    if c == 0.0:
        # e^{-Lambda} can underflow float64 for extreme constants; the true
        # rate is positive but below the smallest denormal
        warnings.warn(
            f"certified rate underflows at Lambda = {lam_big:.4g}; reporting c = 0"
        )
    return RateReport(
        lam=lam, alpha=alpha, gamma=gamma, L=L, d=d, d_const=d_const,
        kappa_adjust=kappa_adjust, R1=r1, eta0=eta0, theta=theta,
        Lambda_alpha=lam_big,
        branch_lyapunov=branches[BRANCH_LYAPUNOV],
        branch_metric_2=branches[BRANCH_METRIC_2],
        branch_metric_3=branches[BRANCH_METRIC_3],
        c=c, active_branch=active,
        epsilon=4.0 * c / (gamma * (d + d_const)),
    )


def alpha_smallness_bound(gamma, L, eta0, kappa_adjust):
    """Largest alpha keeping the net dissipation of the distance drift positive."""
    return (1.0 - kappa_adjust) * eta0 / (1.0 + eta0) * gamma / L


# ---------------------------------------------------------------------------
# Acceleration ledger
# ---------------------------------------------------------------------------


def h_of_lambda(x):
    return math.sqrt(x) * math.exp(-x)


def h_second_derivative(x):
    return (x * x - x - 0.25) / x ** 1.5 * math.exp(-x)


def _golden_max(fun, lo, hi, tol=1e-10):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    return max(fc, fd)


def metric_branch_second_derivative_sup(lambda0):
    """sup |h''| over [lambda0/2, lambda0] by bracketing on a fine grid and
    golden-section refinement around the best cell (|h''| need not be
    unimodal: it vanishes where Lambda^2 - Lambda - 1/4 does)."""
    lo, hi = 0.5 * lambda0, lambda0
    grid = np.linspace(lo, hi, 4097)
    vals = np.abs([h_second_derivative(x) for x in grid])
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    refined = _golden_max(lambda x: abs(h_second_derivative(x)), a, b)
    endpoints = max(abs(h_second_derivative(lo)), abs(h_second_derivative(hi)))
    return max(float(vals[i]), refined, endpoints)


def j2_metric_constant(gamma, lam, L, d, A):
    """Dimension-free metric constant with the weight frozen at alpha = 0."""
    theta0 = L / (gamma * gamma)
    return 12.0 / 5.0 * (1.0 + 2.0 * theta0 + 2.0 * theta0 * theta0) * (d + A) / (
        gamma * gamma * (1.0 - 2.0 * lam)
    )


@dataclass
class AccelerationLedger:
    """Every constant of the acceleration analysis, JSON-serializable.

    Metric-branch fields are None with an explanation when their
    preconditions fail; ``alpha_branch_acc`` is None when the Lyapunov branch
    is not strictly active at alpha = 0.
    """

    case: str
    gamma: float
    lam: float
    d: int
    L: float
    A: float
    corrector_route: str
    lyapunov: LyapunovSpec = None
    baseline: BaselineDrift = None
    corrector: CorrectorSpec = None
    expansion: DriftExpansion = None
    rate0: RateReport = None
    kappa: float = None
    C_prime: float = None
    D_gap: float = None
    J2: float = None
    Lambda0_metric: float = None
    theta_master: float = None
    theta0_metric: float = None
    M_h: float = None
    c_Lambda: float = None
    c3_star: float = None
    c3: float = None
    c2: float = None
    alpha_metric_acc: float = None
    alpha_branch: float = None
    alpha_branch_acc: float = None
    alpha_global: float = None
    kappa_global: float = None
    alpha_w2: float = None
    c0_w2: float = None
    kappa_w2: float = None
    C_rho_unif: float = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        exp, base, lyap, corr = self.expansion, self.baseline, self.lyapunov, self.corrector
        out = {
            "case": self.case,
            "gamma": self.gamma,
            "lambda": self.lam,
            "d": self.d,
            "L": self.L,
            "A": self.A,
            "corrector_route": self.corrector_route,
            "mu_min": lyap.mu_min,
            "mu_max": lyap.mu_max,
            "c1": lyap.c1,
            "c2": lyap.c2,
            "c1_prime": lyap.c1_prime,
            "c2_prime": lyap.c2_prime,
            "K_A": base.K_A,
            "K_Delta": base.K_Delta,
            "J1": base.J1,
            "alpha0": base.alpha0,
            "c_imp": exp.c_imp_lower,
            "C_M_tilde": exp.C_M_tilde,
            "delta": exp.delta,
            "C_lambda": exp.C_lambda,
            "C1": exp.C1,
            "C2": exp.C2,
            "alpha_star": exp.alpha_star,
            "alpha_pos": exp.alpha_pos,
            "alpha1": exp.alpha1,
            "provable_gain": exp.provable_gain,
            "R1": self.rate0.R1,
            "eta0": self.rate0.eta0,
            "theta_master": self.theta_master,
            "theta0_metric": self.theta0_metric,
            "Lambda_master": self.rate0.Lambda_alpha,
            "branch_lyapunov": self.rate0.branch_lyapunov,
            "branch_metric_2": self.rate0.branch_metric_2,
            "branch_metric_3": self.rate0.branch_metric_3,
            "active_branch": self.rate0.active_branch,
            "c0": self.rate0.c,
            "epsilon": self.rate0.epsilon,
            "kappa": self.kappa,
            "C_prime": self.C_prime,
            "delta_minus_gamma_lambda": self.D_gap,
            "J2": self.J2,
            "Lambda0_metric": self.Lambda0_metric,
            "M_h": self.M_h,
            "c_Lambda": self.c_Lambda,
            "c3_star": self.c3_star,
            "c3": self.c3,
            "c2_metric": self.c2,
            "alpha_metric_acc": self.alpha_metric_acc,
            "alpha_branch": self.alpha_branch,
            "alpha_branch_acc": self.alpha_branch_acc,
            "alpha_global": self.alpha_global,
            "kappa_global": self.kappa_global,
            "alpha_w2": self.alpha_w2,
            "c0_w2": self.c0_w2,
            "kappa_w2": self.kappa_w2,
            "C_rho_unif": self.C_rho_unif,
            "notes": self.notes,
        }
        if corr is not None:
            out.update({
                "corrector_residual": corr.residual,
                "C_M": corr.C_M,
                "C_Delta": corr.C_Delta,
                "a_min": corr.a_min,
                "a_max": corr.a_max,
                "rho_star": corr.rho_star,
                "R0": corr.R0,
                "delta_U_R0": corr.delta_U_R0,
                "C_imp": corr.C_imp,
                "K": corr.K.tolist(),
            })
        return {k: _jsonify(v) for k, v in out.items()}


def _jsonify(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def branch_gap(lam, alpha, gamma, L, d, d_const, kappa_adjust):
    r = contraction_rate(lam, alpha, gamma, L, d, d_const, kappa_adjust)
    return min(r.branch_metric_2, r.branch_metric_3) - r.branch_lyapunov


def acceleration_report(model, lam=None, kappa_adjust=0.5, case=None,
                        use_explicit_multiwell=True, n_branch_scan=256,
                        with_w2=True):
    """Assemble the full acceleration ledger for a model.

    For the multi-well target the explicit diagonal corrector and its
    closed-form improvement constant are used by default (they are sharper
    than the generic Lyapunov-equation route); every other model goes through
    :func:`build_corrector`.
    """
    consts = model.constants
    gamma = consts.gamma
    requested = lam
    lam = consts.lam if lam is None else lam
    L, d, A = consts.L, model.dim, consts.A
    lyap = lyapunov_quadratic_bounds(gamma, lam, consts.U_at_zero,
                                     consts.grad_at_zero, L)
    base = baseline_drift_constants(gamma, lam, A, L, d)

    is_mw = isinstance(model, MultiWellPotential)
    if is_mw and use_explicit_multiwell:
        mw = multiwell_case_constants(gamma, lam, d)
        corr = None
        exp = drift_expansion(
            model, None, base, lyap,
            delta_override=mw["delta_MW"],
            c_lambda_override=mw["C_lambda_MW"],
            c1_const_override=mw["C1_MW"],
            c2_const_override=mw["C2_MW"],
            c_m_override=mw["C_M"],
        )
        route = "multiwell-explicit"
    else:
        corr = build_corrector(model, gamma, lam)
        exp = drift_expansion(model, corr, base, lyap)
        route = "lyapunov-equation"

    rate0 = contraction_rate(lam, 0.0, gamma, L, d, A, kappa_adjust)
    ledger = AccelerationLedger(
        case=case or type(model).__name__, gamma=gamma, lam=lam, d=d, L=L, A=A,
        corrector_route=route, lyapunov=lyap, baseline=base, corrector=corr,
        expansion=exp, rate0=rate0,
        theta_master=rate0.theta,
        theta0_metric=L / (gamma * gamma),
    )
    if requested is not None and requested > consts.lam:
        ledger.notes.append(
            f"requested lambda = {requested:g} exceeds the model's certified "
            f"dissipativity rate {consts.lam:g}; ledger values use the "
            "requested rate, the dissipativity certificate does not cover it"
        )
    kappa = L * (exp.delta + gamma * lam) / (768.0 * gamma)
    c_prime = L / (384.0 * gamma) * (1.0 + gamma) * exp.C_lambda
    ledger.kappa = kappa
    ledger.C_prime = c_prime
    ledger.D_gap = exp.delta - gamma * lam

    lyap_cap = min(exp.alpha1, 1.0, kappa / c_prime if c_prime > 0 else 1.0)

    # metric branch: needs delta > gamma lam and Lambda0 > 1/2
    if exp.delta <= gamma * lam:
        ledger.notes.append(
            "metric branch absent: delta <= gamma*lambda, no certified gap"
        )
    else:
        j2 = j2_metric_constant(gamma, lam, L, d, A)
        lambda0 = j2 * L / lam
        ledger.J2 = j2
        ledger.Lambda0_metric = lambda0
        if lambda0 <= 0.5:
            ledger.notes.append(
                f"metric branch absent: Lambda0 = {lambda0:.3g} <= 1/2"
            )
        else:
            d_gap = ledger.D_gap
            m_h = metric_branch_second_derivative_sup(lambda0)
            c_lam = j2 * L * d_gap / (8.0 * lam * lam)
            s_h = 1.0 - 1.0 / (2.0 * lambda0)
            c3_star = 0.5 * s_h * c_lam
            c3 = 0.5 * c3_star  # any value below c3_star certifies; half is the policy
            candidates = [exp.alpha1, 1.0, 4.0 * lam / d_gap,
                          8.0 * lam * lam * h_of_lambda(lambda0) * s_h
                          / (j2 * L * d_gap * m_h)]
            if exp.C_lambda > 0:
                candidates += [d_gap / (4.0 * exp.C_lambda),
                               math.sqrt(lam / (2.0 * exp.C_lambda))]
            ledger.M_h = m_h
            ledger.c_Lambda = c_lam
            ledger.c3_star = c3_star
            ledger.c3 = c3
            ledger.c2 = gamma + c3
            ledger.alpha_metric_acc = min(candidates)

    # branch-activity scan on a geometric alpha grid
    gap0 = branch_gap(lam, 0.0, gamma, L, d, A, kappa_adjust)
    if gap0 > 0:
        grid = np.geomspace(exp.alpha1 * 1e-6, exp.alpha1, n_branch_scan)
        alpha_branch = 0.0
        for a in grid:
            la = exp.lambda_alpha_lower(a)
            if la <= 0 or la > 0.25:
                break
            if branch_gap(la, a, gamma, L, d, exp.A_alpha_prime(a), kappa_adjust) <= 0:
                break
            alpha_branch = float(a)
        ledger.alpha_branch = alpha_branch if alpha_branch > 0 else None
        if alpha_branch > 0:
            ledger.alpha_branch_acc = min(alpha_branch, 1.0,
                                          kappa / c_prime if c_prime > 0 else 1.0)
    else:
        ledger.notes.append(
            "Lyapunov branch not strictly active at alpha = 0; "
            "alpha_branch_acc not applicable (the direct Lyapunov-branch lower "
            "bound still holds up to min(alpha1, 1, kappa/C'))"
        )

    # global gain
    c0 = rate0.c
    gains = [kappa]
    if ledger.c2 is not None:
        gains += [c0 * ledger.c2, c0 * ledger.c3]
    if exp.delta > gamma * lam and ledger.alpha_metric_acc is not None:
        branch_cap = ledger.alpha_branch_acc if ledger.alpha_branch_acc else lyap_cap
        ledger.alpha_global = min(branch_cap, ledger.alpha_metric_acc)
        ledger.kappa_global = min(gains)
    elif ledger.alpha_branch_acc is not None:
        ledger.alpha_global = ledger.alpha_branch_acc
        ledger.kappa_global = kappa
    else:
        ledger.notes.append("no certified global acceleration for these parameters")

    if with_w2 and ledger.alpha_global is not None:
        _fill_w2_fields(ledger, model, kappa_adjust)
    return ledger


def _fill_w2_fields(ledger, model, kappa_adjust, n_lambda=9):
    """Uniform transfer constant to the plain quadratic Wasserstein distance.

    Extremal profile quantities are evaluated on a small lambda grid over
    [lam/2, lam + delta alpha_w2] at alpha = alpha_w2 with the conservative
    epsilon floor; this is a numerical evaluation of the paper-style
    extremal constants, adequate for the diagnostic ledger.
    """
    from .coupling import build_profile

    exp = ledger.expansion
    gamma, L, d = ledger.gamma, ledger.L, ledger.d
    alpha_w2 = min(ledger.alpha_global, exp.alpha_pos)
    ledger.alpha_w2 = alpha_w2
    ledger.c0_w2 = 0.5 * ledger.rate0.c
    ledger.kappa_w2 = 0.5 * ledger.kappa_global
    a_plus = exp.A_alpha_prime(alpha_w2)
    eps_floor = 4.0 * ledger.rate0.c / (gamma * (d + a_plus))
    c_q = 0.0
    if ledger.corrector is not None:
        _, _, k_pq, k_pp = ledger.corrector.blocks
        c_q = alpha_w2 * (operator_norm(k_pp) + operator_norm(k_pq))
    lam_lo, lam_hi = 0.5 * ledger.lam, min(0.25, ledger.lam + exp.delta * alpha_w2)
    r1_plus, cr_minus, gstar_minus, c0_minus, k1_minus = 0.0, np.inf, np.inf, np.inf, np.inf
    for lam in np.linspace(lam_lo, lam_hi, n_lambda):
        try:
            prof = build_profile(
                model, lam=lam, alpha=alpha_w2, d_const=a_plus,
                kappa_adjust=kappa_adjust, epsilon=eps_floor, C_quadratic=c_q,
            )
        except Exception as exc:  # profile may fail at extreme lambda
            ledger.notes.append(f"W2 profile at lambda={lam:.4g} failed: {exc}")
            return
        r1_plus = max(r1_plus, prof.R1)
        cr_minus = min(cr_minus, prof.c_r)
        gstar_minus = min(gstar_minus, prof.g_star)
        c0_minus = min(c0_minus, prof.c0)
        k1_minus = min(k1_minus, prof.k1)
    if cr_minus <= 0.0 or c0_minus <= 0.0:
        ledger.notes.append(
            "W2 transfer constant not representable: the profile floor "
            "underflows at these parameters"
        )
        return
    c_v_unif = 2.0 / ledger.lyapunov.c1_prime
    ledger.C_rho_unif = (
        max(r1_plus / (k1_minus ** 2 * gstar_minus * cr_minus),
            4.0 * c_v_unif / c0_minus) / eps_floor
    )


# ---------------------------------------------------------------------------
# Case-study constants
# ---------------------------------------------------------------------------


def multiwell_case_constants(gamma, lam, d):
    """Closed-form corrector constants of the separable multi-well target.

    The explicit corrector is M(q, p) = a|q|^2 + b|p|^2 with
    a = (2 + gamma^2)/(4 gamma), b = 1/(2 gamma); it cancels the limiting
    interaction drift exactly, leaving a remainder bounded through the
    per-coordinate gradient defect |v'(s) - s| <= 1.
    """
    g2 = gamma * gamma
    a = (2.0 + g2) / (4.0 * gamma)
    b = 1.0 / (2.0 * gamma)
    big_b = 1.0 + 0.5 * g2 * (1.0 - lam)
    c_imp = 2.0 * math.sqrt(big_b) / (2.0 * math.sqrt(big_b) + gamma)
    c1_mw = mu_min_max(gamma, lam)[0]
    ctilde = (2.0 + g2) / (4.0 * gamma * c1_mw)
    c2_mw = 2.0 * ctilde
    c2_d_mw = (2.0 + g2) * d / (2.0 * gamma)
    delta_mw = c_imp - lam * ctilde
    c_lambda_mw = c2_mw + ctilde * c_imp
    c_q = 2.0 + 0.5 * g2 * (1.0 - lam)
    c_p = 1.0 / gamma + 0.5 * gamma
    c_of = c_q * c_q / (2.0 * big_b) + 0.5 * c_p * c_p
    c_imp_d = (c_of + 0.25 * c_imp) * d
    k_delta = d + 0.5 * g2 * d * (1.0 - lam)  # L = 1 for the multi-well target
    k_matrix = np.diag([2.0 * a] * d + [2.0 * b] * d)
    return {
        "a": a,
        "b": b,
        "K": k_matrix,
        "B": big_b,
        "c_imp": c_imp,
        "c1_MW": c1_mw,
        "C_M": a,  # ||K||_op / 2 = max(2a, 2b) / 2 = a
        "C_M_tilde_MW": ctilde,
        "C2_MW": c2_mw,
        "C2_d_MW": c2_d_mw,
        "delta_MW": delta_mw,
        "C_lambda_MW": c_lambda_mw,
        "C_imp_d": c_imp_d,
        "C1_MW": c_imp_d + gamma * (2.0 * b * d) + k_delta,
        "A1": multiwell_offset(gamma),
    }


def multiwell_corrector_value(gamma, q, p):
    g2 = gamma * gamma
    return ((2.0 + g2) / (4.0 * gamma) * np.square(q).sum(axis=-1)
            + 1.0 / (2.0 * gamma) * np.square(p).sum(axis=-1))


def multiwell_lambda_star(gamma, tol=1e-12):
    """Largest lambda with delta_MW > gamma lambda, found by a sign scan of
    F(lambda) = c_imp - (gamma + C_M_tilde) lambda followed by bisection
    (the feasibility lemma proves existence but gives no closed form)."""

    def f(lam):
        c = multiwell_case_constants(gamma, lam, 1)
        return c["c_imp"] - (gamma + c["C_M_tilde_MW"]) * lam

    lam_hi = 0.25
    if f(lam_hi) > 0:
        return lam_hi
    grid = np.linspace(1e-9, lam_hi, 1025)
    lo = grid[0]
    if f(lo) <= 0:
        raise RuntimeError(f"delta_MW <= gamma*lambda even as lambda -> 0 at gamma={gamma}")
    hi = lam_hi
    for x in grid[1:]:
        if f(x) <= 0:
            hi = x
            break
        lo = x
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def _feasibility_lambda_star(gamma, m_inf, m_sup, c_b1_norm_bound, bar_lambda,
                             delta_u_plus):
    """Shared body of the regression / classification feasibility lemmas."""
    eta = 0.5 * (gamma - math.sqrt(max(gamma * gamma - 4.0 * m_inf, 0.0)))
    c_b = 1.0 + gamma / (2.0 * math.sqrt(m_inf)) + math.sqrt(m_sup) + 1.0 / math.sqrt(m_inf)
    c1 = mu_min_max(gamma, bar_lambda)[0]
    ctilde_plus = c_b * c_b / (2.0 * eta) * c_b1_norm_bound / (2.0 * c1)
    a_minus = m_inf + 0.5 * gamma * gamma * (1.0 - bar_lambda)
    a_plus = m_sup + 0.5 * gamma * gamma
    num = a_minus + 1.0 - math.sqrt((a_minus - 1.0) ** 2 + gamma * gamma)
    den = a_plus + 1.0 + math.sqrt((a_plus - 1.0) ** 2 + gamma * gamma) + 8.0 * delta_u_plus
    cimp_minus = 0.375 * num / den
    lam_star = min(bar_lambda, cimp_minus / (gamma + ctilde_plus))
    return {
        "eta": eta,
        "C_B": c_b,
        "c1_bar": c1,
        "a_minus": a_minus,
        "a_plus": a_plus,
        "C_M_tilde_plus": ctilde_plus,
        "c_imp_minus": cimp_minus,
        "lambda_star": lam_star,
        "delta_U_plus": delta_u_plus,
    }


def lr_case_constants(model):
    """Explicit feasibility constants of the regression case study."""
    gamma = model.constants.gamma
    sig2 = model.sigma ** 2
    m_inf = model.m / sig2
    m_sup = model.M / sig2
    bar_lambda = min(0.25, 0.5 * m_inf)
    r = max(1.0, model.constants.C_linear)
    out = _feasibility_lambda_star(
        gamma, m_inf, m_sup,
        c_b1_norm_bound=2.0 * (1.0 + gamma + m_sup + 0.5 * gamma * gamma),
        bar_lambda=bar_lambda,
        delta_u_plus=float(model.delta_u_bound(r)),
    )
    out.update({
        "m_infinity": m_inf,
        "M_infinity": m_sup,
        "bar_lambda": bar_lambda,
        "C_B1_plus": 2.0 * (1.0 + gamma + m_sup + 0.5 * gamma * gamma),
        "c0_LR": model.c0_lr,
        "c1_LR": model.c1_lr,
    })
    return out


def bc_case_constants(model):
    """Explicit feasibility constants of the classification case study."""
    gamma = model.constants.gamma
    iota = model.iota
    bar_lambda = min(0.25, 0.5 * iota)
    r = max(1.0, model.constants.C_linear)
    out = _feasibility_lambda_star(
        gamma, iota, iota,
        c_b1_norm_bound=2.0 * (1.0 + gamma + iota + 0.5 * gamma * gamma),
        bar_lambda=bar_lambda,
        delta_u_plus=float(model.delta_u_bound(r)),
    )
    out.update({
        "iota": iota,
        "bar_lambda": bar_lambda,
        "C_B1_plus": 2.0 * (1.0 + gamma + iota + 0.5 * gamma * gamma),
        "C0": model.C0,
        "A_phi": model.A_phi,
    })
    return out


def lr_cutoff_radius(model, rho_star):
    """Closed-form inversion of the regression tail modulus."""
    p = model.p
    return max(1.0, model.constants.C_linear, model.c0_lr / rho_star,
               (model.c1_lr / rho_star) ** (1.0 / (2.0 - p)))


def bc_cutoff_radius(model, rho_star):
    return max(1.0, model.constants.C_linear, model.C0 / rho_star)


def case_study_constants(case, model=None, gamma=None, lam=None, d=1):
    """Specialized constant tables for the three case studies."""
    if case == "mw":
        gamma = gamma if gamma is not None else model.constants.gamma
        lam = lam if lam is not None else (
            model.constants.lam if model is not None else 1.0 / (4.0 + gamma * gamma)
        )
        d = model.dim if model is not None else d
        out = multiwell_case_constants(gamma, lam, d)
        out["lambda_star"] = multiwell_lambda_star(gamma)
        return out
    if case == "lr":
        return lr_case_constants(model)
    if case == "bc":
        return bc_case_constants(model)
    raise ValueError(f"unknown case {case!r} (expected mw, lr or bc)")
