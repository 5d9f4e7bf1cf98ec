import math

import numpy as np
import pytest

from conftest import phase_grid
from hfhrlab.constants import (
    acceleration_report,
    alpha_positivity_threshold,
    baseline_drift_constants,
    build_corrector,
    case_study_constants,
    contraction_rate,
    corrector_rhs,
    drift_matrix_at_infinity,
    generator_on_v0,
    improvement_lhs,
    lyapunov_quadratic_bounds,
    mu_min_max,
    multiwell_case_constants,
    multiwell_corrector_value,
    multiwell_lambda_star,
    solve_r1,
    v0_value,
    corrector_value,
    _sup_over_p,
)
from hfhrlab.linalg import solve_lyapunov, symmetric_eigenvalues


# --- Lyapunov quadratic bounds -------------------------------------------------


def test_mu_closed_form_example():
    lo, hi = mu_min_max(2.0, 0.25)
    assert lo == pytest.approx((5.0 - math.sqrt(17.0)) / 8.0, abs=1e-15)
    assert hi == pytest.approx((5.0 + math.sqrt(17.0)) / 8.0, abs=1e-15)


def test_mu_limit_at_zero_lambda():
    lo, _ = mu_min_max(2.0, 1e-14)
    assert lo == pytest.approx((6.0 - math.sqrt(20.0)) / 8.0, abs=1e-12)


def test_mu_matches_eigensolver_randomly():
    gen = np.random.default_rng(2)
    for _ in range(100):
        gamma = gen.uniform(0.5, 5.0)
        lam = gen.uniform(1e-6, 0.25)
        m = 0.25 * np.array([[gamma**2 * (1.0 - lam), gamma], [gamma, 2.0]])
        eigs = symmetric_eigenvalues(m)
        lo, hi = mu_min_max(gamma, lam)
        assert abs(eigs[0] - lo) <= 1e-12
        assert abs(eigs[-1] - hi) <= 1e-12


def test_quadratic_bounds_c1_c2(mw1):
    spec = lyapunov_quadratic_bounds(2.0, 0.25, 0.0, 0.0, 1.0)
    assert spec.c1 == pytest.approx(0.10961, abs=1e-5)
    # multi-well c2': mu_max + U(0) + L/2 + |grad U(0)|/2 = mu_max + 0.25 + 0.5
    mw_spec = lyapunov_quadratic_bounds(2.0, mw1.constants.lam, 0.25, 0.0, 1.0)
    assert mw_spec.c2_prime == pytest.approx(mw_spec.mu_max + 0.75)
    with pytest.raises(ValueError):
        lyapunov_quadratic_bounds(2.0, 0.3, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("name", ["mw1", "gauss2", "lr6", "bc4"])
def test_v0_sandwich_on_samples(name, request):
    model = request.getfixturevalue(name)
    c = model.constants
    spec = lyapunov_quadratic_bounds(c.gamma, c.lam, c.U_at_zero, c.grad_at_zero, c.L)
    gen = np.random.default_rng(8)
    q = gen.standard_normal((500, model.dim)) * 6.0
    p = gen.standard_normal((500, model.dim)) * 6.0
    v0 = v0_value(model, c.lam, q, p)
    base = 1.0 + model.energy(q) + np.square(q).sum(-1) + np.square(p).sum(-1)
    tol = 1e-9
    assert np.all(spec.c1 * base <= 1.0 + v0 + tol)
    assert np.all(1.0 + v0 <= spec.c2 * base + tol)
    quad = 1.0 + np.square(q).sum(-1) + np.square(p).sum(-1)
    assert np.all(spec.c1_prime * quad <= 1.0 + v0 + tol)
    assert np.all(1.0 + v0 <= spec.c2_prime * quad + tol)


# --- baseline drift -------------------------------------------------------------


def test_baseline_constants_worked_example():
    base = baseline_drift_constants(2.0, 0.25, 0.175, 1.0, 1)
    assert base.K_Delta == pytest.approx(2.5)
    assert base.K_A == pytest.approx(29.65, abs=0.01)
    assert base.J1 == pytest.approx(base.K_A + 2.5)
    assert base.alpha0 == pytest.approx(2.0 * 0.25 / (2.0 * base.J1))
    # lambda_hat at alpha0 hits lambda/2 exactly
    assert base.lambda_hat(base.alpha0) == pytest.approx(0.125, abs=1e-15)
    # alpha = 0 identity
    assert base.lambda_hat(0.0) == 0.25
    assert base.A_alpha(0.0) == 0.175


@pytest.mark.parametrize("name", ["mw1", "gauss2", "lr6", "bc4"])
def test_baseline_drift_inequality_on_grid(name, request):
    model = request.getfixturevalue(name)
    c = model.constants
    base = baseline_drift_constants(c.gamma, c.lam, c.A, c.L, model.dim)
    q, p = phase_grid(model.dim, n_rad=96, n_ang=96)
    v0 = v0_value(model, c.lam, q, p)
    for alpha in (0.0, 0.5 * base.alpha0, base.alpha0):
        lhs = generator_on_v0(model, c.lam, alpha, q, p)
        rhs = c.gamma * (model.dim + base.A_alpha(alpha) - base.lambda_hat(alpha) * v0)
        assert np.max(lhs - rhs) <= 1e-8 * max(1.0, np.abs(rhs).max())


# --- Lyapunov equation and corrector --------------------------------------------


def test_corrector_rhs_worked_example():
    c = corrector_rhs(np.eye(1), 2.0, 0.25)
    assert np.allclose(c, np.diag([2.5, -1.0]))


def test_hand_derived_corrector_matrix():
    b = drift_matrix_at_infinity(np.eye(1), 2.0)
    c = corrector_rhs(np.eye(1), 2.0, 0.25)
    k, res = solve_lyapunov(b, c)
    want = np.array([[-2.875, -1.25], [-1.25, -0.375]])
    assert np.max(np.abs(k - want)) <= 1e-12
    assert res <= 1e-12


def test_lyapunov_integral_representation_cross_check():
    """K = int_0^inf e^{tB^T} C e^{tB} dt, evaluated by matrix-exponential
    quadrature, agrees with the dense solve (independent oracle)."""
    from scipy.linalg import expm

    b = drift_matrix_at_infinity(np.eye(1), 2.0)
    c = corrector_rhs(np.eye(1), 2.0, 0.25)
    k, _ = solve_lyapunov(b, c)
    ts = np.linspace(0.0, 40.0, 4001)
    vals = np.array([expm(t * b.T) @ c @ expm(t * b) for t in ts])
    h = ts[1] - ts[0]
    # composite Simpson over the matrix-valued integrand (minus sign: the
    # integral form solves B^T K + K B = -C for Hurwitz B)
    w = np.ones(len(ts))
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    integral = -(h / 3.0) * np.tensordot(w, vals, axes=1)
    assert np.max(np.abs(integral - k)) < 1e-6


@pytest.mark.parametrize("name", ["mw1", "lr6", "bc4", "gauss2"])
def test_corrector_residual_and_symmetry(name, request):
    model = request.getfixturevalue(name)
    corr = build_corrector(model)
    c_norm = np.linalg.norm(corrector_rhs(model.constants.Q_infinity,
                                          model.constants.gamma,
                                          model.constants.lam))
    assert corr.residual <= 1e-10 * c_norm
    assert np.max(np.abs(corr.K - corr.K.T)) <= 1e-12
    assert 0.0 < corr.c_imp_lower <= 0.375


def test_bc_spectrum_collapses(bc4):
    corr = build_corrector(bc4)
    iota = bc4.iota
    gamma, lam = bc4.constants.gamma, bc4.constants.lam
    want = iota + 0.5 * gamma**2 * (1.0 - lam)
    assert corr.a_min == pytest.approx(want)
    assert corr.a_max == pytest.approx(want)


def test_lr_cutoff_radius_brings_modulus_down(lr6):
    corr = build_corrector(lr6)
    assert lr6.tail_modulus(corr.R0) <= corr.rho_star * (1.0 + 1e-12)
    assert corr.R0 >= max(1.0, lr6.constants.C_linear)


def test_sup_over_p_dominates_samples(mw1):
    corr = build_corrector(mw1)
    lam = mw1.constants.lam
    gen = np.random.default_rng(5)
    q = gen.standard_normal((40, 1)) * 3.0
    sup = _sup_over_p(mw1, lam, corr.K, corr.c_imp_lower, q)
    best = np.full(40, -np.inf)
    for _ in range(400):
        p = gen.standard_normal((40, 1)) * 8.0
        val = improvement_lhs(mw1, lam, corr.K, q, p) + corr.c_imp_lower * v0_value(
            mw1, lam, q, p
        )
        best = np.maximum(best, val)
    assert np.all(sup >= best - 1e-9)
    # the analytic supremum is nearly attained by dense sampling
    assert np.max(sup - best) < 0.5


@pytest.mark.parametrize("name", ["mw1", "lr6", "bc4"])
def test_improvement_inequality_on_grid(name, request):
    model = request.getfixturevalue(name)
    lam = model.constants.lam
    corr = build_corrector(model)
    q, p = phase_grid(model.dim, n_rad=96, n_ang=96, seed=4)
    lhs = improvement_lhs(model, lam, corr.K, q, p)
    rhs = corr.C_imp - corr.c_imp_lower * v0_value(model, lam, q, p)
    assert np.max(lhs - rhs) <= 1e-6 * max(1.0, abs(corr.C_imp))


# --- multi-well explicit corrector ----------------------------------------------


def test_mw_explicit_constants_worked_examples():
    mw = multiwell_case_constants(2.0, 0.25, 1)
    assert mw["B"] == pytest.approx(2.5)
    assert mw["c_imp"] == pytest.approx(2.0 * math.sqrt(2.5) / (2.0 * math.sqrt(2.5) + 2.0))
    assert mw["c_imp"] == pytest.approx(0.6126, abs=2e-4)
    assert mw["A1"] == pytest.approx(0.175)
    # corrector value at gamma = 2, (q, p) = (1, 1), d = 1: 6/8 + 1/4 = 1
    assert multiwell_corrector_value(2.0, np.array([1.0]), np.array([1.0])) == pytest.approx(1.0)
    assert mw["C2_MW"] == pytest.approx(2.0 * mw["C_M_tilde_MW"])
    assert mw["C2_d_MW"] == pytest.approx(6.0 / 4.0)


def test_mw_explicit_identity_and_remainder(mw1):
    """A0 M + A' V0 equals -B|q|^2 - |p|^2 plus a remainder bounded through
    the unit gradient defect."""
    lam = mw1.constants.lam
    gamma = 2.0
    mw = multiwell_case_constants(gamma, lam, 1)
    gen = np.random.default_rng(12)
    q = gen.uniform(-20.0, 20.0, size=(4000, 1))
    p = gen.uniform(-20.0, 20.0, size=(4000, 1))
    lhs = improvement_lhs(mw1, lam, mw["K"], q, p)
    main = -mw["B"] * np.square(q).sum(-1) - np.square(p).sum(-1)
    remainder = lhs - main
    c_q = 2.0 + 0.5 * gamma**2 * (1.0 - lam)
    c_p = 1.0 / gamma + 0.5 * gamma
    bound = 1.0 + c_q * np.abs(q).sum(-1) + c_p * np.abs(p).sum(-1)
    assert np.all(np.abs(remainder) <= bound + 1e-9)


def test_mw_explicit_improvement_inequality(mw1):
    lam = mw1.constants.lam
    mw = multiwell_case_constants(2.0, lam, 1)
    q, p = phase_grid(1, n_rad=128, n_ang=64, seed=6)
    lhs = improvement_lhs(mw1, lam, mw["K"], q, p)
    rhs = mw["C_imp_d"] - mw["c_imp"] * v0_value(mw1, lam, q, p)
    assert np.max(lhs - rhs) <= 1e-9


def test_mw_lambda_star_bisection():
    ls = multiwell_lambda_star(2.0)
    assert 0.0 < ls <= 0.25
    for lam in (ls * 0.25, ls * 0.5, ls * 0.999):
        c = multiwell_case_constants(2.0, lam, 1)
        assert c["delta_MW"] > 2.0 * lam
    above = multiwell_case_constants(2.0, min(0.25, ls * 1.01), 1)
    assert above["delta_MW"] <= 2.0 * min(0.25, ls * 1.01) + 1e-9


# --- drift expansion -------------------------------------------------------------


def test_alpha_pos_branches():
    # C_lambda = 0 branch: min(1, lam / (2 max(1, |delta|)))
    lam = 0.2
    assert alpha_positivity_threshold(lam, lam, 0.0) == pytest.approx(lam / 2.0)
    # quadratic branch keeps the expansion above lam/2 and hits it at the root
    lam, delta, c_l = 0.1, 0.5, 2.0
    a_pos = alpha_positivity_threshold(lam, delta, c_l)
    expansion = lambda a: lam + delta * a - c_l * a * a
    grid = np.linspace(1e-9, a_pos, 500)
    assert np.all(expansion(grid) >= 0.5 * lam - 1e-12)
    if a_pos < 1.0:
        assert expansion(a_pos) == pytest.approx(0.5 * lam)


def test_lambda_alpha_exceeds_lambda_on_gain_window(mw1):
    ledger = acceleration_report(mw1, lam=multiwell_lambda_star(2.0) / 2)
    exp = ledger.expansion
    assert exp.delta > 0
    hi = min(exp.alpha1, exp.delta / exp.C_lambda)
    grid = np.linspace(hi * 1e-3, hi * 0.999, 200)
    vals = [exp.lambda_alpha_lower(a) for a in grid]
    assert all(v > exp.lam for v in vals)


# --- contraction rate -------------------------------------------------------------


def test_r1_satisfies_coverage_equation():
    lam, alpha, gamma, L, d, a_const = 0.125, 0.0, 2.0, 1.0, 1, 0.175
    r1 = solve_r1(lam, alpha, gamma, L, d, a_const)
    eta0 = 8.0 / (L * r1**2)
    theta = (1.0 + eta0) * L / gamma**2
    w = 96.0 * (d + a_const) / (5.0 * lam * (1.0 - 2.0 * lam) * gamma**2)
    assert r1**2 * ((1.0 + theta) ** 2 + gamma**-2) == pytest.approx(w, rel=1e-12)


def test_branch_values_worked_example():
    rate = contraction_rate(0.25, 0.0, 2.0, 1.0, 1, 0.175, 0.5)
    assert rate.branch_lyapunov == pytest.approx(0.0625)
    # if the Lyapunov branch were active it would contribute gamma/384 * 0.0625
    assert 2.0 / 384.0 * 0.0625 == pytest.approx(3.255e-4, abs=1e-6)
    assert rate.c == pytest.approx(2.0 / 384.0 * min(
        rate.branch_lyapunov, rate.branch_metric_2, rate.branch_metric_3))
    assert rate.epsilon == pytest.approx(4.0 * rate.c / (2.0 * (1 + 0.175)))


def test_branch3_recovers_kld_shape():
    rate = contraction_rate(0.25, 0.0, 2.0, 1.0, 1, 0.175, kappa_adjust=0.999)
    shape = math.sqrt(rate.Lambda_alpha) * math.exp(-rate.Lambda_alpha)
    assert rate.branch_metric_3 == pytest.approx(0.999 * shape)


def test_rate_monotone_in_kappa_adjust():
    vals = [contraction_rate(0.125, 0.0, 2.0, 1.0, 1, 0.175, k).c
            for k in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_alpha_zero_recovery():
    r0 = contraction_rate(0.125, 0.0, 2.0, 1.0, 1, 0.175, 0.5)
    r_small = contraction_rate(0.125, 1e-12, 2.0, 1.0, 1, 0.175, 0.5)
    assert r0.c == pytest.approx(r_small.c, rel=1e-9)
    assert r0.Lambda_alpha == pytest.approx(r_small.Lambda_alpha, rel=1e-9)


# --- acceleration ledger -----------------------------------------------------------


def test_kappa_and_c3star_formulas():
    # kappa at L=1, delta=0.5, gamma=2, lambda=0.1
    assert 1.0 * (0.5 + 2.0 * 0.1) / (768.0 * 2.0) == pytest.approx(4.557e-4, abs=1e-6)
    # c3* = (1/2)(1 - 1/(2 Lambda0)) c_Lambda at Lambda0=2, c_Lambda=0.4
    assert 0.5 * (1.0 - 0.25) * 0.4 == pytest.approx(0.15)


def test_ledger_positivity_at_half_lambda_star(mw1):
    lam = multiwell_lambda_star(2.0) / 2.0
    ledger = acceleration_report(mw1, lam=lam)
    exp = ledger.expansion
    assert exp.delta > 2.0 * lam  # delta_MW > gamma lambda
    assert ledger.kappa > 0
    assert ledger.kappa_global is not None and ledger.kappa_global > 0
    assert exp.alpha1 > 0
    assert ledger.alpha_metric_acc is not None and ledger.alpha_metric_acc > 0
    assert ledger.alpha_global is not None and ledger.alpha_global > 0
    assert ledger.c2 == pytest.approx(ledger.gamma + ledger.c3)
    assert ledger.c3 < ledger.c3_star
    d = ledger.to_dict()
    assert d["kappa_global"] > 0


def test_ledger_json_round_trip(mw1):
    import json

    ledger = acceleration_report(mw1, with_w2=False)
    payload = json.dumps(ledger.to_dict())
    assert "mu_min" in payload


def test_case_study_dispatch(lr6, bc4):
    lr = case_study_constants("lr", model=lr6)
    assert lr["lambda_star"] > 0
    assert lr["eta"] > 0
    bc = case_study_constants("bc", model=bc4)
    assert bc["lambda_star"] > 0
    mw = case_study_constants("mw", gamma=2.0, d=1)
    assert mw["lambda_star"] == pytest.approx(multiwell_lambda_star(2.0))
    with pytest.raises(ValueError):
        case_study_constants("nope")


def test_generator_matches_monte_carlo_definition():
    """Independent oracle for the analytic generator: one Euler-Maruyama step
    gives (E[V0(z_eta)] - V0(z))/eta = L_alpha V0(z) + O(eta)."""
    from hfhrlab.potentials import GaussianPotential, MultiWellPotential

    eta, n = 0.005, 2_000_000
    cases = [
        (GaussianPotential(2, 2.0), np.array([0.7, -0.4]), np.array([0.2, 1.1])),
        (MultiWellPotential(2, 2.0), np.array([0.8, -1.6]), np.array([-0.5, 0.3])),
    ]
    gen = np.random.default_rng(0)
    for model, q, p in cases:
        lam = model.constants.lam
        g = model.constants.gamma
        for alpha in (0.0, 0.15):
            grad = model.gradient(q)
            xi_q = gen.standard_normal((n, q.size))
            xi_p = gen.standard_normal((n, q.size))
            qn = q + (p - alpha * grad) * eta + np.sqrt(2 * alpha * eta) * xi_q
            pn = p + (-g * p - grad) * eta + np.sqrt(2 * g * eta) * xi_p
            vals = (v0_value(model, lam, qn, pn)
                    - float(v0_value(model, lam, q, p))) / eta
            mc, se = vals.mean(), vals.std(ddof=1) / np.sqrt(n)
            exact = float(generator_on_v0(model, lam, alpha, q, p))
            assert abs(mc - exact) <= 3.0 * se + 0.03 * (1.0 + abs(exact))


def test_improvement_lhs_matches_finite_differences(mw1):
    """A0 M + A' V0 recomputed with numeric gradients of M and V0."""
    corr = build_corrector(mw1)
    lam = mw1.constants.lam
    g = mw1.constants.gamma
    gen = np.random.default_rng(3)
    h = 1e-6
    for _ in range(50):
        q = gen.standard_normal(1) * 3.0
        p = gen.standard_normal(1) * 3.0
        hv = np.array([h])

        def m_val(qq, pp):
            return float(corrector_value(corr.K, qq, pp))

        def v_val(qq, pp):
            return float(v0_value(mw1, lam, qq, pp))

        dm_dq = (m_val(q + hv, p) - m_val(q - hv, p)) / (2 * h)
        dm_dp = (m_val(q, p + hv) - m_val(q, p - hv)) / (2 * h)
        dv_dq = (v_val(q + hv, p) - v_val(q - hv, p)) / (2 * h)
        grad = float(mw1.gradient(q)[0])
        fd = (float(p[0]) * dm_dq + (-g * float(p[0]) - grad) * dm_dp
              - grad * dv_dq)
        exact = float(improvement_lhs(mw1, lam, corr.K, q, p))
        assert abs(fd - exact) <= 1e-5 * (1.0 + abs(exact))
