import numpy as np
import pytest

from hfhrlab import rng
from hfhrlab.integrators import (
    HFHR,
    KLMC,
    ULA,
    DivergenceError,
    PhasePoint,
    SamplerParams,
    hfhr_step,
    klmc_step,
    log_schedule,
    run_ensemble,
    ula_step,
)
from hfhrlab.potentials import AssumptionConstants, PotentialModel


class FlatPotential(PotentialModel):
    """Zero gradient everywhere; only useful for drift-only step checks."""

    def __init__(self, dim):
        constants = AssumptionConstants(
            L=1.0, lam=0.25, A=1.0, gamma=1.0, Q_infinity=np.eye(dim),
            C_linear=1.0, grad_at_zero=0.0, U_at_zero=0.0,
        )
        super().__init__(dim, constants)

    def energy(self, q):
        return np.zeros(self._check(q).shape[:-1])

    def gradient(self, q):
        return np.zeros_like(self._check(q))

    def laplacian(self, q):
        return np.zeros(self._check(q).shape[:-1])


class InvertedPotential(PotentialModel):
    """U = -|q|^2/2: expanding gradient flow, used to trigger divergence."""

    def __init__(self, dim):
        constants = AssumptionConstants(
            L=1.0, lam=0.25, A=1.0, gamma=1.0, Q_infinity=np.eye(dim),
            C_linear=1.0, grad_at_zero=0.0, U_at_zero=0.0,
        )
        super().__init__(dim, constants)

    def energy(self, q):
        return np.zeros(self._check(q).shape[:-1])

    def gradient(self, q):
        return -self._check(q)

    def laplacian(self, q):
        return np.full(self._check(q).shape[:-1], -float(self.dim))


# --- noise stream contracts ---------------------------------------------------


def test_noise_blocks_distinct_across_indices():
    a = rng.normal_block(7, rng.CH_P, 1, 0, 16, 2)
    assert not np.allclose(a, rng.normal_block(7, rng.CH_P, 2, 0, 16, 2))
    assert not np.allclose(a, rng.normal_block(7, rng.CH_Q, 1, 0, 16, 2))
    assert not np.allclose(a, rng.normal_block(7, rng.CH_P, 1, 1, 16, 2))
    assert not np.allclose(a, rng.normal_block(8, rng.CH_P, 1, 0, 16, 2))
    assert np.allclose(a, rng.normal_block(7, rng.CH_P, 1, 0, 16, 2))


def test_noise_prefix_stable():
    # a chain's rows do not depend on how many rows the block requests
    big = rng.normal_block(3, rng.CH_P, 5, 0, 512, 4)
    small = rng.normal_block(3, rng.CH_P, 5, 0, 100, 4)
    assert np.array_equal(big[:100], small)


def test_noise_steps_uncorrelated():
    m = np.stack([rng.normal_block(7, rng.CH_P, s, 0, 512, 1)[:, 0]
                  for s in range(1, 400)])
    lag1 = np.corrcoef(m[:-1].ravel(), m[1:].ravel())[0, 1]
    assert abs(lag1) < 0.01
    assert abs(m.mean()) < 0.01
    assert abs(m.var() - 1.0) < 0.01


# --- single-step contracts -----------------------------------------------------


def test_hfhr_drift_only_update():
    model = FlatPotential(3)
    z = PhasePoint(np.zeros(3), np.ones(3))
    params = SamplerParams(alpha=0.3, gamma=2.0, eta=0.1, steps=1, chains=1, seed=0)
    out = hfhr_step(z, model, params, (np.zeros(3), np.zeros(3)))
    assert np.allclose(out.q, 0.1 * np.ones(3))
    assert np.allclose(out.p, 0.8 * np.ones(3))


def test_klmc_pure_transport_and_kick(gauss2):
    model = FlatPotential(2)
    params = SamplerParams(alpha=0.0, gamma=2.0, eta=0.1, steps=1, chains=1, seed=0)
    z = PhasePoint(np.array([1.0, 0.0]), np.array([0.5, -0.5]))
    out = klmc_step(z, model, params, np.zeros(2))
    assert np.allclose(out.q, z.q + 0.1 * z.p)
    assert np.allclose(out.p, 0.8 * z.p)
    # gradient kick from rest
    z0 = PhasePoint(np.array([1.0, 2.0]), np.zeros(2))
    out = klmc_step(z0, gauss2, params, np.zeros(2))
    assert np.allclose(out.q, z0.q)
    assert np.allclose(out.p, -gauss2.gradient(z0.q) * 0.1)


def test_ula_examples(gauss1):
    params = SamplerParams(alpha=0.0, gamma=1.0, eta=0.1, steps=1, chains=1, seed=0)
    assert ula_step(np.array([0.7]), FlatPotential(1), params, np.zeros(1))[0] == 0.7
    assert ula_step(np.array([1.0]), gauss1, params, np.zeros(1))[0] == pytest.approx(0.9)


def test_hfhr_alpha_zero_equals_klmc_bitwise(gauss2):
    params = SamplerParams(alpha=0.0, gamma=2.0, eta=1e-3, steps=200, chains=64, seed=11)
    ra = run_ensemble(gauss2, params, sampler=HFHR, recorder=[0, 100, 200])
    rk = run_ensemble(gauss2, params, sampler=KLMC, recorder=[0, 100, 200])
    for qa, qk in zip(ra.positions, rk.positions):
        assert np.array_equal(qa, qk)
    for pa, pk in zip(ra.momenta, rk.momenta):
        assert np.array_equal(pa, pk)


# --- ensemble runner -----------------------------------------------------------


def test_run_ensemble_zero_steps(gauss2):
    params = SamplerParams(alpha=0.1, gamma=2.0, eta=1e-3, steps=0, chains=8, seed=1)
    rec = run_ensemble(gauss2, params, sampler=HFHR, recorder=[0])
    assert rec.steps == [0]
    assert np.array_equal(rec.positions[0], np.zeros((8, 2)))


def test_run_ensemble_deterministic(gauss2):
    params = SamplerParams(alpha=0.1, gamma=2.0, eta=1e-3, steps=50, chains=1, seed=5)
    r1 = run_ensemble(gauss2, params, sampler=HFHR, recorder=[50])
    r2 = run_ensemble(gauss2, params, sampler=HFHR, recorder=[50])
    assert np.array_equal(r1.positions[0], r2.positions[0])


def test_run_ensemble_worker_invariance(gauss2):
    # more chains than one chunk so the merge order is exercised
    params = SamplerParams(alpha=0.1, gamma=2.0, eta=1e-3, steps=40,
                           chains=rng.CHUNK + 100, seed=3)
    base = run_ensemble(gauss2, params, sampler=HFHR, recorder=[0, 40], workers=1)
    for workers in (4, 8):
        other = run_ensemble(gauss2, params, sampler=HFHR, recorder=[0, 40],
                             workers=workers)
        for a, b in zip(base.positions, other.positions):
            assert np.array_equal(a, b)
        for a, b in zip(base.momenta, other.momenta):
            assert np.array_equal(a, b)


def test_divergence_reports_chain_and_step():
    model = InvertedPotential(1)
    params = SamplerParams(alpha=0.0, gamma=1.0, eta=1.0, steps=200, chains=4, seed=2)
    with pytest.raises(DivergenceError) as err:
        run_ensemble(model, params, sampler=ULA, recorder=[200])
    assert 0 <= err.value.chain < 4
    assert 0 < err.value.step <= 200


def test_gaussian_stationary_moments(gauss1):
    """Empirical mean within 3 stderr of 0 and variance within 5% of the exact
    Euler-Maruyama stationary variance (discrete Lyapunov fixed point)."""
    alpha, gamma, eta = 0.1, 2.0, 1e-3
    a = np.array([[1.0 - alpha * eta, eta], [-eta, 1.0 - gamma * eta]])
    q_cov = np.diag([2.0 * alpha * eta, 2.0 * gamma * eta])
    sigma = np.zeros((2, 2))
    for _ in range(200000):
        nxt = a @ sigma @ a.T + q_cov
        if np.max(np.abs(nxt - sigma)) < 1e-15:
            sigma = nxt
            break
        sigma = nxt
    params = SamplerParams(alpha=alpha, gamma=gamma, eta=eta, steps=30000,
                           chains=2000, seed=7)
    rec = run_ensemble(gauss1, params, sampler=HFHR,
                       recorder=[20000, 22500, 25000, 27500, 30000])
    qs = np.concatenate([q[:, 0] for q in rec.positions])
    stderr = qs.std(ddof=1) / np.sqrt(2000 * 5)
    assert abs(qs.mean()) < 3.0 * stderr
    assert abs(qs.var() - sigma[0, 0]) < 0.05 * sigma[0, 0]


def test_ula_stationary_variance(gauss1):
    # exact EM stationary variance of the 1-d Ornstein-Uhlenbeck chain
    eta = 1e-3
    exact = 1.0 / (1.0 - 0.5 * eta)
    params = SamplerParams(alpha=0.0, gamma=1.0, eta=eta, steps=12000,
                           chains=20000, seed=13)
    rec = run_ensemble(gauss1, params, sampler=ULA,
                       recorder=[8000, 10000, 12000])
    qs = np.concatenate([q[:, 0] for q in rec.positions])
    assert abs(qs.var() - exact) < 0.01 * exact


def test_stderr_scaling_with_ensemble_size(gauss1):
    """Doubling the chain count halves the variance of the ensemble mean
    (ratio 2 +- 0.3 over repetitions)."""
    def mean_of_run(chains, seed):
        params = SamplerParams(alpha=0.0, gamma=2.0, eta=0.05, steps=20,
                               chains=chains, seed=seed)
        rec = run_ensemble(gauss1, params, sampler=KLMC, recorder=[20])
        return rec.positions[0][:, 0].mean()

    small = np.array([mean_of_run(32, 1000 + s) for s in range(400)])
    large = np.array([mean_of_run(64, 5000 + s) for s in range(400)])
    ratio = small.var(ddof=1) / large.var(ddof=1)
    assert 1.7 <= ratio <= 2.3


def test_snapshot_csv_schema(tmp_path, gauss2):
    params = SamplerParams(alpha=0.1, gamma=2.0, eta=1e-3, steps=5, chains=3, seed=1)
    rec = run_ensemble(gauss2, params, sampler=HFHR, recorder=[0, 5])
    path = tmp_path / "snap.csv"
    rec.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,chain,q_1,q_2,p_1,p_2"
    assert len(lines) == 1 + 2 * 3


def test_log_schedule_bounds():
    sched = log_schedule(10000, 50)
    assert sched[0] == 0 and sched[-1] == 10000
    assert all(b > a for a, b in zip(sched, sched[1:]))


def test_sampler_params_validation():
    with pytest.raises(ValueError):
        SamplerParams(alpha=-0.1, gamma=2.0, eta=1e-3, steps=1, chains=1, seed=0)
    with pytest.raises(ValueError):
        SamplerParams(alpha=0.0, gamma=0.0, eta=1e-3, steps=1, chains=1, seed=0)


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint(np.array([1.0, np.nan]), np.zeros(2))
    with pytest.raises(ValueError):
        PhasePoint(np.zeros(2), np.zeros(3))


def test_multiwell_stationary_second_moment(mw1):
    """Long HFHR run on the double well reproduces the quadrature second
    moment of the Gibbs marginal within Monte-Carlo error."""
    from hfhrlab.experiments import multiwell_marginal_moment

    params = SamplerParams(alpha=0.2, gamma=2.0, eta=1e-3, steps=40000,
                           chains=2000, seed=29)
    rec = run_ensemble(mw1, params, sampler=HFHR,
                       recorder=[30000, 35000, 40000])
    qs = np.concatenate([q[:, 0] for q in rec.positions])
    target = multiwell_marginal_moment(2)
    fourth = multiwell_marginal_moment(4)
    se = np.sqrt((fourth - target**2) / (2000 * 3)) * 1.6  # snapshot correlation slack
    assert abs((qs**2).mean() - target) <= 3.0 * se + 0.01
