"""Reflection/synchronous cutoff coupling of two HFHR copies, the concave
distance profile, and decay measurement of the Lyapunov-weighted semimetric.

Both copies are driven by the same position noise; the second copy's
momentum noise is mirrored across the effective velocity difference
R = dq + dp / gamma whenever |R| exceeds the cutoff xi (reflection), and
copied unchanged below the cutoff (synchronous).  The control indicator and
the reflection direction are evaluated at the pre-step state, the canonical
explicit-Euler discretization of the continuous-time construction.

The phase distance is r(z, z') = theta |dq| + |dq + dp / gamma| with the
metric weight theta = (1 + eta0) L_eff(alpha) / gamma^2, and the semimetric
is rho = f(r) (1 + eps V(z) + eps V(z')) for the concave profile f.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .constants import contraction_rate, alpha_smallness_bound, v0_value
from .integrators import hfhr_step_arrays, DivergenceError, DIVERGENCE_THRESHOLD
from .linalg import cumulative_simpson


@dataclass(frozen=True)
class CouplingParams:
    """Cutoff coupling parameters; construction enforces the alpha-smallness
    condition that keeps the distance drift strictly dissipative."""

    alpha: float
    gamma: float
    eta: float
    xi: float
    eta0: float
    kappa_adjust: float
    epsilon: float
    theta: float
    L: float

    def __post_init__(self):
        bound = alpha_smallness_bound(self.gamma, self.L, self.eta0, self.kappa_adjust)
        if self.alpha > bound + 1e-15:
            raise ValueError(
                f"alpha = {self.alpha} violates the smallness condition "
                f"alpha <= (1 - kappa_adjust) eta0/(1+eta0) gamma/L = {bound:.6g}"
            )


def phase_distance(z, z_prime, theta, gamma):
    """r = theta |dq| + |dq + dp/gamma|, batched over leading axes."""
    dq = np.asarray(z[0], dtype=float) - np.asarray(z_prime[0], dtype=float)
    dp = np.asarray(z[1], dtype=float) - np.asarray(z_prime[1], dtype=float)
    if dq.shape != dp.shape:
        raise ValueError("mismatched phase-point shapes")
    r_vec = dq + dp / gamma
    return theta * np.linalg.norm(dq, axis=-1) + np.linalg.norm(r_vec, axis=-1)


def metric_equivalence_constants(theta, gamma):
    """k1, k2 with k1 |z - z'| <= r <= k2 |z - z'|."""
    k1 = theta / (1.0 + gamma * (1.0 + theta))
    k2 = math.sqrt((theta + 1.0) ** 2 + 1.0 / gamma ** 2)
    return k1, k2


class ProfileError(RuntimeError):
    pass


@dataclass
class ProfileSpec:
    """Tabulated concave distance profile on [0, R1], flat beyond R1."""

    R1: float
    grid: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    g: np.ndarray
    f: np.ndarray
    theta: float
    gamma: float
    eta0: float
    epsilon: float
    rate_c: float
    C_bar_V: float

    @property
    def c_r(self):
        return float(self.phi[-1])  # inf of the decreasing phi

    @property
    def g_star(self):
        return float(self.g[-1])  # inf of the decreasing g

    @property
    def c0(self):
        return float(self.f[-1])  # plateau value f(R1)

    @property
    def k1(self):
        return metric_equivalence_constants(self.theta, self.gamma)[0]

    @property
    def k2(self):
        return metric_equivalence_constants(self.theta, self.gamma)[1]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.grid, self.f, left=0.0, right=self.f[-1])


def _profile_tables(r1, l_eff, eta0, gamma, epsilon, c_bar_v, rate_c, n_grid):
    if n_grid % 2:
        n_grid += 1
    grid = np.linspace(0.0, r1, n_grid + 1)
    h = grid[1] - grid[0]
    decay = (1.0 + eta0) / 8.0 * l_eff + 0.5 * gamma * gamma * epsilon * c_bar_v
    phi = np.exp(-decay * np.square(grid))
    big_phi = cumulative_simpson(phi, h)
    # the correction integrand c Phi / phi is evaluated in log space: phi can
    # underflow while the certified rate keeps the product of order one
    with np.errstate(divide="ignore", over="ignore"):
        log_ratio = np.log(rate_c) + np.log(big_phi) + decay * np.square(grid)
        ratio = np.exp(np.minimum(log_ratio, 709.0))
    g = 1.0 - 2.25 * gamma * cumulative_simpson(ratio, h)
    f = cumulative_simpson(phi * g, h)
    return grid, phi, big_phi, g, f


def build_profile(model, lam=None, alpha=0.0, d_const=None, kappa_adjust=0.5,
                  epsilon=None, rate_c=None, C_quadratic=0.0, n_grid=4096,
                  validate=True):
    """Construct the concave profile adapted to the model's constants.

    ``d_const`` is the Lyapunov drift offset (defaults to the potential's A),
    ``rate_c`` the target contraction rate (defaults to the certified
    c(lambda)); ``C_quadratic`` carries the momentum-gradient norm of any
    quadratic addition to V0 into the gradient constant.

    Raises :class:`ProfileError` when the correction factor drops below 1/2
    (rate too large for the profile) or when the tables fail the
    monotonicity/concavity validation.
    """
    consts = model.constants
    gamma, L, d = consts.gamma, consts.L, model.dim
    lam = consts.lam if lam is None else lam
    d_const = consts.A if d_const is None else d_const
    rate = contraction_rate(lam, alpha, gamma, L, d, d_const, kappa_adjust)
    c = rate.c if rate_c is None else rate_c
    eps = rate.epsilon if epsilon is None else epsilon
    l_eff = (1.0 + alpha * gamma) * L
    k1, _ = metric_equivalence_constants(rate.theta, gamma)
    c_bar_v = max(1.0, 1.0 / (2.0 * rate.theta)) + C_quadratic / (gamma * k1)
    grid, phi, big_phi, g, f = _profile_tables(
        rate.R1, l_eff, rate.eta0, gamma, eps, c_bar_v, c, n_grid
    )
    prof = ProfileSpec(
        R1=rate.R1, grid=grid, phi=phi, Phi=big_phi, g=g, f=f,
        theta=rate.theta, gamma=gamma, eta0=rate.eta0, epsilon=eps,
        rate_c=c, C_bar_V=c_bar_v,
    )
    if validate:
        validate_profile(prof)
    return prof


def validate_profile(prof, concavity_tol=1e-12):
    if prof.g_star < 0.5:
        raise ProfileError(
            f"g_star = {prof.g_star:.6g} < 1/2: rate c = {prof.rate_c:.3e} "
            "too large for the profile construction"
        )
    df = np.diff(prof.f)
    if np.any(df < -1e-15 * max(1.0, prof.c0)):
        raise ProfileError("profile f is not nondecreasing")
    d2 = np.diff(df)
    if np.any(d2 > concavity_tol * max(1.0, prof.c0)):
        raise ProfileError("profile f is not concave on the grid")


def profile_refinement_change(model, n_grid=4096, **kwargs):
    """|f(R1)| change under grid doubling (Richardson-style convergence check)."""
    coarse = build_profile(model, n_grid=n_grid, validate=False, **kwargs)
    fine = build_profile(model, n_grid=2 * n_grid, validate=False, **kwargs)
    return abs(coarse.c0 - fine.c0)


def semimetric(z, z_prime, profile, lyapunov_values=None, epsilon=None):
    """rho = f(r) (1 + eps V(z) + eps V(z')); V values are supplied by the
    caller (use epsilon = 0 or omit them for the pure profile distance)."""
    eps = profile.epsilon if epsilon is None else epsilon
    r = phase_distance(z, z_prime, profile.theta, profile.gamma)
    weight = 1.0
    if eps != 0.0 and lyapunov_values is not None:
        v, v_prime = lyapunov_values
        weight = 1.0 + eps * v + eps * v_prime
    return profile(r) * weight


@dataclass
class CoupledPair:
    """One coupled pair of phase points with the cached coupling geometry."""

    q: np.ndarray
    p: np.ndarray
    q_prime: np.ndarray
    p_prime: np.ndarray

    def effective_difference(self, gamma):
        return (self.q - self.q_prime) + (self.p - self.p_prime) / gamma

    def reflection_geometry(self, gamma, xi):
        """Unit direction e and indicator chi = 1{|R| >= xi}; at |R| = 0 the
        first canonical basis vector breaks the tie."""
        r_vec = self.effective_difference(gamma)
        norm = float(np.linalg.norm(r_vec))
        if norm > 0:
            e = r_vec / norm
        else:
            e = np.zeros_like(r_vec)
            e[0] = 1.0
        return e, (1.0 if norm >= xi else 0.0)


def reflect_noise(xi_p, e, chi):
    """(I - 2 chi e e^T) xi_p applied row-wise."""
    proj = (xi_p * e).sum(axis=-1, keepdims=True)
    return xi_p - 2.0 * chi[..., None] * proj * e


def coupled_step_arrays(q, p, q2, p2, model, alpha, gamma, eta, xi, xi_q, xi_p,
                        step=0):
    """Advance a batch of coupled pairs one step; geometry uses the pre-step
    state."""
    r_vec = (q - q2) + (p - p2) / gamma
    norms = np.linalg.norm(r_vec, axis=-1, keepdims=True)
    e = np.where(norms > 0, r_vec / np.where(norms > 0, norms, 1.0), 0.0)
    zero_rows = (norms[..., 0] == 0)
    if np.any(zero_rows):
        e[zero_rows] = 0.0
        e[zero_rows, 0] = 1.0
    chi = (norms[..., 0] >= xi).astype(float)
    xi_p2 = xi_p - 2.0 * chi[..., None] * (xi_p * e).sum(axis=-1, keepdims=True) * e
    q_new, p_new = hfhr_step_arrays(q, p, model, alpha, gamma, eta, xi_q, xi_p, step)
    q2_new, p2_new = hfhr_step_arrays(q2, p2, model, alpha, gamma, eta, xi_q, xi_p2, step)
    return q_new, p_new, q2_new, p2_new


def coupled_step(pair, model, params, noise):
    """Single-pair convenience wrapper around the batched kernel."""
    xi_q, xi_p = noise
    q, p, q2, p2 = coupled_step_arrays(
        pair.q[None], pair.p[None], pair.q_prime[None], pair.p_prime[None],
        model, params.alpha, params.gamma, params.eta, params.xi,
        np.asarray(xi_q)[None], np.asarray(xi_p)[None],
    )
    return CoupledPair(q[0], p[0], q2[0], p2[0])


@dataclass
class DecayRecord:
    times: np.ndarray
    mean_rho: np.ndarray
    stderr_rho: np.ndarray
    mean_r: np.ndarray
    mean_w2_proxy: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("time,mean_rho,stderr,mean_r,mean_W2_proxy\n")
            for row in zip(self.times, self.mean_rho, self.stderr_rho,
                           self.mean_r, self.mean_w2_proxy):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def default_cutoff(profile):
    """xi = 1e-4 R1: the cutoff error is linear in xi, so this keeps it well
    below the statistical noise of any feasible ensemble size."""
    return 1e-4 * profile.R1


def run_coupled_ensemble(model, profile, pairs, steps, eta, alpha, seed,
                         kappa_adjust=0.5, xi=None, epsilon=None,
                         snapshots=None, init_offset=None, init_scale=1.0,
                         identical_start=False):
    """Simulate an ensemble of coupled pairs and record semimetric decay.

    Copy one starts from a Gaussian cloud, copy two from an independent cloud
    of the same law shifted by ``init_offset`` (default: 3 in the first
    coordinate); ``identical_start`` clones copy one instead.  Returns a
    :class:`DecayRecord` with physical times step * eta.
    """
    gamma = model.constants.gamma
    d = model.dim
    xi = default_cutoff(profile) if xi is None else xi
    eps = profile.epsilon if epsilon is None else epsilon
    CouplingParams(
        alpha=alpha, gamma=gamma, eta=eta, xi=xi, eta0=profile.eta0,
        kappa_adjust=kappa_adjust, epsilon=eps, theta=profile.theta,
        L=model.constants.L,
    )
    if snapshots is None:
        snapshots = sorted(set(np.linspace(0, steps, 41).round().astype(int).tolist()))
    offset = np.zeros(d)
    if init_offset is None:
        offset[0] = 3.0
    else:
        offset += np.asarray(init_offset, dtype=float)

    lam = model.constants.lam
    times, means, errs, mean_r, w2p = [], [], [], [], []
    samples = {s: [] for s in snapshots}
    r_samples = {s: [] for s in snapshots}
    w_samples = {s: [] for s in snapshots}
    for chunk, lo, hi in rng.chain_chunks(pairs):
        rows = hi - lo
        block = rng.normal_block(seed, rng.CH_INIT, 0, chunk, rows, 4 * d)
        q = init_scale * block[:, :d]
        p = init_scale * block[:, d:2 * d]
        if identical_start:
            q2, p2 = q.copy(), p.copy()
        else:
            q2 = init_scale * block[:, 2 * d:3 * d] + offset
            p2 = init_scale * block[:, 3 * d:]

        def record(step):
            r = phase_distance((q, p), (q2, p2), profile.theta, gamma)
            v = v0_value(model, lam, q, p)
            v2 = v0_value(model, lam, q2, p2)
            rho = profile(r) * (1.0 + eps * v + eps * v2)
            samples[step].append(rho)
            r_samples[step].append(r)
            dz = np.sqrt(np.square(q - q2).sum(axis=-1) + np.square(p - p2).sum(axis=-1))
            w_samples[step].append(dz)

        if 0 in samples:
            record(0)
        for step in range(1, steps + 1):
            xi_q = rng.normal_block(seed, rng.CH_Q, step, chunk, rows, d)
            xi_p = rng.normal_block(seed, rng.CH_P, step, chunk, rows, d)
            q, p, q2, p2 = coupled_step_arrays(
                q, p, q2, p2, model, alpha, gamma, eta, xi, xi_q, xi_p, step
            )
            if max(np.abs(q).max(), np.abs(q2).max()) > DIVERGENCE_THRESHOLD:
                raise DivergenceError(lo, step)
            if step in samples:
                record(step)
    for s in snapshots:
        rho = np.concatenate(samples[s])
        rr = np.concatenate(r_samples[s])
        dz = np.concatenate(w_samples[s])
        times.append(s * eta)
        means.append(float(rho.mean()))
        errs.append(float(rho.std(ddof=1) / math.sqrt(rho.size)))
        mean_r.append(float(rr.mean()))
        w2p.append(float(np.sqrt(np.square(dz).mean())))
    return DecayRecord(
        times=np.array(times), mean_rho=np.array(means),
        stderr_rho=np.array(errs), mean_r=np.array(mean_r),
        mean_w2_proxy=np.array(w2p),
    )


def estimate_contraction(record):
    """Least-squares exponential rate of the decay curve.

    Returns (rate, intercept); identically zero curves report +inf (the
    ensembles have already coalesced).
    """
    mask = record.mean_rho > 0
    if not np.any(mask):
        return math.inf, 0.0
    t = record.times[mask]
    y = np.log(record.mean_rho[mask])
    if t.size < 2:
        return math.inf, float(y[0]) if y.size else 0.0
    slope, intercept = np.polyfit(t, y, 1)
    return -float(slope), float(intercept)
