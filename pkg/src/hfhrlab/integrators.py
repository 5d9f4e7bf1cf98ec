"""Euler-Maruyama steppers for HFHR, kinetic Langevin and overdamped Langevin
dynamics, plus a deterministic, seedable ensemble runner.

One HFHR step with resolution alpha, friction gamma and step size eta reads

    q+ = q + (p - alpha grad U(q)) eta + sqrt(2 alpha eta) xi_q
    p+ = p + (-gamma p - grad U(q)) eta + sqrt(2 gamma eta) xi_p

with the gradient evaluated once at the old position and reused in both
lines.  At alpha = 0 the position line degenerates to q + p eta with no
noise, which makes the stepper bitwise identical to the kinetic Langevin
stepper under shared momentum noise.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng

DIVERGENCE_THRESHOLD = 1e8  # |q| beyond this aborts the run with a diagnostic

HFHR = "hfhr"
KLMC = "klmc"
ULA = "ula"


class DivergenceError(RuntimeError):
    def __init__(self, chain, step):
        super().__init__(f"chain {chain} diverged at step {step} (|q| > {DIVERGENCE_THRESHOLD:g})")
        self.chain = chain
        self.step = step


@dataclass
class PhasePoint:
    """Position-momentum state z = (q, p)."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have equal shapes")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point must have finite entries")


@dataclass(frozen=True)
class SamplerParams:
    """Run parameters: resolution, friction, step size, budget, seeding."""

    alpha: float
    gamma: float
    eta: float
    steps: int
    chains: int
    seed: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.gamma <= 0 or self.eta <= 0:
            raise ValueError("gamma and eta must be positive")
        if self.steps < 0 or self.chains < 1:
            raise ValueError("steps must be >= 0 and chains >= 1")


def _check_gradient(grad, step):
    if not np.all(np.isfinite(grad)):
        bad = int(np.argwhere(~np.isfinite(grad).all(axis=-1))[0, 0]) if grad.ndim > 1 else 0
        raise DivergenceError(bad, step)


def hfhr_step_arrays(q, p, model, alpha, gamma, eta, xi_q, xi_p, step=0):
    grad = model.gradient(q)
    _check_gradient(grad, step)
    p_new = p + (-gamma * p - grad) * eta + np.sqrt(2.0 * gamma * eta) * xi_p
    if alpha > 0.0:
        q_new = q + (p - alpha * grad) * eta + np.sqrt(2.0 * alpha * eta) * xi_q
    else:
        # exact KLMC position update; keeps alpha -> 0 bitwise consistent
        q_new = q + p * eta
    return q_new, p_new


def klmc_step_arrays(x, v, model, gamma, eta, xi, step=0):
    grad = model.gradient(x)
    _check_gradient(grad, step)
    x_new = x + v * eta
    v_new = v + (-gamma * v - grad) * eta + np.sqrt(2.0 * gamma * eta) * xi
    return x_new, v_new


def ula_step_arrays(q, model, eta, xi, step=0):
    grad = model.gradient(q)
    _check_gradient(grad, step)
    return q - eta * grad + np.sqrt(2.0 * eta) * xi


def hfhr_step(z, model, params, noise):
    """Advance one phase point; ``noise`` is the pair (xi_q, xi_p)."""
    xi_q, xi_p = noise
    q, p = hfhr_step_arrays(
        z.q, z.p, model, params.alpha, params.gamma, params.eta, xi_q, xi_p
    )
    return PhasePoint(q, p)


def klmc_step(z, model, params, noise):
    x, v = klmc_step_arrays(z.q, z.p, model, params.gamma, params.eta, noise)
    return PhasePoint(x, v)


def ula_step(q, model, params, noise):
    return ula_step_arrays(q, model, params.eta, noise)


@dataclass
class TrajectoryRecord:
    """Per-snapshot ensemble states in chain-index order."""

    sampler: str
    params: SamplerParams
    steps: list = field(default_factory=list)
    positions: list = field(default_factory=list)   # one (M, d) array per snapshot
    momenta: list = field(default_factory=list)     # empty for ULA
    wall_clock: float = 0.0

    def snapshot(self, step):
        i = self.steps.index(step)
        p = self.momenta[i] if self.momenta else None
        return self.positions[i], p

    def to_csv(self, path):
        """Rows (step, chain, q_1..q_d[, p_1..p_d])."""
        d = self.positions[0].shape[1]
        cols = ["step", "chain"] + [f"q_{j+1}" for j in range(d)]
        if self.momenta:
            cols += [f"p_{j+1}" for j in range(d)]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i, step in enumerate(self.steps):
                q = self.positions[i]
                p = self.momenta[i] if self.momenta else None
                for chain in range(q.shape[0]):
                    row = [str(step), str(chain)]
                    row += [repr(float(v)) for v in q[chain]]
                    if p is not None:
                        row += [repr(float(v)) for v in p[chain]]
                    fh.write(",".join(row) + "\n")


def initial_ensemble(model, params, init=None):
    """Default start is the origin; ``init = ("gaussian", scale[, center])``
    draws a position cloud of that scale around ``center`` (scalar or vector,
    default 0) with matching momentum noise around 0."""
    m, d = params.chains, model.dim
    if init is None or init == "zeros" or tuple(init or ()) [:1] == ("zeros",):
        return np.zeros((m, d)), np.zeros((m, d))
    kind, scale, *rest = init
    if kind != "gaussian":
        raise ValueError(f"unknown initialization {init!r}")
    center = np.broadcast_to(np.asarray(rest[0] if rest else 0.0, dtype=float), (d,))
    q = np.empty((m, d))
    p = np.empty((m, d))
    for chunk, lo, hi in rng.chain_chunks(m):
        block = rng.normal_block(params.seed, rng.CH_INIT, 0, chunk, hi - lo, 2 * d)
        q[lo:hi] = center + scale * block[:, :d]
        p[lo:hi] = scale * block[:, d:]
    return q, p


def _advance_chunk(sampler, model, params, q, p, lo, chunk, schedule):
    """Advance one chain chunk through all steps, recording snapshots.

    The chunk owns its noise stream, so the result is independent of how
    chunks are scheduled across workers.
    """
    d = model.dim
    rows = q.shape[0]
    out_q, out_p = {}, {}
    if 0 in schedule:
        out_q[0], out_p[0] = q.copy(), p.copy()
    alpha, gamma, eta = params.alpha, params.gamma, params.eta
    for step in range(1, params.steps + 1):
        xi_p = rng.normal_block(params.seed, rng.CH_P, step, chunk, rows, d)
        if sampler == HFHR:
            xi_q = rng.normal_block(params.seed, rng.CH_Q, step, chunk, rows, d)
            q, p = hfhr_step_arrays(q, p, model, alpha, gamma, eta, xi_q, xi_p, step)
        elif sampler == KLMC:
            q, p = klmc_step_arrays(q, p, model, gamma, eta, xi_p, step)
        elif sampler == ULA:
            q = ula_step_arrays(q, model, eta, xi_p, step)
        else:
            raise ValueError(f"unknown sampler {sampler!r}")
        amax = np.abs(q).max() if q.size else 0.0
        if not np.isfinite(amax) or amax > DIVERGENCE_THRESHOLD:
            norms = np.abs(q).max(axis=1)
            bad = int(np.argmax(~np.isfinite(norms) | (norms > DIVERGENCE_THRESHOLD)))
            raise DivergenceError(lo + bad, step)
        if step in schedule:
            out_q[step], out_p[step] = q.copy(), p.copy()
    return out_q, out_p


def run_ensemble(model, params, sampler=HFHR, recorder=None, init=None, workers=1):
    """Run an ensemble of independent chains, returning a TrajectoryRecord.

    ``recorder`` is the snapshot schedule, an iterable of step indices in
    [0, steps].  Snapshots are merged in chain-index order, and the result is
    bit-identical for any worker count.
    """
    if sampler not in (HFHR, KLMC, ULA):
        raise ValueError(f"unknown sampler {sampler!r}")
    schedule = sorted(set(int(s) for s in (recorder if recorder is not None else [params.steps])))
    if schedule and (schedule[0] < 0 or schedule[-1] > params.steps):
        raise ValueError("snapshot schedule must lie within [0, steps]")
    schedule_set = set(schedule)
    q0, p0 = initial_ensemble(model, params, init)
    chunks = rng.chain_chunks(params.chains)
    t0 = time.perf_counter()

    def job(spec):
        c, lo, hi = spec
        return _advance_chunk(
            sampler, model, params, q0[lo:hi].copy(), p0[lo:hi].copy(), lo, c, schedule_set
        )

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(spec) for spec in chunks]

    record = TrajectoryRecord(sampler=sampler, params=params)
    for step in schedule:
        record.steps.append(step)
        record.positions.append(np.concatenate([r[0][step] for r in results], axis=0))
        if sampler != ULA:
            record.momenta.append(np.concatenate([r[1][step] for r in results], axis=0))
    record.wall_clock = time.perf_counter() - t0
    return record


def log_schedule(steps, count=50, include_zero=True):
    """Logarithmically spaced snapshot steps in [1, steps], plus step 0."""
    if steps < 1:
        return [0]
    pts = np.unique(np.geomspace(1, steps, num=min(count, steps)).round().astype(int))
    out = ([0] if include_zero else []) + pts.tolist()
    return out
