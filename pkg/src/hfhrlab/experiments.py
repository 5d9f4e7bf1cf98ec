"""Config-driven experiment runner: reference-sample generation, dataset
handling, sampler orchestration and result persistence.

The config file is TOML; the schema is documented in the README and in
:func:`load_config`.  Outputs are one metric CSV per sampler with rows
``(step, metric, stderr)`` plus a combined ``run.json`` embedding the exact
resolved configuration, the constants ledger per sampler, RNG provenance and
wall-clock times.  Re-running a config with the same seed reproduces the
CSVs byte for byte.
"""

import json
import sys
import time
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import rng
from .constants import acceleration_report, contraction_rate, alpha_smallness_bound
from .integrators import SamplerParams, run_ensemble, log_schedule, HFHR, KLMC, ULA
from .linalg import cumulative_simpson, symmetric_eigenvalues
from .metrics import SlicedReference, mse
from .potentials import (
    ClassificationPotential,
    GaussianPotential,
    LinearRegressionPotential,
    MultiWellPotential,
    multiwell_component,
)

DEFAULT_BETA_STAR = (1.0, -0.5, 0.7, 1.2, -3.0, 5.4)


# ---------------------------------------------------------------------------
# Reference samples and synthetic data
# ---------------------------------------------------------------------------


def _multiwell_marginal_tables(n_grid=8192, span=8.0):
    """Normalized CDF of the 1-D marginal density exp(-v) on [-span, span].

    The density is tabulated with composite Simpson; the normalizing constant
    must be stable under grid doubling to 1e-10 relative (the mass outside
    the window is negligible because v grows quadratically).
    """
    def tables(n):
        grid = np.linspace(-span, span, n + 1)
        dens = np.exp(-multiwell_component(grid))
        cdf = cumulative_simpson(dens, grid[1] - grid[0])
        return grid, dens, cdf

    grid, dens, cdf = tables(n_grid)
    _, _, cdf2 = tables(2 * n_grid)
    z, z2 = cdf[-1], cdf2[-1]
    if abs(z - z2) > 1e-10 * z:
        raise RuntimeError(
            f"marginal quadrature did not converge: Z changed by {abs(z - z2):.3e}"
        )
    return grid, dens / z, cdf / z


def multiwell_marginal_moment(power=2, n_grid=8192, span=8.0):
    """Quadrature moment of the 1-D multi-well marginal (test oracle)."""
    grid = np.linspace(-span, span, n_grid + 1)
    dens = np.exp(-multiwell_component(grid))
    h = grid[1] - grid[0]
    z = cumulative_simpson(dens, h)[-1]
    return cumulative_simpson(grid ** power * dens, h)[-1] / z


def reference_multiwell(d, n, seed):
    """Tensorized inverse-CDF sample of the multi-well Gibbs q-marginal."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    grid, _, cdf = _multiwell_marginal_tables()
    u = rng.uniform_block(seed, rng.CH_REF, 0, 0, n, d)
    return np.interp(u, cdf, grid)


def reference_gaussian(d, n, seed):
    return rng.normal_block(seed, rng.CH_REF, 0, 0, n, d)


def generate_linreg_data(n, beta_star=None, sigma=0.4, seed=0, x_scale=0.5):
    """Design X with rows N(0, x_scale^2 I) and responses y = X beta + noise.

    Redraws (at most 10 times) until X^T X is positive definite.
    """
    beta = np.asarray(beta_star if beta_star is not None else DEFAULT_BETA_STAR,
                      dtype=float)
    d = beta.shape[0]
    if n < d:
        warnings.warn("n < d: the Gram matrix is necessarily singular")
    for attempt in range(10):
        block = rng.normal_block(seed, rng.CH_DATA, attempt, 0, n, d + 1)
        X = x_scale * block[:, :d]
        noise = block[:, d]
        if symmetric_eigenvalues(X.T @ X)[0] > 0:
            return X, X @ beta + sigma * noise
    raise RuntimeError("design remained rank-deficient after 10 redraws")


def generate_classification_data(n, d, seed=0, feature_scale=1.0):
    """Toy binary classification data: Gaussian features, labels from a
    random linear rule with 10% flips."""
    block = rng.normal_block(seed, rng.CH_DATA, 0, 1, n, d + 1)
    X = feature_scale * block[:, :d]
    direction = rng.normal_block(seed, rng.CH_DATA, 1, 1, 1, d)[0]
    direction /= np.linalg.norm(direction)
    flips = rng.uniform_block(seed, rng.CH_DATA, 2, 1, n, 1)[:, 0] < 0.1
    labels = (X @ direction > 0).astype(float)
    labels[flips] = 1.0 - labels[flips]
    return X, labels


def load_dataset_csv(path, split_fraction=0.7, seed=0):
    """Deterministic shuffled train/test split of a header CSV whose last
    column is the binary label.  Features are standardized with the training
    statistics.  Returns (X_train, y_train, X_test, y_test)."""
    if not (0.0 < split_fraction <= 1.0):
        raise ValueError("split_fraction must lie in (0, 1]")
    with open(path) as fh:
        header = fh.readline()
        if not header.strip():
            raise ValueError("empty CSV")
        try:
            data = np.loadtxt(fh, delimiter=",")
        except ValueError as exc:
            raise ValueError(f"non-numeric cell in {path}: {exc}") from exc
    if data.ndim == 1:
        data = data[None, :]
    X, y = data[:, :-1], data[:, -1]
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be binary in {0, 1}")
    if np.unique(y).size < 2:
        raise ValueError("dataset contains a single class")
    n = X.shape[0]
    order = np.random.Generator(np.random.Philox(key=seed)).permutation(n)
    n_train = int(np.floor(split_fraction * n))
    tr, te = order[:n_train], order[n_train:]
    mean = X[tr].mean(axis=0)
    std = X[tr].std(axis=0)
    std[std == 0] = 1.0
    X = (X - mean) / std
    return X[tr], y[tr], X[te], y[te]


def fetch_breast_cancer_csv(path):
    """Materialize the 569 x 30 breast-cancer CSV from scikit-learn's bundled
    copy of the UCI data (malignant = 1)."""
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError as exc:
        raise RuntimeError(
            "scikit-learn is required to materialize the breast-cancer CSV; "
            "install the 'data' extra"
        ) from exc
    data = load_breast_cancer()
    X = data.data
    labels = 1 - data.target  # sklearn codes benign = 1; the task wants malignant = 1
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join([f"f{i+1}" for i in range(X.shape[1])] + ["label"]) + "\n")
        for row, lab in zip(X, labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(lab)}\n")
    return path


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerSpec:
    kind: str
    gamma: float
    alpha: float = 0.0

    def label(self):
        if self.kind == HFHR:
            return f"hfhr_a{self.alpha:g}_g{self.gamma:g}"
        return f"{self.kind}_g{self.gamma:g}"


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration.

    TOML schema::

        [experiment]
        case = "multiwell"        # multiwell | linreg | classification | gaussian
        seed = 1234
        eta = 1e-3
        steps = 10000
        chains = 200
        snapshots = 50            # log-spaced snapshot count
        d = 8                     # dimension (multiwell / gaussian)
        output_dir = "out"        # optional, also settable via CLI / env
        constants_ledger = true   # embed acceleration ledger in run.json

        [[sampler]]               # one block per sampler
        kind = "hfhr"             # hfhr | klmc | ula
        gamma = 2.0
        alpha = 0.2

        [init]                    # optional; default zeros
        kind = "gaussian"
        scale = 1.0

        [multiwell]               # optional per-case blocks; the gaussian
        reference_samples = 20000 # case reads its reference settings here too
        n_projections = 128

        [linreg]
        n = 1000
        sigma = 0.4
        iota = 0.1
        p = 1.2
        eps = 0.001
        beta_star = [1.0, -0.5, 0.7, 1.2, -3.0, 5.4]

        [classification]
        dataset = "breast_cancer.csv"
        split_fraction = 0.7
        iota = 0.05
        t0 = 2.0
    """

    case: str
    seed: int
    eta: float
    steps: int
    chains: int
    samplers: list
    snapshots: int = 50
    snapshot_steps: list = None   # explicit schedule; overrides the log spacing
    d: int = 1
    output_dir: str = None
    constants_ledger: bool = True
    init: tuple = None
    multiwell: dict = field(default_factory=dict)
    linreg: dict = field(default_factory=dict)
    classification: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.case not in ("multiwell", "linreg", "classification", "gaussian"):
            raise ValueError(f"unknown case {self.case!r}")
        if self.eta <= 0 or self.steps < 0 or self.chains < 1 or self.d < 1:
            raise ValueError("eta, steps, chains, d must be positive")
        if not self.samplers:
            raise ValueError("at least one [[sampler]] block is required")
        for s in self.samplers:
            if s.kind not in (HFHR, KLMC, ULA):
                raise ValueError(f"unknown sampler kind {s.kind!r}")
            if s.alpha < 0 or s.gamma <= 0:
                raise ValueError("sampler needs alpha >= 0 and gamma > 0")

    def to_dict(self):
        out = asdict(self)
        out["samplers"] = [asdict(s) for s in self.samplers]
        return out


def load_config(path):
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    exp = raw.get("experiment", {})
    samplers = [
        SamplerSpec(kind=s["kind"], gamma=float(s["gamma"]),
                    alpha=float(s.get("alpha", 0.0)))
        for s in raw.get("sampler", [])
    ]
    init = None
    if "init" in raw:
        init = (raw["init"].get("kind", "zeros"), float(raw["init"].get("scale", 1.0)),
                raw["init"].get("center", 0.0))
    return ExperimentConfig(
        case=exp.get("case", "gaussian"),
        seed=int(exp.get("seed", 0)),
        eta=float(exp.get("eta", 1e-3)),
        steps=int(exp.get("steps", 1000)),
        chains=int(exp.get("chains", 100)),
        snapshots=int(exp.get("snapshots", 50)),
        snapshot_steps=exp.get("snapshot_steps"),
        d=int(exp.get("d", 1)),
        output_dir=exp.get("output_dir"),
        constants_ledger=bool(exp.get("constants_ledger", True)),
        init=init,
        samplers=samplers,
        multiwell=raw.get("multiwell", {}),
        linreg=raw.get("linreg", {}),
        classification=raw.get("classification", {}),
        workers=int(exp.get("workers", 1)),
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def build_model(config, gamma):
    """Instantiate the case's potential for a given friction parameter."""
    if config.case in ("multiwell", "gaussian"):
        cls = MultiWellPotential if config.case == "multiwell" else GaussianPotential
        return cls(config.d, gamma), None
    if config.case == "linreg":
        c = config.linreg
        X, y = generate_linreg_data(
            n=int(c.get("n", 1000)),
            beta_star=c.get("beta_star"),
            sigma=float(c.get("sigma", 0.4)),
            seed=config.seed,
        )
        model = LinearRegressionPotential(
            X, y, sigma=float(c.get("sigma", 0.4)), iota=float(c.get("iota", 0.1)),
            p=float(c.get("p", 1.2)), eps=float(c.get("eps", 0.001)), gamma=gamma,
        )
        return model, {"X": X, "y": y}
    c = config.classification
    if "dataset" not in c:
        raise ValueError("classification case requires a dataset path")
    X_tr, y_tr, X_te, y_te = load_dataset_csv(
        c["dataset"], float(c.get("split_fraction", 0.7)), config.seed
    )
    model = ClassificationPotential(
        X_tr, y_tr, iota=float(c.get("iota", 0.05)), t0=float(c.get("t0", 2.0)),
        gamma=gamma,
    )
    return model, {"X_test": X_te, "y_test": y_te}


def _metric_evaluator(config, model, data):
    """Returns f(record) -> list of (step, metric, stderr) rows."""
    if config.case in ("multiwell", "gaussian"):
        ref_n = int(config.multiwell.get("reference_samples", 20000))
        n_proj = int(config.multiwell.get("n_projections", 128))
        if config.case == "multiwell":
            reference = reference_multiwell(config.d, ref_n, config.seed)
        else:
            reference = reference_gaussian(config.d, ref_n, config.seed)
        sliced = SlicedReference(reference, config.chains, n_proj=n_proj,
                                 seed=config.seed)

        def rows(record):
            out = []
            for step, q in zip(record.steps, record.positions):
                w2, err = sliced.distance(q)
                out.append((step, w2, err))
            return out

        return rows
    if config.case == "linreg":
        X, y = data["X"], data["y"]

        def rows(record):
            out = []
            for step, q in zip(record.steps, record.positions):
                vals = mse(X, y, q)
                out.append((step, float(vals.mean()),
                            float(vals.std(ddof=1) / np.sqrt(vals.size))))
            return out

        return rows
    X_te, y_te = data["X_test"], data["y_test"]

    def rows(record):
        out = []
        for step, q in zip(record.steps, record.positions):
            qbar = q.mean(axis=0)
            preds = (X_te @ qbar >= 0.5).astype(float)
            acc = float(np.mean(preds == y_te))
            err = float(np.sqrt(acc * (1.0 - acc) / y_te.size))
            out.append((step, acc, err))
        return out

    return rows


@dataclass
class RunReport:
    config: dict
    results: dict = field(default_factory=dict)     # label -> rows
    ledgers: dict = field(default_factory=dict)     # label -> constants dict
    warnings: list = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)
    rng_provenance: dict = field(default_factory=dict)
    error: str = None

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for label, rows in self.results.items():
            with open(directory / f"{label}.csv", "w") as fh:
                fh.write("step,metric,stderr\n")
                for step, metric, err in rows:
                    fh.write(f"{step},{metric!r},{err!r}\n")
        with open(directory / "run.json", "w") as fh:
            json.dump({
                "config": self.config,
                "results": {k: [list(r) for r in v] for k, v in self.results.items()},
                "ledgers": self.ledgers,
                "warnings": self.warnings,
                "wall_clock": self.wall_clock,
                "rng": self.rng_provenance,
                "error": self.error,
            }, fh, indent=2, default=float)
        return directory / "run.json"


def run_experiment(config, output_dir=None, kappa_adjust=0.5):
    """Run every configured sampler and persist metric curves plus run.json.

    Partial results are flushed if a sampler aborts; the report's ``error``
    field records the failure and the exception is re-raised after writing.
    """
    out = Path(output_dir or config.output_dir or "out")
    report = RunReport(config=config.to_dict())
    report.rng_provenance = {
        "bit_generator": "philox4x64",
        "seed": config.seed,
        "chunk": rng.CHUNK,
    }
    try:
        for spec in config.samplers:
            model, data = build_model(config, spec.gamma)
            consts = model.constants
            rate = contraction_rate(consts.lam, spec.alpha, spec.gamma, consts.L,
                                    model.dim, consts.A, kappa_adjust)
            bound = alpha_smallness_bound(spec.gamma, consts.L, rate.eta0, kappa_adjust)
            if spec.alpha > bound:
                report.warnings.append(
                    f"{spec.label()}: alpha = {spec.alpha:g} exceeds the "
                    f"smallness bound {bound:.4g} for the configured slack"
                )
            evaluate = _metric_evaluator(config, model, data)
            params = SamplerParams(
                alpha=spec.alpha, gamma=spec.gamma, eta=config.eta,
                steps=config.steps, chains=config.chains, seed=config.seed,
            )
            if config.snapshot_steps is not None:
                schedule = sorted(set(int(s) for s in config.snapshot_steps))
            else:
                schedule = log_schedule(config.steps, config.snapshots)
            t0 = time.perf_counter()
            record = run_ensemble(model, params, sampler=spec.kind,
                                  recorder=schedule, init=config.init,
                                  workers=config.workers)
            report.results[spec.label()] = evaluate(record)
            report.wall_clock[spec.label()] = time.perf_counter() - t0
            if config.constants_ledger:
                try:
                    ledger = acceleration_report(model, kappa_adjust=kappa_adjust,
                                                 case=config.case, with_w2=False)
                    report.ledgers[spec.label()] = ledger.to_dict()
                except Exception as exc:
                    report.ledgers[spec.label()] = {"error": str(exc)}
    except Exception as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        report.write(out)
        raise
    report.write(out)
    return report
