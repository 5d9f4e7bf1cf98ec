"""Empirical transport distances and task metrics.

The quadratic Wasserstein distances come in three estimators: exact 1-D via
the quantile coupling, exact small-n via optimal assignment, and the sliced
estimator (root-mean of squared 1-D distances over random projections) as
the scalable proxy.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

ASSIGNMENT_MAX = 512


def _cloud(a, name="cloud"):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty (n, k) array")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _sorted_quantiles(x, n):
    """Sorted sample resampled to n points by quantile interpolation."""
    xs = np.sort(x)
    if xs.size == n:
        return xs
    src = (np.arange(xs.size) + 0.5) / xs.size
    dst = (np.arange(n) + 0.5) / n
    return np.interp(dst, src, xs)


def w2_exact_1d(a, b):
    """Exact quadratic Wasserstein distance of 1-D clouds (quantile coupling).

    Unequal sizes are resolved by sorted-quantile interpolation to the larger
    size.
    """
    a, b = _cloud(a), _cloud(b)
    if a.shape[1] != 1 or b.shape[1] != 1:
        raise ValueError("w2_exact_1d expects one-dimensional clouds")
    n = max(a.shape[0], b.shape[0])
    xa = _sorted_quantiles(a[:, 0], n)
    xb = _sorted_quantiles(b[:, 0], n)
    return float(np.sqrt(np.mean(np.square(xa - xb))))


def w2_assignment(a, b):
    """Exact W2 by optimal assignment on squared Euclidean costs (n <= 512)."""
    a, b = _cloud(a), _cloud(b)
    if a.shape != b.shape:
        raise ValueError("assignment mode requires equal cloud shapes")
    n = a.shape[0]
    if n > ASSIGNMENT_MAX:
        raise ValueError(f"n = {n} > {ASSIGNMENT_MAX}: use w2_sliced instead")
    cost = np.square(a[:, None, :] - b[None, :, :]).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def _unit_directions(k, n_proj, seed):
    gen = np.random.Generator(np.random.Philox(key=seed))
    dirs = gen.standard_normal((n_proj, k))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return dirs / norms


def w2_sliced(a, b, n_proj=128, seed=0):
    """Sliced W2: sqrt of the mean over random directions of the squared 1-D
    distance between the projected clouds.  Deterministic under the seed."""
    a, b = _cloud(a), _cloud(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("clouds must share the ambient dimension")
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    dirs = _unit_directions(a.shape[1], n_proj, seed)
    total = 0.0
    for u in dirs:
        total += w2_exact_1d(a @ u, b @ u) ** 2
    return float(np.sqrt(total / n_proj))


class SlicedReference:
    """Sliced-W2 against a fixed reference cloud with precomputed projections.

    Produces exactly the value of :func:`w2_sliced` for the same
    ``(n_proj, seed)`` when the moving cloud has ``n_points`` samples; the
    reference's sorted projections are interpolated to the moving cloud's
    quantile positions once, which makes repeated evaluations cheap.
    """

    def __init__(self, reference, n_points, n_proj=128, seed=0):
        ref = _cloud(reference)
        self.dirs = _unit_directions(ref.shape[1], n_proj, seed)
        self.n_proj = n_proj
        n = max(n_points, ref.shape[0])
        proj = ref @ self.dirs.T  # (n_ref, n_proj)
        self.ref_quantiles = np.stack(
            [_sorted_quantiles(proj[:, j], n) for j in range(n_proj)], axis=1
        )  # (n, n_proj)
        self.n_points = n_points
        self.n_common = n

    def distance(self, cloud):
        c = _cloud(cloud)
        if c.shape[0] != self.n_points:
            raise ValueError("cloud size differs from the precomputed layout")
        proj = c @ self.dirs.T
        if self.n_common == self.n_points:
            moving = np.sort(proj, axis=0)
        else:
            moving = np.stack(
                [_sorted_quantiles(proj[:, j], self.n_common) for j in range(self.n_proj)],
                axis=1,
            )
        sq = np.mean(np.square(moving - self.ref_quantiles), axis=0)  # per direction
        return float(np.sqrt(sq.mean())), float(sq.std(ddof=1) / np.sqrt(sq.size))


def mse(X, y, q):
    """Mean squared residual of predictions X q against y; q may be a batch."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != q.shape[-1]:
        raise ValueError("shape mismatch in mse")
    resid = y - q @ X.T
    return np.square(resid).mean(axis=-1)


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("shape mismatch in accuracy")
    return float(np.mean(predictions == labels))


def log_loss(probs, labels):
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape:
        raise ValueError("shape mismatch in log_loss")
    if np.any(probs <= 0) or np.any(probs >= 1):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return float(-np.mean(labels * np.log(probs) + (1 - labels) * np.log1p(-probs)))
