"""Clustering error under optimal label matching, and synthetic benchmarks."""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import check_labels
from .exceptions import ConfigError, ShapeError

RESULT_FIELDS = ("run", "K", "method", "error_percent", "seconds")
NONLINEARITIES = ("none", "cubic", "random-monotone")


def hungarian(cost):
    """Minimum-cost perfect assignment of a square cost matrix.

    Returns
    -------
    assignment : ndarray of int
        ``assignment[i]`` is the column matched to row ``i``.
    total : float
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeError(f"cost matrix must be square, got shape {cost.shape}")
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(cost.shape[0], dtype=int)
    assignment[rows] = cols
    return assignment, float(cost[rows, cols].sum())


def contingency(pred, truth):
    """Square co-occurrence counts, zero-padded when label-set sizes differ."""
    pred_ids, p = np.unique(pred, return_inverse=True)
    truth_ids, t = np.unique(truth, return_inverse=True)
    k = max(len(pred_ids), len(truth_ids))
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def misclassified(pred, truth):
    """Number of points wrong under the best one-to-one label mapping."""
    pred = check_labels(pred, "pred")
    truth = check_labels(truth, "truth")
    if pred.shape != truth.shape:
        raise ShapeError(f"pred has {pred.size} labels, truth has {truth.size}")
    if pred.size == 0:
        return 0
    table = contingency(pred, truth)
    _, matched = hungarian(-table)
    return int(pred.size + matched)


def clustering_error(pred, truth):
    """Percentage of points misassigned under the best label matching."""
    wrong = misclassified(pred, truth)
    n = len(pred)
    return 100.0 * wrong / n if n else 0.0


def format_error(err):
    return f"{err:.2f}"


def write_results(path, rows):
    """Write result rows (dicts keyed like ``RESULT_FIELDS``) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for row in rows:
            row = dict(row)
            row["error_percent"] = format_error(float(row["error_percent"]))
            row["seconds"] = f"{float(row['seconds']):.3f}"
            writer.writerow(row)


@dataclass(frozen=True)
class SynthSpec:
    """Union-of-subspaces sample.

    ``dims`` and ``points`` may be scalars (shared by every subspace) or
    per-subspace sequences. ``normalize="affine"`` maps the final values onto
    [0, 1]; note the shift turns linear subspaces into affine ones, so use
    ``"none"`` when exact linear structure is needed.
    """

    n_subspaces: int
    ambient_dim: int
    dims: object = 3
    points: object = 40
    noise: float = 0.0
    nonlinearity: str = "none"
    normalize: str = "affine"
    image: bool = False
    seed: int = 0

    def per_subspace(self, value):
        if np.ndim(value) == 0:
            return [int(value)] * self.n_subspaces
        value = [int(v) for v in value]
        if len(value) != self.n_subspaces:
            raise ConfigError(f"expected {self.n_subspaces} values, got {len(value)}")
        return value

    def validate(self):
        if self.n_subspaces < 1 or self.ambient_dim < 1:
            raise ConfigError("need at least one subspace and a positive ambient dimension")
        for d, m in zip(self.per_subspace(self.dims), self.per_subspace(self.points)):
            if not 1 <= d < self.ambient_dim:
                raise ConfigError(f"subspace dimension {d} must be in [1, {self.ambient_dim})")
            if m < d + 1:
                raise ConfigError(f"need at least d+1 = {d + 1} points per subspace, got {m}")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.normalize not in ("affine", "none"):
            raise ConfigError("normalize must be 'affine' or 'none'")
        if self.image and math.isqrt(self.ambient_dim) ** 2 != self.ambient_dim:
            raise ConfigError(f"image output needs a square ambient dimension, got {self.ambient_dim}")


@dataclass
class SynthData:
    X: np.ndarray
    labels: np.ndarray
    bases: list


def _random_monotone(X, rng):
    # odd power per coordinate, exponent drawn from [1, 3]
    powers = rng.uniform(1.0, 3.0, size=X.shape[1])
    return np.sign(X) * np.abs(X) ** powers[None, :]


def synth_subspaces(spec):
    """Draw points from ``spec.n_subspaces`` random linear subspaces.

    Each subspace gets an orthonormal basis from the QR factorisation of a
    Gaussian matrix; points are ``B g`` with ``g`` uniform on the unit sphere
    of the subspace, plus isotropic noise of scale ``spec.noise``. Bounded
    ``g`` keeps the cubic nonlinearity from being dominated by a few
    heavy-tailed samples.

    Returns
    -------
    SynthData
        ``X`` is ``(N, D)`` or ``(N, 1, s, s)`` when ``spec.image``; ``labels``
        holds the generating subspace of each row.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    D = spec.ambient_dim
    blocks, labels, bases = [], [], []
    for k, (d, m) in enumerate(zip(spec.per_subspace(spec.dims), spec.per_subspace(spec.points))):
        B, _ = np.linalg.qr(rng.standard_normal((D, d)))
        bases.append(B)
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        blocks.append(g @ B.T)
        labels.append(np.full(m, k))
    X = np.concatenate(blocks)
    if spec.noise > 0:
        X = X + spec.noise * rng.standard_normal(X.shape)
    if spec.nonlinearity == "cubic":
        X = X**3
    elif spec.nonlinearity == "random-monotone":
        X = _random_monotone(X, rng)
    if spec.normalize == "affine":
        lo, hi = X.min(), X.max()
        X = (X - lo) / (hi - lo) if hi > lo else np.zeros_like(X)
    if spec.image:
        s = math.isqrt(D)
        X = X.reshape(-1, 1, s, s)
    return SynthData(np.ascontiguousarray(X), np.concatenate(labels), bases)
