"""Linear SVM classification and probabilistic decision fusion.

Networks hand their penultimate features to a one-vs-rest linear SVM; the
C decision scores are softmaxed into a category posterior. Two posteriors
(from the CNN-side and RNN-side systems) can be fused by max, mean, or
scaled product, and per-segment posteriors of one snippet are aggregated,
multiplicatively by default, into a single decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .nn.ops import softmax

POSTERIOR_FLOOR = 1e-12
FUSE_METHODS = ("max", "mean", "mult")


@dataclass
class Posterior:
    """Category likelihoods; normalized means they sum to 1."""

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise DataError("posterior must be a non-empty vector")
        if np.any(self.values < 0):
            raise DataError("posterior entries must be non-negative")
        if self.normalized and abs(float(self.values.sum()) - 1.0) > 1e-9:
            raise DataError("normalized posterior must sum to 1 within 1e-9")


@dataclass
class LinearSvm:
    """One-vs-rest linear scorers: weights (dim, C), biases (C,)."""

    weights: np.ndarray
    biases: np.ndarray
    c_svm: float = 1.0

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def scores(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(features) @ self.weights + self.biases


def train_linear_svm(features: np.ndarray, labels: np.ndarray, c_svm: float = 1.0,
                     epochs: int = 500, seed: int = 0) -> LinearSvm:
    """One-vs-rest L2-regularized hinge loss via per-sample subgradient
    descent; epoch t uses step 1/(c_svm * t).

    All C scorers are updated in lockstep over one seeded shuffling per
    epoch, so training is deterministic for fixed data and seed. The
    returned scorers are the average of the second-half epoch iterates,
    which damps the subgradient jitter.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError("SVM training needs at least 2 categories")
    n_classes = int(classes.max()) + 1
    n, dim = features.shape

    # +1 for the target class, -1 for the rest.
    sign = np.full((n, n_classes), -1.0)
    sign[np.arange(n), labels] = 1.0

    w = np.zeros((dim, n_classes))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(seed)
    lam = 1.0 / c_svm
    w_sum = np.zeros_like(w)
    b_sum = np.zeros_like(b)
    tail_count = 0
    for epoch in range(1, epochs + 1):
        eta = 1.0 / (c_svm * epoch)
        for i in rng.permutation(n):
            x = features[i]
            margin = sign[i] * (x @ w + b)
            viol = margin < 1.0
            w *= 1.0 - eta * lam
            if viol.any():
                w[:, viol] += eta * np.outer(x, sign[i, viol])
                b[viol] += eta * sign[i, viol]
        if epoch > epochs // 2:
            w_sum += w
            b_sum += b
            tail_count += 1
    return LinearSvm(weights=w_sum / tail_count, biases=b_sum / tail_count, c_svm=c_svm)


def svm_posterior(svm: LinearSvm, feature_row: np.ndarray) -> Posterior:
    """Posterior over categories: softmax of the one-vs-rest scores."""
    return Posterior(values=softmax(svm.scores(feature_row))[0], normalized=True)


def svm_posteriors(svm: LinearSvm, features: np.ndarray) -> np.ndarray:
    return softmax(svm.scores(features))


def late_fuse(p_conv: Posterior, p_rec: Posterior, method: str) -> Posterior:
    """Combine two category posteriors.

    max: elementwise maximum; mean: half the sum; mult: half the elementwise
    product. Only the mean stays normalized; argmax is unaffected by the
    half factor either way.
    """
    a, b = p_conv.values, p_rec.values
    if a.shape != b.shape:
        raise DataError(f"posterior lengths differ: {a.shape} vs {b.shape}")
    if not (p_conv.normalized and p_rec.normalized):
        raise DataError("late fusion expects normalized posteriors")
    if method == "max":
        return Posterior(values=np.maximum(a, b), normalized=False)
    if method == "mean":
        return Posterior(values=0.5 * (a + b), normalized=True)
    if method == "mult":
        return Posterior(values=0.5 * (a * b), normalized=False)
    raise DataError(f"unknown fusion method {method!r}")


def aggregate_segments(posteriors: list[Posterior], method: str = "mult") -> Posterior:
    """Combine per-segment posteriors of one snippet into a single decision.

    mult multiplies element-wise in the log domain (entries floored at
    1e-12 first) and renormalizes; max/mean renormalize after the
    element-wise reduction. A single posterior passes through unchanged.
    """
    if not posteriors:
        raise DataError("cannot aggregate an empty posterior list")
    if method not in FUSE_METHODS:
        raise DataError(f"unknown aggregation method {method!r}")
    if len(posteriors) == 1:
        return posteriors[0]
    stacked = np.stack([p.values for p in posteriors])
    if method == "mult":
        if np.any(~stacked.any(axis=1)):
            raise NumericalError("all-zero posterior under multiplicative aggregation")
        logs = np.log(np.maximum(stacked, POSTERIOR_FLOOR)).sum(axis=0)
        vals = np.exp(logs - logs.max())
    elif method == "max":
        vals = stacked.max(axis=0)
    else:
        vals = stacked.mean(axis=0)
    return Posterior(values=vals / vals.sum(), normalized=True)


def predict(p: Posterior) -> int:
    """Most likely category; ties resolve to the lowest id."""
    return int(np.argmax(p.values))


def save_svm(path, svm: LinearSvm) -> None:
    from .checkpoint import write_checkpoint

    write_checkpoint(path, "svm", {"c_svm": svm.c_svm},
                     {"weights": svm.weights, "biases": svm.biases})


def load_svm(path) -> LinearSvm:
    from .checkpoint import read_checkpoint

    kind, meta, blocks = read_checkpoint(path)
    if kind != "svm":
        raise DataError(f"{path}: expected an svm checkpoint, got {kind!r}")
    return LinearSvm(weights=blocks["weights"].astype(np.float64),
                     biases=blocks["biases"].astype(np.float64), c_svm=meta["c_svm"])
