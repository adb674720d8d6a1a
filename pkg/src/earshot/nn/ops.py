"""Differentiable building blocks on plain numpy arrays.

Forward functions return caches where a backward pass needs them; backward
functions consume those caches and upstream gradients. Training runs in
float32, gradient verification in float64; every op preserves the dtype of
its inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    # Subgradient 0 at the kink.
    return (x > 0).astype(x.dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax over the last axis."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def conv_time_channel(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Convolve one (F, width) filter over time and across channels.

    x has shape (F, T, D); the filter spans the full feature height and a
    temporal window of `width` frames. Output o[i, j] is the element-wise
    product of the filter with the slice of channel j starting at time i,
    summed; shape (T - width + 1, D).
    """
    f, t, _ = x.shape
    fw, width = filt.shape
    if fw != f:
        raise ValueError(f"filter height {fw} != feature height {f}")
    if width >= t:
        raise ValueError(f"filter width {width} must be < T={t}")
    windows = sliding_window_view(x, width, axis=1)  # (F, T-w+1, D, w)
    return np.einsum("fidw,fw->id", windows, filt)


def one_max_pool(feature_map: np.ndarray) -> tuple[float, tuple[int, int]]:
    """Global max over a 2-D feature map, plus the argmax for backward.

    Ties route the gradient to the lexicographically first (i, j).
    """
    if feature_map.size == 0:
        raise ValueError("cannot pool an empty feature map")
    flat = int(np.argmax(feature_map))
    idx = np.unravel_index(flat, feature_map.shape)
    return feature_map[idx], (int(idx[0]), int(idx[1]))


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray, activation: str = "none"):
    """y = act(x @ w + b) with activation in {none, sigmoid, softmax}.

    Returns (y, cache); cache feeds dense_backward for none/sigmoid.
    """
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"input dim {x.shape[-1]} != weight rows {w.shape[0]}")
    pre = x @ w + b
    if activation == "none":
        y = pre
    elif activation == "sigmoid":
        y = sigmoid(pre)
    elif activation == "softmax":
        y = softmax(pre)
    else:
        raise ValueError(f"unknown activation {activation!r}")
    return y, (x, w, y, activation)


def dense_backward(cache, dy: np.ndarray):
    """Gradients (dx, dw, db) for dense with none/sigmoid activation."""
    x, w, y, activation = cache
    if activation == "sigmoid":
        dy = dy * y * (1.0 - y)
    elif activation != "none":
        raise ValueError("dense_backward supports none/sigmoid; softmax pairs with the loss")
    dw = x.T @ dy
    db = dy.sum(axis=0) if dy.ndim > 1 else dy
    dx = dy @ w.T
    return dx, dw, db


def dropout(x: np.ndarray, rate: float, mode: str = "train", *, seed=None,
            rng: np.random.Generator | None = None):
    """Inverted dropout: zero entries with probability `rate` and scale
    survivors by 1/(1-rate) in train mode; identity in eval mode.

    Returns (y, mask); mask is None in eval mode or at rate 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"unknown dropout mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask) -> np.ndarray:
    return dy if mask is None else dy * mask


def l2_penalty(theta, lam: float) -> float:
    """(lam/2) * squared L2 norm over a dict/iterable of parameter arrays."""
    arrays = theta.values() if isinstance(theta, dict) else theta
    return 0.5 * lam * float(sum(np.sum(np.square(a)) for a in arrays))


def cross_entropy_l2(pred: np.ndarray, target: np.ndarray, theta=(), lam: float = 1e-3) -> float:
    """Summed cross-entropy over the batch plus (lam/2)||theta||^2.

    pred rows must lie on the probability simplex (tolerance 1e-6); target
    rows are one-hot.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if lam < 0:
        raise ValueError("lam must be >= 0")
    sums = pred.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(pred < -1e-12):
        raise ValueError("prediction rows must be normalized probabilities")
    eps = np.finfo(np.float64).tiny
    ce = -float(np.sum(target * np.log(np.maximum(pred, eps))))
    return ce + l2_penalty(theta, lam)


def softmax_cross_entropy_from_logits(logits: np.ndarray, labels: np.ndarray):
    """Stable summed CE computed from logits via log-sum-exp.

    labels are integer class ids, shape (N,). Returns (loss, dlogits, probs)
    where dlogits is the gradient of the summed loss.
    """
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = -float(np.sum(logp[np.arange(n), labels]))
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits, probs
