"""Batched cross-channel temporal convolution with ReLU and 1-max pooling.

The filter bank holds R groups of Q filters, one group per temporal width.
Each filter spans the full feature height, convolves over time and across
input channels, passes through ReLU, and is globally max-pooled to a single
scalar, so a bank yields an R*Q feature vector per input tensor.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ops import glorot_uniform

DEFAULT_WIDTHS = (3, 5, 7)


def init_bank(rng: np.random.Generator, feat_height: int, q: int,
              widths=DEFAULT_WIDTHS, dtype=np.float32) -> dict[str, np.ndarray]:
    """Parameter dict for a filter bank: per width a (Q, F, w) filter block
    and a (Q,) bias vector."""
    params = {}
    for w in widths:
        params[f"conv_w{w}"] = glorot_uniform(
            rng, (q, feat_height, w), fan_in=feat_height * w, fan_out=q, dtype=dtype
        )
        params[f"conv_b{w}"] = np.zeros(q, dtype=dtype)
    return params


def bank_forward(params: dict, x: np.ndarray, widths=DEFAULT_WIDTHS):
    """Pooled activations for a batch.

    x: (B, F, T, D). Returns (z, cache) with z of shape (B, R*Q); groups are
    concatenated in width order, filters in their block order. Pooling ties
    go to the lexicographically first (time, channel) position.
    """
    b, f, t, d = x.shape
    zs, caches = [], []
    for w in widths:
        if w >= t:
            raise ValueError(f"filter width {w} must be < T={t}")
        filters = params[f"conv_w{w}"]
        bias = params[f"conv_b{w}"]
        q = filters.shape[0]
        # (B, F, T-w+1, D, w) -> windows flattened to (B, N, F*w), N=(T-w+1)*D
        win = sliding_window_view(x, w, axis=2)
        win = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4)).reshape(b, -1, f * w)
        pre = win @ filters.reshape(q, f * w).T + bias  # (B, N, Q)
        act = np.maximum(pre, 0.0)
        arg = act.argmax(axis=1)  # first max in row-major (time, channel) order
        z = np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :]
        zs.append(z)
        caches.append((win, pre, arg, w, q))
    return np.concatenate(zs, axis=1), (caches, x.shape)


def bank_backward(params: dict, cache, dz: np.ndarray, widths=DEFAULT_WIDTHS) -> dict[str, np.ndarray]:
    """Gradients for the bank parameters given dL/dz, z as from bank_forward.

    The gradient of each pooled scalar routes to its argmax window; the
    input tensor is data, so dX is not produced.
    """
    caches, (b, f, _, _) = cache
    grads = {}
    offset = 0
    for (win, pre, arg, w, q) in caches:
        dzg = dz[:, offset : offset + q]
        offset += q
        pre_at_max = np.take_along_axis(pre, arg[:, None, :], axis=1)[:, 0, :]
        g = dzg * (pre_at_max > 0)  # ReLU subgradient at the pooled entry
        win_at_max = np.take_along_axis(win, arg[:, :, None], axis=1)  # (B, Q, F*w)
        dw = np.einsum("bq,bqk->qk", g, win_at_max)
        grads[f"conv_w{w}"] = dw.reshape(q, f, w).astype(params[f"conv_w{w}"].dtype)
        grads[f"conv_b{w}"] = g.sum(axis=0).astype(params[f"conv_b{w}"].dtype)
    return grads
