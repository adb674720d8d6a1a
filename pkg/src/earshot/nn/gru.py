"""Gated recurrent unit layers with backpropagation through time.

Gate formulation (z = update, r = reset, c = candidate):

    z = sigmoid(x Wxz + h Whz + bz)
    r = sigmoid(x Wxr + h Whr + br)
    c = tanh(x Wxc + (r * h) Whc + bc)
    h' = (1 - z) * h + z * c

The reset gate multiplies the previous hidden state before the hidden-side
matrix product. Per-layer weights are stored packed along the gate axis in
order [z | r | c].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import glorot_uniform, sigmoid


@dataclass
class GruLayerParams:
    """Packed weights for one GRU layer.

    wx: (input_dim, 3H), wh: (H, 3H), b: (3H,), gate order [z | r | c].
    """

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[0]

    @property
    def input_size(self) -> int:
        return self.wx.shape[0]

    # Named per-gate views (slices of the packed arrays).
    def gate_slices(self):
        h = self.hidden_size
        return {"z": slice(0, h), "r": slice(h, 2 * h), "c": slice(2 * h, 3 * h)}


def init_gru_layer(rng: np.random.Generator, input_dim: int, hidden: int,
                   dtype=np.float32) -> GruLayerParams:
    # Each (input_dim, H) / (H, H) gate slice gets its own Glorot scale;
    # the three slices share fans, so the packed matrix can be drawn at once.
    wx = glorot_uniform(rng, (input_dim, 3 * hidden), input_dim, hidden, dtype)
    wh = glorot_uniform(rng, (hidden, 3 * hidden), hidden, hidden, dtype)
    b = np.zeros(3 * hidden, dtype=dtype)
    return GruLayerParams(wx=wx, wh=wh, b=b)


def gru_step(params: GruLayerParams, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One recurrence step; x (..., input_dim), h_prev (..., H)."""
    h_new, _ = _step_with_cache(params, x, h_prev)
    return h_new


def _step_with_cache(params: GruLayerParams, x, h_prev):
    hs = params.hidden_size
    gx = x @ params.wx + params.b  # (B, 3H)
    gh_zr = h_prev @ params.wh[:, : 2 * hs]
    z = sigmoid(gx[..., :hs] + gh_zr[..., :hs])
    r = sigmoid(gx[..., hs : 2 * hs] + gh_zr[..., hs:])
    rh = r * h_prev
    c = np.tanh(gx[..., 2 * hs :] + rh @ params.wh[:, 2 * hs :])
    h_new = (1.0 - z) * h_prev + z * c
    return h_new, (x, h_prev, z, r, rh, c)


def gru_layer_forward(params: GruLayerParams, seq: np.ndarray):
    """Run a layer over a batch of sequences.

    seq: (B, T, input_dim). Initial hidden state is zero. Returns
    (hs, caches) with hs of shape (B, T, H).
    """
    b, t, _ = seq.shape
    if t < 1:
        raise ValueError("empty sequence")
    h = np.zeros((b, params.hidden_size), dtype=seq.dtype)
    hs = np.empty((b, t, params.hidden_size), dtype=seq.dtype)
    caches = []
    for i in range(t):
        h, cache = _step_with_cache(params, seq[:, i, :], h)
        hs[:, i, :] = h
        caches.append(cache)
    return hs, caches


def gru_layer_backward(params: GruLayerParams, caches, dhs: np.ndarray):
    """BPTT through one layer.

    dhs: (B, T, H) gradients on every hidden state from above. Returns
    (dseq, grads) where grads holds dwx, dwh, db.
    """
    hs = params.hidden_size
    wxz, wxr, wxc = params.wx[:, :hs], params.wx[:, hs : 2 * hs], params.wx[:, 2 * hs :]
    whz, whr, whc = params.wh[:, :hs], params.wh[:, hs : 2 * hs], params.wh[:, 2 * hs :]

    dwx = np.zeros_like(params.wx)
    dwh = np.zeros_like(params.wh)
    db = np.zeros_like(params.b)
    t = len(caches)
    b_sz, _, in_dim = dhs.shape[0], dhs.shape[1], params.input_size
    dseq = np.empty((b_sz, t, in_dim), dtype=dhs.dtype)

    dh = np.zeros((b_sz, hs), dtype=dhs.dtype)
    for i in reversed(range(t)):
        x, h_prev, z, r, rh, c = caches[i]
        dh = dh + dhs[:, i, :]

        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)

        dac = dc * (1.0 - c * c)
        drh = dac @ whc.T
        dr = drh * h_prev
        dh_prev += drh * r

        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)

        dwx[:, :hs] += x.T @ daz
        dwx[:, hs : 2 * hs] += x.T @ dar
        dwx[:, 2 * hs :] += x.T @ dac
        dwh[:, :hs] += h_prev.T @ daz
        dwh[:, hs : 2 * hs] += h_prev.T @ dar
        dwh[:, 2 * hs :] += rh.T @ dac
        db[:hs] += daz.sum(axis=0)
        db[hs : 2 * hs] += dar.sum(axis=0)
        db[2 * hs :] += dac.sum(axis=0)

        dseq[:, i, :] = daz @ wxz.T + dar @ wxr.T + dac @ wxc.T
        dh = dh_prev + daz @ whz.T + dar @ whr.T
    return dseq, {"wx": dwx, "wh": dwh, "b": db}


def rnn_forward(layers: list[GruLayerParams], proj_w: np.ndarray, proj_b: np.ndarray,
                seq: np.ndarray) -> np.ndarray:
    """Stacked GRU layers followed by a linear output projection.

    seq: (B, T, input_dim); returns the projected outputs (B, T, H) at every
    time step. Initial hidden states are zero.
    """
    h = seq
    for layer in layers:
        h, _ = gru_layer_forward(layer, h)
    return h @ proj_w + proj_b
