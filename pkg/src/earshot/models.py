"""The three scene classifiers: temporal CNN, stacked-GRU RNN, and the
two-stream early-fusion network combining both.

Every model works on multi-channel embedding tensors of shape (F, T, D),
exposes forward/backward over batches, and yields a penultimate feature
vector (used downstream by the SVM stage) next to its softmax posterior.
Training runs in float32; models can be built in float64 for gradient
verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .nn.adam import AdamState, adam_step
from .nn.conv import DEFAULT_WIDTHS, bank_backward, bank_forward, init_bank
from .nn.gru import GruLayerParams, gru_layer_backward, gru_layer_forward, init_gru_layer
from .nn.ops import (
    dropout,
    dropout_backward,
    glorot_uniform,
    l2_penalty,
    sigmoid,
    softmax,
    softmax_cross_entropy_from_logits,
)

DEFAULT_Q = 1000
DEFAULT_HIDDEN = 256
DEFAULT_TRANSFORM = 256
FUSION_KINDS = ("sum", "max", "concat")


@dataclass
class TrainConfig:
    lam: float = 1e-3
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.lam < 0:
            raise DataError("lr must be positive and lam non-negative")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def stack_channels(x: np.ndarray) -> np.ndarray:
    """(B, F, T, D) -> (B, T, D*F): per time step the D channel slices are
    concatenated along the feature axis, channel-major."""
    b, f, t, d = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(b, t, d * f)


class CnnModel:
    """Cross-channel temporal convolution bank -> ReLU -> 1-max pooling,
    dropout, softmax head."""

    kind = "cnn"

    def __init__(self, feat_height: int, n_classes: int, q: int = DEFAULT_Q,
                 widths=DEFAULT_WIDTHS, dropout_rate: float = 0.5, seed: int = 0,
                 dtype=np.float32):
        self.feat_height = feat_height
        self.n_classes = n_classes
        self.q = q
        self.widths = tuple(widths)
        self.dropout_rate = dropout_rate
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = init_bank(rng, feat_height, q, self.widths, dtype)
        feat_dim = len(self.widths) * q
        self.params["head_w"] = glorot_uniform(rng, (feat_dim, n_classes), feat_dim, n_classes, dtype)
        self.params["head_b"] = np.zeros(n_classes, dtype=dtype)

    @property
    def feature_dim(self) -> int:
        return len(self.widths) * self.q

    def forward(self, x: np.ndarray, mode: str = "eval", rng=None):
        pooled, bank_cache = bank_forward(self.params, x, self.widths)
        dropped, mask = dropout(pooled, self.dropout_rate, mode, rng=rng)
        logits = dropped @ self.params["head_w"] + self.params["head_b"]
        return pooled, logits, (bank_cache, dropped, mask)

    def backward(self, cache, dlogits: np.ndarray) -> dict:
        bank_cache, dropped, mask = cache
        grads = {
            "head_w": dropped.T @ dlogits,
            "head_b": dlogits.sum(axis=0),
        }
        dpooled = dropout_backward(dlogits @ self.params["head_w"].T, mask)
        grads.update(bank_backward(self.params, bank_cache, dpooled, self.widths))
        return grads

    def meta(self) -> dict:
        return {
            "feat_height": self.feat_height,
            "n_classes": self.n_classes,
            "q": self.q,
            "widths": list(self.widths),
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
        }


class _RecurrentBody:
    """Two stacked GRU layers plus the per-step output projection; shared by
    the RNN model and the fusion network's recurrent stream."""

    def __init__(self, rng, input_dim: int, hidden: int, prefix: str, params: dict, dtype):
        self.input_dim = input_dim
        self.hidden = hidden
        self.prefix = prefix
        self.params = params
        for i, in_dim in ((1, input_dim), (2, hidden)):
            layer = init_gru_layer(rng, in_dim, hidden, dtype)
            params[f"{prefix}gru{i}_wx"] = layer.wx
            params[f"{prefix}gru{i}_wh"] = layer.wh
            params[f"{prefix}gru{i}_b"] = layer.b
        params[f"{prefix}proj_w"] = glorot_uniform(rng, (hidden, hidden), hidden, hidden, dtype)
        params[f"{prefix}proj_b"] = np.zeros(hidden, dtype=dtype)

    def _layer(self, i: int) -> GruLayerParams:
        p = self.params
        return GruLayerParams(
            wx=p[f"{self.prefix}gru{i}_wx"], wh=p[f"{self.prefix}gru{i}_wh"],
            b=p[f"{self.prefix}gru{i}_b"]
        )

    def forward(self, x: np.ndarray):
        seq = stack_channels(x)
        if seq.shape[2] != self.input_dim:
            raise DataError(f"per-step input dim {seq.shape[2]} != expected {self.input_dim}")
        hs1, cache1 = gru_layer_forward(self._layer(1), seq)
        hs2, cache2 = gru_layer_forward(self._layer(2), hs1)
        h_last = hs2[:, -1, :]
        feat = h_last @ self.params[f"{self.prefix}proj_w"] + self.params[f"{self.prefix}proj_b"]
        return feat, (cache1, cache2, h_last, hs1.shape)

    def backward(self, cache, dfeat: np.ndarray) -> dict:
        cache1, cache2, h_last, hs1_shape = cache
        pre = self.prefix
        grads = {
            f"{pre}proj_w": h_last.T @ dfeat,
            f"{pre}proj_b": dfeat.sum(axis=0),
        }
        dh_last = dfeat @ self.params[f"{pre}proj_w"].T
        dhs2 = np.zeros(hs1_shape, dtype=dfeat.dtype)
        dhs2[:, -1, :] = dh_last
        dhs1, g2 = gru_layer_backward(self._layer(2), cache2, dhs2)
        _, g1 = gru_layer_backward(self._layer(1), cache1, dhs1)
        for i, g in ((1, g1), (2, g2)):
            grads[f"{pre}gru{i}_wx"] = g["wx"]
            grads[f"{pre}gru{i}_wh"] = g["wh"]
            grads[f"{pre}gru{i}_b"] = g["b"]
        return grads


class RnnModel:
    """Channel-stacked sequence through two GRU layers; the projected output
    at the last time step is the feature vector."""

    kind = "rnn"

    def __init__(self, input_dim: int, n_classes: int, hidden: int = DEFAULT_HIDDEN,
                 dropout_rate: float = 0.1, seed: int = 0, dtype=np.float32):
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.dropout_rate = dropout_rate
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        self.body = _RecurrentBody(rng, input_dim, hidden, "", self.params, dtype)
        self.params["head_w"] = glorot_uniform(rng, (hidden, n_classes), hidden, n_classes, dtype)
        self.params["head_b"] = np.zeros(n_classes, dtype=dtype)

    @property
    def feature_dim(self) -> int:
        return self.hidden

    def forward(self, x: np.ndarray, mode: str = "eval", rng=None):
        feat, body_cache = self.body.forward(x)
        dropped, mask = dropout(feat, self.dropout_rate, mode, rng=rng)
        logits = dropped @ self.params["head_w"] + self.params["head_b"]
        return feat, logits, (body_cache, dropped, mask)

    def backward(self, cache, dlogits: np.ndarray) -> dict:
        body_cache, dropped, mask = cache
        grads = {
            "head_w": dropped.T @ dlogits,
            "head_b": dlogits.sum(axis=0),
        }
        dfeat = dropout_backward(dlogits @ self.params["head_w"].T, mask)
        grads.update(self.body.backward(body_cache, dfeat))
        return grads

    def meta(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "n_classes": self.n_classes,
            "hidden": self.hidden,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
        }


class CrnnModel:
    """Two-stream early fusion: the CNN and RNN bodies run on the same input;
    each stream is transformed by a sigmoid dense layer to a common size and
    the transformed vectors are fused by sum, max, or concatenation."""

    kind = "crnn"

    def __init__(self, feat_height: int, n_input_channels: int, n_classes: int,
                 fusion_kind: str = "sum", q: int = DEFAULT_Q, widths=DEFAULT_WIDTHS,
                 hidden: int = DEFAULT_HIDDEN, transform_dim: int = DEFAULT_TRANSFORM,
                 dropout_conv: float = 0.5, dropout_rec: float = 0.1,
                 dropout_fusion: float = 0.5, seed: int = 0, dtype=np.float32):
        if fusion_kind not in FUSION_KINDS:
            raise DataError(f"fusion_kind must be one of {FUSION_KINDS}, got {fusion_kind!r}")
        self.feat_height = feat_height
        self.n_input_channels = n_input_channels
        self.n_classes = n_classes
        self.fusion_kind = fusion_kind
        self.q = q
        self.widths = tuple(widths)
        self.hidden = hidden
        self.transform_dim = transform_dim
        self.dropout_conv = dropout_conv
        self.dropout_rec = dropout_rec
        self.dropout_fusion = dropout_fusion
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.params = init_bank(rng, feat_height, q, self.widths, dtype)
        self.body = _RecurrentBody(rng, feat_height * n_input_channels, hidden, "rec_",
                                   self.params, dtype)
        conv_dim = len(self.widths) * q
        m = transform_dim
        self.params["trans_conv_w"] = glorot_uniform(rng, (conv_dim, m), conv_dim, m, dtype)
        self.params["trans_conv_b"] = np.zeros(m, dtype=dtype)
        self.params["trans_rec_w"] = glorot_uniform(rng, (hidden, m), hidden, m, dtype)
        self.params["trans_rec_b"] = np.zeros(m, dtype=dtype)
        head_in = 2 * m if fusion_kind == "concat" else m
        self.params["head_w"] = glorot_uniform(rng, (head_in, n_classes), head_in, n_classes, dtype)
        self.params["head_b"] = np.zeros(n_classes, dtype=dtype)

    @property
    def feature_dim(self) -> int:
        return 2 * self.transform_dim if self.fusion_kind == "concat" else self.transform_dim

    def forward(self, x: np.ndarray, mode: str = "eval", rng=None):
        pooled, bank_cache = bank_forward(self.params, x, self.widths)
        conv_in, conv_mask = dropout(pooled, self.dropout_conv, mode, rng=rng)
        rec_feat, body_cache = self.body.forward(x)
        rec_in, rec_mask = dropout(rec_feat, self.dropout_rec, mode, rng=rng)

        t_conv = sigmoid(conv_in @ self.params["trans_conv_w"] + self.params["trans_conv_b"])
        t_rec = sigmoid(rec_in @ self.params["trans_rec_w"] + self.params["trans_rec_b"])

        if self.fusion_kind == "sum":
            fused = t_conv + t_rec
        elif self.fusion_kind == "max":
            fused = np.where(t_conv >= t_rec, t_conv, t_rec)  # ties take the conv stream
        else:
            fused = np.concatenate([t_conv, t_rec], axis=1)

        dropped, fusion_mask = dropout(fused, self.dropout_fusion, mode, rng=rng)
        logits = dropped @ self.params["head_w"] + self.params["head_b"]
        cache = (bank_cache, conv_in, conv_mask, body_cache, rec_in, rec_mask,
                 t_conv, t_rec, dropped, fusion_mask)
        return fused, logits, cache

    def backward(self, cache, dlogits: np.ndarray) -> dict:
        (bank_cache, conv_in, conv_mask, body_cache, rec_in, rec_mask,
         t_conv, t_rec, dropped, fusion_mask) = cache
        grads = {
            "head_w": dropped.T @ dlogits,
            "head_b": dlogits.sum(axis=0),
        }
        dfused = dropout_backward(dlogits @ self.params["head_w"].T, fusion_mask)

        m = self.transform_dim
        if self.fusion_kind == "sum":
            dt_conv, dt_rec = dfused, dfused
        elif self.fusion_kind == "max":
            take_conv = t_conv >= t_rec
            dt_conv = dfused * take_conv
            dt_rec = dfused * ~take_conv
        else:
            dt_conv, dt_rec = dfused[:, :m], dfused[:, m:]

        da_conv = dt_conv * t_conv * (1.0 - t_conv)
        grads["trans_conv_w"] = conv_in.T @ da_conv
        grads["trans_conv_b"] = da_conv.sum(axis=0)
        dpooled = dropout_backward(da_conv @ self.params["trans_conv_w"].T, conv_mask)
        grads.update(bank_backward(self.params, bank_cache, dpooled, self.widths))

        da_rec = dt_rec * t_rec * (1.0 - t_rec)
        grads["trans_rec_w"] = rec_in.T @ da_rec
        grads["trans_rec_b"] = da_rec.sum(axis=0)
        drec_feat = dropout_backward(da_rec @ self.params["trans_rec_w"].T, rec_mask)
        grads.update(self.body.backward(body_cache, drec_feat))
        return grads

    def meta(self) -> dict:
        return {
            "feat_height": self.feat_height,
            "n_input_channels": self.n_input_channels,
            "n_classes": self.n_classes,
            "fusion_kind": self.fusion_kind,
            "q": self.q,
            "widths": list(self.widths),
            "hidden": self.hidden,
            "transform_dim": self.transform_dim,
            "dropout_conv": self.dropout_conv,
            "dropout_rec": self.dropout_rec,
            "dropout_fusion": self.dropout_fusion,
            "seed": self.seed,
        }


def model_from_meta(kind: str, meta: dict, dtype=np.float32):
    if kind == "cnn":
        return CnnModel(meta["feat_height"], meta["n_classes"], meta["q"],
                        tuple(meta["widths"]), meta["dropout_rate"], meta["seed"], dtype)
    if kind == "rnn":
        return RnnModel(meta["input_dim"], meta["n_classes"], meta["hidden"],
                        meta["dropout_rate"], meta["seed"], dtype)
    if kind == "crnn":
        return CrnnModel(meta["feat_height"], meta["n_input_channels"], meta["n_classes"],
                         meta["fusion_kind"], meta["q"], tuple(meta["widths"]), meta["hidden"],
                         meta["transform_dim"], meta["dropout_conv"], meta["dropout_rec"],
                         meta["dropout_fusion"], meta["seed"], dtype)
    raise DataError(f"unknown model kind {kind!r}")


def train_model(model, x: np.ndarray, labels: np.ndarray, cfg: TrainConfig) -> list[EpochStats]:
    """Mini-batch Adam on summed cross-entropy with L2 regularization.

    x: (N, F, T, D) float tensors of 4 s segments; labels: (N,) int ids.
    Deterministic for a fixed config seed. Raises NumericalError if the
    loss stops being finite.
    """
    labels = np.asarray(labels)
    n = x.shape[0]
    present = set(np.unique(labels).tolist())
    missing = [c for c in range(model.n_classes) if c not in present]
    if missing:
        raise DataError(f"training data is missing categories {missing}")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=cfg.lr)
    history: list[EpochStats] = []
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        total_ce = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, logits, cache = model.forward(x[idx], mode="train", rng=rng)
            ce, dlogits, probs = softmax_cross_entropy_from_logits(logits, labels[idx])
            if not np.isfinite(ce):
                raise NumericalError(
                    f"{model.kind} training diverged at epoch {epoch}: loss={ce!r}, "
                    f"lr={cfg.lr}, batch_size={cfg.batch_size}"
                )
            grads = model.backward(cache, dlogits)
            for key, p in model.params.items():
                if key in grads:
                    grads[key] += cfg.lam * p
                else:
                    grads[key] = cfg.lam * p
            adam_step(state, model.params, grads)
            total_ce += ce
            correct += int((probs.argmax(axis=1) == labels[idx]).sum())
        loss = total_ce / n + l2_penalty(model.params, cfg.lam)
        history.append(EpochStats(epoch=epoch, loss=loss, accuracy=100.0 * correct / n))
    return history


def extract_features(model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode (dropout-off) penultimate features, one row per segment."""
    rows = []
    for start in range(0, x.shape[0], batch_size):
        feat, _, _ = model.forward(x[start : start + batch_size], mode="eval")
        rows.append(feat)
    return np.concatenate(rows, axis=0)


def model_posteriors(model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode softmax posteriors, one row per segment."""
    rows = []
    for start in range(0, x.shape[0], batch_size):
        _, logits, _ = model.forward(x[start : start + batch_size], mode="eval")
        rows.append(softmax(logits))
    return np.concatenate(rows, axis=0)


def loss_and_grads(model, x: np.ndarray, labels: np.ndarray, lam: float = 1e-3):
    """Full regularized loss and analytic gradients in eval mode (no
    dropout), for gradient verification."""
    _, logits, cache = model.forward(x, mode="eval")
    ce, dlogits, _ = softmax_cross_entropy_from_logits(logits, labels)
    grads = model.backward(cache, dlogits)
    for key, p in model.params.items():
        if key in grads:
            grads[key] = grads[key] + lam * p
        else:
            grads[key] = lam * p
    return ce + l2_penalty(model.params, lam), grads


def model_loss_fn(model, x: np.ndarray, labels: np.ndarray, lam: float = 1e-3):
    """Loss closure over the model's parameter dict, for finite differences."""

    def fn(_params):
        _, logits, _ = model.forward(x, mode="eval")
        ce, _, _ = softmax_cross_entropy_from_logits(logits, labels)
        return ce + l2_penalty(model.params, lam)

    return fn


def save_model(path, model) -> None:
    from .checkpoint import write_checkpoint

    write_checkpoint(path, model.kind, model.meta(), model.params)


def load_model(path, dtype=np.float32):
    from .checkpoint import read_checkpoint

    kind, meta, blocks = read_checkpoint(path)
    model = model_from_meta(kind, meta, dtype)
    for key in model.params:
        model.params[key] = blocks[key].astype(dtype)
    return model
