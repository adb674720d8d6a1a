"""Gradient verification profiles: per-layer and per-architecture checks.

Everything runs at tiny dimensions in float64 so central differences are
trustworthy; the CLI gradcheck command and the acceptance suite both call
into this module.
"""

from __future__ import annotations

import numpy as np

from .models import CnnModel, CrnnModel, RnnModel, loss_and_grads, model_loss_fn
from .nn.conv import bank_backward, bank_forward, init_bank
from .nn.gradcheck import GradCheckResult, grad_check
from .nn.gru import GruLayerParams, gru_layer_backward, gru_layer_forward, init_gru_layer
from .nn.ops import dense, dense_backward

TINY = {"q": 4, "hidden": 8, "transform_dim": 8, "n_classes": 3, "t": 12, "d": 6}


def check_dense_sigmoid(seed: int = 7) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((5, 7))
    params = {
        "w": rng.standard_normal((7, 4)),
        "b": rng.standard_normal(4),
    }
    r = rng.standard_normal((5, 4))  # fixed projection makes the loss scalar

    def loss(p):
        y, _ = dense(x, p["w"], p["b"], "sigmoid")
        return float(np.sum(y * r))

    y, cache = dense(x, params["w"], params["b"], "sigmoid")
    _, dw, db = dense_backward(cache, r)
    return grad_check(loss, params, {"w": dw, "b": db})


def check_conv_bank(seed: int = 11) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    f, t, d, q = 4, 12, 3, 3
    x = rng.random((2, f, t, d))
    params = init_bank(rng, f, q, dtype=np.float64)
    r = rng.standard_normal((2, 3 * q))

    def loss(p):
        z, _ = bank_forward(p, x)
        return float(np.sum(z * r))

    z, cache = bank_forward(params, x)
    grads = bank_backward(params, cache, r)
    return grad_check(loss, params, grads)


def check_gru_layer(seed: int = 13) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    in_dim, hidden, t, b = 5, 6, 7, 3
    seq = rng.standard_normal((b, t, in_dim))
    layer = init_gru_layer(rng, in_dim, hidden, dtype=np.float64)
    params = {"wx": layer.wx, "wh": layer.wh, "b": layer.b}
    r = rng.standard_normal((b, t, hidden))

    def loss(p):
        lp = GruLayerParams(wx=p["wx"], wh=p["wh"], b=p["b"])
        hs, _ = gru_layer_forward(lp, seq)
        return float(np.sum(hs * r))

    hs, caches = gru_layer_forward(layer, seq)
    _, grads = gru_layer_backward(layer, caches, r)
    return grad_check(loss, params, grads)


def tiny_models(seed: int = 0, dtype=np.float64):
    """The five architectures (CNN, RNN, three fusion kinds) at tiny dims."""
    c = TINY["n_classes"]
    f = 2 * (c - 1)
    d = TINY["d"]
    models = [
        ("cnn", CnnModel(f, c, q=TINY["q"], seed=seed, dtype=dtype)),
        ("rnn", RnnModel(f * d, c, hidden=TINY["hidden"], seed=seed, dtype=dtype)),
    ]
    for kind in ("sum", "max", "concat"):
        models.append((
            f"crnn-{kind}",
            CrnnModel(f, d, c, fusion_kind=kind, q=TINY["q"], hidden=TINY["hidden"],
                      transform_dim=TINY["transform_dim"], seed=seed, dtype=dtype),
        ))
    return models


def check_architecture(name: str, model, seed: int = 17) -> GradCheckResult:
    rng = np.random.default_rng(seed)
    c = TINY["n_classes"]
    x = rng.random((2, 2 * (c - 1), TINY["t"], TINY["d"]))
    labels = rng.integers(0, c, size=2)
    _, grads = loss_and_grads(model, x, labels, lam=1e-3)
    return grad_check(model_loss_fn(model, x, labels, lam=1e-3), model.params, grads)


def run_all_checks(tol: float = 1e-4) -> list[tuple[str, float, bool]]:
    """(name, max scaled error, passed) for every layer and architecture."""
    rows = []
    for name, result in (
        ("dense-sigmoid", check_dense_sigmoid()),
        ("conv-bank", check_conv_bank()),
        ("gru-layer", check_gru_layer()),
    ):
        rows.append((name, result.max_error, result.passed(tol)))
    for name, model in tiny_models():
        result = check_architecture(name, model)
        rows.append((name, result.max_error, result.passed(tol)))
    return rows
