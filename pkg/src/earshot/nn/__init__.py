from .ops import (
    conv_time_channel,
    cross_entropy_l2,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    glorot_uniform,
    l2_penalty,
    log_softmax,
    one_max_pool,
    relu,
    relu_grad,
    sigmoid,
    softmax,
    softmax_cross_entropy_from_logits,
)
from .conv import DEFAULT_WIDTHS, bank_backward, bank_forward, init_bank
from .gru import GruLayerParams, gru_layer_backward, gru_layer_forward, gru_step, init_gru_layer, rnn_forward
from .adam import AdamState, adam_step
from .gradcheck import GradCheckResult, grad_check

__all__ = [
    "AdamState",
    "DEFAULT_WIDTHS",
    "GradCheckResult",
    "GruLayerParams",
    "adam_step",
    "bank_backward",
    "bank_forward",
    "conv_time_channel",
    "cross_entropy_l2",
    "dense",
    "dense_backward",
    "dropout",
    "dropout_backward",
    "glorot_uniform",
    "grad_check",
    "gru_layer_backward",
    "gru_layer_forward",
    "gru_step",
    "init_bank",
    "init_gru_layer",
    "l2_penalty",
    "log_softmax",
    "one_max_pool",
    "relu",
    "relu_grad",
    "rnn_forward",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy_from_logits",
]
