from .tensor import Tensor, constant, from_op, parameter
from .ops import (
    BatchNormState,
    add,
    batchnorm1d,
    conv1d,
    diagonal,
    gelu,
    glu,
    inner_product_full,
    logsumexp,
    matmul2d,
    mean_all,
    mix,
    mse,
    pairwise_inner,
    relu,
    reshape,
    scale,
    softmax,
    sub,
    subject_mix,
)
from .optim import AdamState, NonFiniteGradient, adam_step
from .gradcheck import grad_check

__all__ = [
    "AdamState",
    "BatchNormState",
    "NonFiniteGradient",
    "Tensor",
    "adam_step",
    "add",
    "batchnorm1d",
    "constant",
    "conv1d",
    "diagonal",
    "from_op",
    "gelu",
    "glu",
    "grad_check",
    "inner_product_full",
    "logsumexp",
    "matmul2d",
    "mean_all",
    "mix",
    "mse",
    "pairwise_inner",
    "parameter",
    "relu",
    "reshape",
    "scale",
    "softmax",
    "sub",
    "subject_mix",
]
