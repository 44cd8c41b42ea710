"""Dense float64 tensors with reverse-mode differentiation over a fixed op set."""

from .core import DimensionError, MaskError, NumericalError, Tensor, as_tensor, backward, no_grad
from .ops import (
    add,
    broadcast,
    concat,
    embedding,
    l1_loss,
    masked_softmax,
    matmul,
    mean,
    mse_loss,
    mul,
    reshape,
    rms_norm,
    scale,
    silu,
    slice_axis,
    sub,
    total,
    transpose,
)
from .optim import AdamW, OptimizerState, adamw_step

__all__ = [
    "AdamW",
    "DimensionError",
    "MaskError",
    "NumericalError",
    "OptimizerState",
    "Tensor",
    "adamw_step",
    "add",
    "as_tensor",
    "backward",
    "broadcast",
    "concat",
    "embedding",
    "l1_loss",
    "masked_softmax",
    "matmul",
    "mean",
    "mse_loss",
    "mul",
    "no_grad",
    "reshape",
    "rms_norm",
    "scale",
    "silu",
    "slice_axis",
    "sub",
    "total",
    "transpose",
]
