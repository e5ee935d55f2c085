from .core import (
    Tape,
    Tensor,
    absolute,
    active_tape,
    add,
    backward,
    concat,
    constant,
    matmul,
    mean_all,
    mul,
    neg,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_cols,
    sqrt,
    sub,
    sum_all,
    sum_axis,
    take_rows,
    transpose,
)
from .nn import (
    conv1d_depthwise,
    conv2d,
    conv_transpose2d,
    grid_sample_bilinear,
    layer_norm,
    linear,
    softmax,
)
from .optim import Adam

__all__ = [
    "Adam",
    "Tape",
    "Tensor",
    "absolute",
    "active_tape",
    "add",
    "backward",
    "concat",
    "constant",
    "conv1d_depthwise",
    "conv2d",
    "conv_transpose2d",
    "grid_sample_bilinear",
    "layer_norm",
    "linear",
    "matmul",
    "mean_all",
    "mul",
    "neg",
    "relu",
    "reshape",
    "scale",
    "sigmoid",
    "slice_cols",
    "softmax",
    "sqrt",
    "sub",
    "sum_all",
    "sum_axis",
    "take_rows",
    "transpose",
]
