from . import functional
from .functional import (
    activation,
    batch_norm,
    concat,
    conv2d,
    conv2d_transpose,
    matmul,
    mse,
    mse_per_element,
    relu,
    reshape,
    sigmoid,
    split,
    tanh,
)
from .gradcheck import check_gradients, numeric_grad, relative_error
from .nn import BatchNorm, Conv2d, ConvTranspose2d, Linear, Module, Parameter
from .optim import Adam, AdamState, adam_step
from .tensor import ContractError, DimensionError, Tensor, is_grad_enabled, no_grad, tensor

__all__ = [
    "Adam", "AdamState", "BatchNorm", "ContractError", "Conv2d", "ConvTranspose2d",
    "DimensionError", "Linear", "Module", "Parameter", "Tensor", "activation", "adam_step",
    "batch_norm", "check_gradients", "concat", "conv2d", "conv2d_transpose", "functional",
    "is_grad_enabled", "matmul", "mse", "mse_per_element", "no_grad", "numeric_grad",
    "relative_error", "relu", "reshape", "sigmoid", "split", "tanh", "tensor",
]
