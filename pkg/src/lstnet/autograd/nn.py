"""Minimal module system: parameter discovery, modes, and the layers used here."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import DEFAULT_DTYPE, Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Parameters, buffers and children are discovered from instance attributes.

    Lists of modules are walked too. Buffers are numpy arrays named in
    ``_buffer_names`` (batch-norm running statistics).
    """

    _buffer_names: tuple = ()
    training: bool = True

    def named_children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name in self._buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self.named_children():
            yield from child.named_buffers(prefix + name + ".")

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.named_children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: b for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict) -> None:
        for name, p in self.named_parameters():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: stored shape {arr.shape} != parameter shape {p.data.shape}")
            p.data = arr.astype(p.data.dtype).copy()
        for name, buf in self.named_buffers():
            buf[...] = np.asarray(state[name], dtype=buf.dtype)

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place (used by gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype) -> None:
        for name in self._buffer_names:
            setattr(self, name, getattr(self, name).astype(dtype))
        for _, child in self.named_children():
            child._cast_buffers(dtype)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """``y = x @ weight + bias`` with ``weight`` stored [in, out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features, DEFAULT_DTYPE)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)

    def zero_(self) -> None:
        self.weight.data[...] = 0
        if self.bias is not None:
            self.bias.data[...] = 0


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        self.stride, self.padding = stride, padding
        self.weight = Parameter(_uniform(rng, (out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel))
        self.bias = Parameter(np.zeros(out_ch, DEFAULT_DTYPE)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    # weight layout [in_ch, out_ch, k, k], i.e. the conv2d layout of the adjoint map
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, output_padding: int = 0, bias: bool = True):
        self.stride, self.padding, self.output_padding = stride, padding, output_padding
        self.weight = Parameter(_uniform(rng, (in_ch, out_ch, kernel, kernel), in_ch * kernel * kernel))
        self.bias = Parameter(np.zeros(out_ch, DEFAULT_DTYPE)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d_transpose(x, self.weight, self.bias, self.stride, self.padding,
                                  self.output_padding)


class BatchNorm(Module):
    """Batch normalisation over channel axis 1 for 2-D and 4-D inputs."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels, DEFAULT_DTYPE))
        self.beta = Parameter(np.zeros(channels, DEFAULT_DTYPE))
        self.running_mean = np.zeros(channels, DEFAULT_DTYPE)
        self.running_var = np.ones(channels, DEFAULT_DTYPE)

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)
