"""Residual latent controller and the losses that train it.

``control_step`` computes ``z_last + TN(concat(history, theta))``: the
transformer network predicts a step in latent space and the residual add
applies it to the most recent latent.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autograd import Linear, Module, Tensor
from .autograd import functional as F
from .autograd.tensor import ContractError, DimensionError
from .fern import TransformerNetwork

CONTROL_RANGES = {
    "rotation": (-np.pi / 4, np.pi / 4),
    "dilation": (-2.0, 2.0),
    "timestep": (1.0, 5.0),
}


@dataclass(frozen=True)
class ControlSpec:
    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in CONTROL_RANGES:
            raise ValueError(f"unknown control kind {self.kind!r}; expected one of {sorted(CONTROL_RANGES)}")

    def in_distribution(self) -> bool:
        lo, hi = CONTROL_RANGES[self.kind]
        return lo <= self.value <= hi


@dataclass
class ControllerConfig:
    latent_dim: int = 100
    history_len: int = 1
    hidden: int = 256
    decision_width: int = 256
    n_blocks: int = 1
    control_width: int = 1
    kind: str = "fern"          # "fern" or "linear"
    residual: bool = True       # only consulted by the linear variant

    @property
    def in_width(self) -> int:
        return self.history_len * self.latent_dim + self.control_width

    def to_dict(self) -> dict:
        return asdict(self)


def _theta_tensor(theta, n: int, width: int, dtype) -> Tensor:
    if isinstance(theta, Tensor):
        arr = theta.data
    else:
        arr = np.asarray(theta, dtype=dtype)
    arr = np.broadcast_to(arr.reshape(-1, width) if arr.size != 1 else arr.reshape(1, 1), (n, width))
    return Tensor(np.ascontiguousarray(arr, dtype=dtype))


def stack_history(z_history, latent_dim: int) -> tuple:
    """Accept a list of [N, d] tensors or one [N, n, d] tensor; return (flat, last)."""
    if isinstance(z_history, Tensor):
        if z_history.ndim == 2:
            z_history = [z_history]
        else:
            n = z_history.shape[1]
            return F.reshape(z_history, (z_history.shape[0], n * latent_dim)), z_history[:, n - 1, :]
    for z in z_history:
        if z.ndim != 2 or z.shape[1] != latent_dim:
            raise DimensionError(f"history latents must be [N, {latent_dim}], got {z.shape}")
    flat = z_history[0] if len(z_history) == 1 else F.concat(list(z_history), axis=1)
    return flat, z_history[-1]


def history_length(z_history) -> int:
    if isinstance(z_history, Tensor):
        return 1 if z_history.ndim == 2 else z_history.shape[1]
    return len(z_history)


class ControllerModule(Module):
    """``C(z_{t-n+1..t}, theta) = z_t + TN(z_{t-n+1..t}, theta)``."""

    def __init__(self, cfg: ControllerConfig, rng: np.random.Generator):
        if cfg.kind != "fern":
            raise ValueError("ControllerModule is the fern controller; use baselines.LinearController")
        self.cfg = cfg
        self.transformer = TransformerNetwork(cfg.in_width, cfg.latent_dim, cfg.hidden,
                                              cfg.decision_width, cfg.n_blocks, rng)

    @property
    def latent_dim(self) -> int:
        return self.cfg.latent_dim

    @property
    def feature_width(self) -> int:
        return self.cfg.hidden

    def inputs(self, z_history, theta) -> tuple:
        if history_length(z_history) != self.cfg.history_len:
            raise ContractError(
                f"controller expects {self.cfg.history_len} history latents, got {history_length(z_history)}")
        flat, last = stack_history(z_history, self.cfg.latent_dim)
        th = _theta_tensor(theta, flat.shape[0], self.cfg.control_width, flat.dtype)
        return F.concat([flat, th], axis=1), last

    def step_and_features(self, z_history, theta) -> tuple:
        x, last = self.inputs(z_history, theta)
        h = self.transformer.features(x)
        return last + self.transformer.output_map(h), h

    def forward(self, z_history, theta) -> Tensor:
        return self.step_and_features(z_history, theta)[0]


def control_step(ctrl, z_history, theta) -> Tensor:
    return ctrl(z_history, theta)


def compose_controllers(ctrls, specs, z: Tensor) -> Tensor:
    """Apply single-history controllers one after another, in the given order."""
    if len(ctrls) != len(specs):
        raise ContractError(f"{len(ctrls)} controllers but {len(specs)} control specs")
    dims = {c.latent_dim for c in ctrls}
    if len(dims) > 1:
        raise ContractError(f"controllers disagree on latent dimension: {sorted(dims)}")
    if dims and z.shape[1] != dims.pop():
        raise ContractError(f"latent of width {z.shape[1]} does not match controllers")
    for ctrl, spec in zip(ctrls, specs):
        z = ctrl([z], spec.value if isinstance(spec, ControlSpec) else spec)
    return z


def latent_loss(z_target: Tensor, z_hat: Tensor) -> Tensor:
    """Batch mean of squared L2 distances between target and predicted latents."""
    return F.mse(z_hat, z_target)


def image_loss(i_target: Tensor, i_hat: Tensor) -> Tensor:
    """Batch mean of squared L2 distances in image space."""
    return F.mse(i_hat, i_target)


class ScalarHead(Module):
    """Single linear readout from the transformer's last hidden activation."""

    def __init__(self, in_width: int, rng: np.random.Generator):
        self.fc = Linear(in_width, 1, rng)
        self.fc.zero_()

    def forward(self, features: Tensor) -> Tensor:
        return self.fc(features)


def scalar_head(features: Tensor, head: ScalarHead) -> Tensor:
    return head(features)
