"""Comparison models: the linear controller variant, the CNN baseline and copy-last-frame."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autograd import Conv2d, ConvTranspose2d, Linear, Module, Tensor
from .autograd import functional as F
from .autograd.tensor import ContractError, DimensionError
from .controller import ControllerConfig, _theta_tensor, history_length, stack_history

CAPACITY_TOLERANCE = 0.05


def fern_controller_param_count(cfg: ControllerConfig) -> int:
    h, d, k = cfg.hidden, cfg.decision_width, cfg.decision_width // 2
    per_block = (h * d + d) + 2 * d + (3 * k * h + h)
    return (cfg.in_width * h + h) + cfg.n_blocks * per_block + (h * cfg.latent_dim + cfg.latent_dim)


def matched_width(in_width: int, out_width: int, target: int, n_layers: int = 4) -> int:
    """Uniform hidden width whose ``n_layers``-layer MLP has about ``target`` parameters."""
    # params(w) = (n-2) w^2 + (in + out + n - 1) w + out
    a = n_layers - 2
    b = in_width + out_width + n_layers - 1
    c = out_width - target
    if a == 0:
        return max(1, round(-c / b))
    return max(1, round((-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)))


class LinearController(Module):
    """Four fully connected layers with ReLU between them, used residually by default."""

    def __init__(self, cfg: ControllerConfig, rng: np.random.Generator, width: int | None = None):
        self.cfg = cfg
        target = fern_controller_param_count(cfg)
        self.width = width or matched_width(cfg.in_width, cfg.latent_dim, target)
        dims = [cfg.in_width, self.width, self.width, self.width, cfg.latent_dim]
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        if cfg.residual:
            self.layers[-1].zero_()
        if width is None:
            self.check_capacity(target)

    def check_capacity(self, target: int) -> None:
        n = self.num_parameters()
        if abs(n - target) > CAPACITY_TOLERANCE * target:
            raise ContractError(f"linear controller has {n} parameters, fern controller {target}")

    @property
    def latent_dim(self) -> int:
        return self.cfg.latent_dim

    @property
    def feature_width(self) -> int:
        return self.width

    def step_and_features(self, z_history, theta) -> tuple:
        if history_length(z_history) != self.cfg.history_len:
            raise ContractError(
                f"controller expects {self.cfg.history_len} history latents, got {history_length(z_history)}")
        flat, last = stack_history(z_history, self.cfg.latent_dim)
        h = F.concat([flat, _theta_tensor(theta, flat.shape[0], self.cfg.control_width, flat.dtype)], axis=1)
        for layer in self.layers[:-1]:
            h = F.relu(layer(h))
        step = self.layers[-1](h)
        return (last + step if self.cfg.residual else step), h

    def forward(self, z_history, theta) -> Tensor:
        return self.step_and_features(z_history, theta)[0]


def linear_controller_forward(ctrl: LinearController, z_history, theta) -> Tensor:
    return ctrl(z_history, theta)


@dataclass
class CnnConfig:
    image_shape: tuple = (1, 28, 28)
    channels: int = 128
    bottleneck: int = 128

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_shape"] = list(self.image_shape)
        return d


class CnnBaseline(Module):
    """Two strided 3x3 convs, two FC layers (theta joins the first), two strided 3x3 deconvs."""

    def __init__(self, cfg: CnnConfig, rng: np.random.Generator):
        self.cfg = cfg
        c, h, w = cfg.image_shape
        if h % 4 or w % 4:
            raise ValueError(f"image {h}x{w} must be divisible by 4")
        ch = cfg.channels
        self.grid = (ch, h // 4, w // 4)
        flat = int(np.prod(self.grid))
        self.conv1 = Conv2d(c, ch, 3, rng, stride=2, padding=1)
        self.conv2 = Conv2d(ch, ch, 3, rng, stride=2, padding=1)
        self.fc1 = Linear(flat + 1, cfg.bottleneck, rng)
        self.fc2 = Linear(cfg.bottleneck, flat, rng)
        self.deconv1 = ConvTranspose2d(ch, ch, 3, rng, stride=2, padding=1, output_padding=1)
        self.deconv2 = ConvTranspose2d(ch, c, 3, rng, stride=2, padding=1, output_padding=1)

    def forward(self, images: Tensor, theta) -> Tensor:
        if images.ndim != 4 or tuple(images.shape[1:]) != tuple(self.cfg.image_shape):
            raise DimensionError(f"CNN baseline expects [N, {self.cfg.image_shape}], got {images.shape}")
        n = images.shape[0]
        h = F.relu(self.conv2(F.relu(self.conv1(images))))
        h = F.concat([F.reshape(h, (n, -1)), _theta_tensor(theta, n, 1, images.dtype)], axis=1)
        h = F.relu(self.fc2(F.relu(self.fc1(h))))
        h = F.relu(self.deconv1(F.reshape(h, (n,) + self.grid)))
        # the output layer is squashed to the [-1, 1] image range
        return F.tanh(self.deconv2(h))


def cnn_baseline_forward(model: CnnBaseline, images: Tensor, theta) -> Tensor:
    return model(images, theta)


def copy_last_frame(frames, horizon: int = 1) -> np.ndarray:
    """Predict every future frame as the most recent observed one.

    ``frames`` is a sequence (or array) of frames ordered oldest first, or a
    batch shaped [N, T, ...]; ``horizon`` is ignored by construction.
    """
    if isinstance(frames, (list, tuple)):
        if not frames:
            raise ContractError("copy_last_frame needs at least one frame")
        return np.asarray(frames[-1])
    arr = np.asarray(frames)
    if arr.shape[0] == 0 or arr.size == 0:
        raise ContractError("copy_last_frame needs at least one frame")
    # [N, T, C, H, W] batches keep their batch axis
    return arr[:, -1] if arr.ndim == 5 else arr[-1]
