"""Residual variational autoencoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autograd import BatchNorm, Conv2d, ConvTranspose2d, Linear, Module, Tensor
from .autograd import functional as F
from .autograd.tensor import DimensionError


@dataclass
class VaeConfig:
    image_shape: tuple = (1, 28, 28)
    latent_dim: int = 100
    channels: tuple = (32, 64)

    def __post_init__(self):
        self.image_shape = tuple(self.image_shape)
        self.channels = tuple(self.channels)
        c, h, w = self.image_shape
        k = 2 ** len(self.channels)
        if h % k or w % k:
            raise ValueError(f"image {h}x{w} is not divisible by 2^{len(self.channels)} downsampling")

    @property
    def bottleneck(self) -> tuple:
        k = 2 ** len(self.channels)
        return (self.channels[-1], self.image_shape[1] // k, self.image_shape[2] // k)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_shape"] = list(self.image_shape)
        d["channels"] = list(self.channels)
        return d


MNIST_VAE = VaeConfig((1, 28, 28), 100, (32, 64))
SEQUENCE_VAE = VaeConfig((1, 64, 64), 256, (64, 128, 256))


class ResidualDown(Module):
    """Halves resolution: conv3x3/2 -> BN -> ReLU -> conv3x3, plus a 1x1/2 projection."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.conv1 = Conv2d(cin, cout, 3, rng, stride=2, padding=1)
        self.norm = BatchNorm(cout)
        self.conv2 = Conv2d(cout, cout, 3, rng, padding=1)
        self.skip = Conv2d(cin, cout, 1, rng, stride=2)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv2(F.relu(self.norm(self.conv1(x))))
        return h + self.skip(x)


class ResidualUp(Module):
    """Doubles resolution with transposed convolutions, mirroring :class:`ResidualDown`."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, mid: int | None = None):
        mid = mid or cout
        self.conv1 = ConvTranspose2d(cin, mid, 3, rng, stride=2, padding=1, output_padding=1)
        self.norm = BatchNorm(mid)
        self.conv2 = Conv2d(mid, cout, 3, rng, padding=1)
        self.skip = ConvTranspose2d(cin, cout, 1, rng, stride=2, output_padding=1)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv2(F.relu(self.norm(self.conv1(x))))
        return h + self.skip(x)


class Encoder(Module):
    def __init__(self, cfg: VaeConfig, rng: np.random.Generator):
        self.cfg = cfg
        chans = (cfg.image_shape[0],) + cfg.channels
        self.stages = [ResidualDown(a, b, rng) for a, b in zip(chans[:-1], chans[1:])]
        self.norms = [BatchNorm(c) for c in cfg.channels]
        flat = int(np.prod(cfg.bottleneck))
        self.mu_head = Linear(flat, cfg.latent_dim, rng)
        self.log_var_head = Linear(flat, cfg.latent_dim, rng)

    def forward(self, x: Tensor):
        if x.ndim != 4 or tuple(x.shape[1:]) != self.cfg.image_shape:
            raise DimensionError(f"encoder expects [N, {', '.join(map(str, self.cfg.image_shape))}], got {x.shape}")
        h = x
        for stage, norm in zip(self.stages, self.norms):
            h = F.relu(norm(stage(h)))
        h = F.reshape(h, (x.shape[0], -1))
        return self.mu_head(h), self.log_var_head(h)


class Decoder(Module):
    def __init__(self, cfg: VaeConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.fc = Linear(cfg.latent_dim, int(np.prod(cfg.bottleneck)), rng)
        rev = cfg.channels[::-1]
        self.norms = [BatchNorm(c) for c in rev]
        outs = rev[1:] + (cfg.image_shape[0],)
        self.stages = [ResidualUp(a, b, rng, mid=None if i < len(rev) - 1 else max(a // 2, 1))
                       for i, (a, b) in enumerate(zip(rev, outs))]

    def forward(self, z: Tensor) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise DimensionError(f"decoder expects [N, {self.cfg.latent_dim}] latents, got {z.shape}")
        h = F.reshape(self.fc(z), (z.shape[0],) + self.cfg.bottleneck)
        for norm, stage in zip(self.norms, self.stages):
            h = stage(F.relu(norm(h)))
        return F.tanh(h)


@dataclass
class LatentSample:
    mu: Tensor
    log_var: Tensor
    z: Tensor
    eps: np.ndarray = field(repr=False, default=None)


def reparameterize(mu: Tensor, log_var: Tensor, eps) -> Tensor:
    """``mu + exp(log_var / 2) * eps``."""
    eps = np.asarray(eps.data if isinstance(eps, Tensor) else eps, dtype=mu.dtype)
    if eps.shape != mu.shape:
        raise DimensionError(f"eps shape {eps.shape} != mu shape {mu.shape}")
    return mu + F.exp(log_var * 0.5) * Tensor(eps)


def kl_to_standard_normal(mu: Tensor, log_var: Tensor) -> Tensor:
    """Batch mean of ``0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)``."""
    if mu.shape != log_var.shape:
        raise DimensionError(f"mu {mu.shape} and log_var {log_var.shape} differ")
    per_dim = mu * mu + F.exp(log_var) - log_var - 1.0
    return F.sum(per_dim) * (0.5 / mu.shape[0])


def kl_per_dimension(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    """Batch-averaged KL contribution of each latent dimension (diagnostic)."""
    return 0.5 * (mu ** 2 + np.exp(log_var) - log_var - 1).mean(axis=0)


class VaeModel(Module):
    def __init__(self, cfg: VaeConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.decoder = Decoder(cfg, rng)

    def encode(self, images: Tensor):
        return self.encoder(images)

    def decode(self, z: Tensor) -> Tensor:
        return self.decoder(z)

    def sample(self, images: Tensor, eps) -> LatentSample:
        mu, log_var = self.encode(images)
        return LatentSample(mu, log_var, reparameterize(mu, log_var, eps), np.asarray(eps))

    def loss(self, images: Tensor, eps) -> dict:
        """Reconstruction and KL terms, both batch means of per-sample sums."""
        s = self.sample(images, eps)
        recon = F.mse(self.decode(s.z), images)
        kl = kl_to_standard_normal(s.mu, s.log_var)
        return {"total": recon + kl, "recon": recon, "kl": kl, "sample": s}


def vae_loss(model: VaeModel, images: Tensor, eps) -> dict:
    return model.loss(images, eps)
