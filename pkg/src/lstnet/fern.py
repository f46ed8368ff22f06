"""Soft decision ferns, fern blocks and the residual transformer network.

A depth-2 soft fern routes an input to four leaves with probabilities built
from two simultaneous soft decisions. Writing each probability as
``p = (1 + d) / 2`` with ``d = tanh(u)`` turns the leaf-enumerated output
into ``b + d0*x + d1*y + d0*d1*z``, which is linear in the three decision
features ``(d0, d1, d0*d1)``. A whole bank of ferns is therefore one linear
map applied to the concatenated decisions; that map is :class:`FernEnsemble`.

Coefficient pairing follows the expansion of the enumerated form: ``x``
multiplies the first decision and equals ``(q0 + q1 - q2 - q3) / 4``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import BatchNorm, Linear, Module, Parameter, Tensor
from .autograd import functional as F
from .autograd.tensor import ContractError, DEFAULT_DTYPE

DEPTH = 2
LEAVES = 2 ** DEPTH


class ConfigurationError(ValueError):
    pass


# -------------------------------------------------------------- scalar ferns
def soft_decision(x_n, t_n):
    """``sigmoid(x_n - t_n)``: probability of routing to the first branch."""
    v = np.asarray(x_n, dtype=np.float64) - np.asarray(t_n, dtype=np.float64)
    return F._sigmoid(np.atleast_1d(v)).reshape(v.shape)[()]


def route_probabilities(p0, p1) -> np.ndarray:
    """Probabilities of reaching leaves q0..q3 (last axis)."""
    p0, p1 = np.asarray(p0, np.float64), np.asarray(p1, np.float64)
    return np.stack([p0 * p1, p0 * (1 - p1), (1 - p0) * p1, (1 - p0) * (1 - p1)], axis=-1)


def fern_enumerate(q, p0, p1):
    """Leaf-enumerated output of a depth-2 soft fern."""
    p0a, p1a = np.asarray(p0, np.float64), np.asarray(p1, np.float64)
    if np.any((p0a < 0) | (p0a > 1) | (p1a < 0) | (p1a > 1)):
        raise ContractError(f"routing probabilities must lie in [0, 1], got p0={p0}, p1={p1}")
    q = np.asarray(q, np.float64)
    if q.shape[-1] != LEAVES:
        raise ContractError(f"a depth-2 fern has {LEAVES} leaves, got {q.shape[-1]}")
    return (route_probabilities(p0a, p1a) * q).sum(axis=-1)[()]


def fern_coefficients(q) -> np.ndarray:
    """Leaves ``[q0..q3]`` -> ``[b, x, y, z]`` (last axis).

    ``x`` pairs with the first decision and ``y`` with the second.
    """
    q = np.asarray(q, np.float64)
    q0, q1, q2, q3 = (q[..., i] for i in range(LEAVES))
    scale = 1.0 / LEAVES
    return np.stack([
        scale * (q0 + q1 + q2 + q3),
        scale * (q0 + q1 - q2 - q3),
        scale * (q0 - q1 + q2 - q3),
        scale * (q0 - q1 - q2 + q3),
    ], axis=-1)


def fern_leaves(coef) -> np.ndarray:
    """Inverse of :func:`fern_coefficients`."""
    c = np.asarray(coef, np.float64)
    b, x, y, z = (c[..., i] for i in range(4))
    return np.stack([b + x + y + z, b + x - y - z, b - x + y - z, b - x - y + z], axis=-1)


def fern_reparam(b, x, y, z, d0, d1):
    """``b + d0*x + d1*y + d0*d1*z`` with decisions ``d`` in (-1, 1)."""
    return b + d0 * x + d1 * y + d0 * d1 * z


@dataclass
class SoftFern:
    """A single depth-2 fern with explicit leaves and thresholds."""

    leaves: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        self.leaves = np.asarray(self.leaves, np.float64)
        self.thresholds = np.asarray(self.thresholds, np.float64)
        if self.leaves.shape != (LEAVES,) or self.thresholds.shape != (DEPTH,):
            raise ConfigurationError("depth-2 fern needs 4 leaves and 2 thresholds")

    def routes(self, x0, x1) -> np.ndarray:
        return route_probabilities(soft_decision(x0, self.thresholds[0]),
                                   soft_decision(x1, self.thresholds[1]))

    def __call__(self, x0, x1):
        return fern_enumerate(self.leaves, soft_decision(x0, self.thresholds[0]),
                              soft_decision(x1, self.thresholds[1]))


# ----------------------------------------------------------------- ensembles
class FernEnsemble(Module):
    """Bias, first-decision, second-decision and interaction maps of a fern bank.

    Fern ``k`` reads decisions ``(first[:, k], second[:, k])``; its
    contribution to output ``o`` has coefficients
    ``first_map[k, o]``, ``second_map[k, o]``, ``interaction_map[k, o]``.
    """

    def __init__(self, n_ferns: int, out_features: int, rng: np.random.Generator):
        fan_in = 3 * n_ferns
        bound = np.sqrt(1.0 / fan_in)

        def init():
            return rng.uniform(-bound, bound, size=(n_ferns, out_features)).astype(DEFAULT_DTYPE)

        self.n_ferns, self.out_features = n_ferns, out_features
        self.first_map = Parameter(init())
        self.second_map = Parameter(init())
        self.interaction_map = Parameter(init())
        self.bias_map = Parameter(np.zeros(out_features, DEFAULT_DTYPE))

    def forward(self, first: Tensor, second: Tensor) -> Tensor:
        decisions = F.concat([first, second, first * second], axis=1)
        weight = F.concat([self.first_map, self.second_map, self.interaction_map], axis=0)
        return F.linear(decisions, weight, self.bias_map)

    def zero_(self) -> None:
        for p in self.parameters():
            p.data[...] = 0

    def leaves(self) -> np.ndarray:
        """Per-fern leaf values [n_ferns, out, 4]; the bias is carried by fern 0."""
        b = np.zeros((self.n_ferns, self.out_features))
        b[0] = self.bias_map.data
        coef = np.stack([b, self.first_map.data, self.second_map.data, self.interaction_map.data], axis=-1)
        return fern_leaves(coef)

    def enumerate(self, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        """Evaluate by explicit leaf enumeration of every fern (oracle path)."""
        q = self.leaves()                                    # [K, O, 4]
        p = route_probabilities((1 + np.asarray(first, np.float64)) / 2,
                                (1 + np.asarray(second, np.float64)) / 2)   # [N, K, 4]
        return np.einsum("nkl,kol->no", p, q)


class FernBlock(Module):
    """linear -> batch-norm -> tanh -> split/multiply -> fern interpretation."""

    def __init__(self, width: int, decision_width: int, rng: np.random.Generator, out_width: int | None = None):
        if decision_width % 2:
            raise ConfigurationError(f"decision width must be even, got {decision_width}")
        self.width, self.decision_width = width, decision_width
        self.pre = Linear(width, decision_width, rng)
        self.norm = BatchNorm(decision_width)
        self.ferns = FernEnsemble(decision_width // 2, out_width or width, rng)

    def decisions(self, x: Tensor) -> Tensor:
        return F.tanh(self.norm(self.pre(x)))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.width:
            raise ConfigurationError(f"fern block expects [N, {self.width}] input, got {x.shape}")
        first, second = F.split(self.decisions(x), 2, axis=1)
        return self.ferns(first, second)


class TransformerNetwork(Module):
    """Residual feed-forward stack with fern blocks on the residual branch."""

    def __init__(self, in_width: int, out_width: int, hidden: int, decision_width: int,
                 n_blocks: int, rng: np.random.Generator):
        self.in_width, self.out_width, self.hidden = in_width, out_width, hidden
        self.input_map = Linear(in_width, hidden, rng)
        self.blocks = [FernBlock(hidden, decision_width, rng) for _ in range(n_blocks)]
        self.output_map = Linear(hidden, out_width, rng)
        # the latent step starts at zero, so the controller starts as the identity
        self.output_map.zero_()

    def zero_interpretation(self) -> None:
        """Zero every interpretation map, making the network output identically 0."""
        for block in self.blocks:
            block.ferns.zero_()
        self.output_map.zero_()

    def features(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise ConfigurationError(f"transformer expects [N, {self.in_width}] input, got {x.shape}")
        h = self.input_map(x)
        for block in self.blocks:
            h = h + block(h)
        return h

    def forward(self, x: Tensor) -> Tensor:
        return self.output_map(self.features(x))
