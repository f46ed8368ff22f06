"""ADAM with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, grads, state: AdamState) -> None:
    """Apply one bias-corrected ADAM update in place.

    A ``None`` gradient leaves that parameter and its moments untouched; the
    step counter still advances once per call.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError(
            f"optimizer tracks {len(state.m)} parameters, got {len(params)} params / {len(grads)} grads")
    for p, g, m in zip(params, grads, state.m):
        if m.shape != p.data.shape or (g is not None and g.shape != p.data.shape):
            raise ValueError(f"parameter shape {p.data.shape} disagrees with state {m.shape}"
                             f" or grad {None if g is None else g.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr_t = state.learning_rate * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    eps_t = state.epsilon * np.sqrt(1 - b2 ** t)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        # algebraically equal to lr * m_hat / (sqrt(v_hat) + eps)
        p.data -= (lr_t * m / (np.sqrt(v) + eps_t)).astype(p.data.dtype, copy=False)


class Adam:
    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.state = AdamState.for_params(self.params, learning_rate=lr, beta1=betas[0],
                                          beta2=betas[1], epsilon=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
