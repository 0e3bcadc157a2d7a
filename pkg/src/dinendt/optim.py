"""Adam with an ascent switch."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              maximize: bool = False) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and the advanced state."""
    if len(params) != len(grads):
        raise ShapeError("adam_step", (len(params),), (len(grads),))
    if not state.m:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    if len(state.m) != len(params):
        raise ShapeError("adam_step", (len(params),), (len(state.m),))
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    sign = 1.0 if maximize else -1.0
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError("adam_step", p.shape, g.shape)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p + sign * lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(t, new_m, new_v)


class Adam:
    """Stateful wrapper updating :class:`Tensor` parameters in place."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, maximize: bool = False):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.maximize = maximize
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_step([p.data for p in self.params], grads, self.state,
                                    self.lr, self.betas[0], self.betas[1], self.eps, self.maximize)
        for p, d in zip(self.params, new):
            p.data = d
