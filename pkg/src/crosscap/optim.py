"""Optimizers: Adam (default) and plain SGD, plus global-norm clipping."""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def adam_state(params):
    """Fresh first/second-moment accumulators for a list of tensors."""
    return {
        "t": 0,
        "m": [np.zeros_like(p.data) for p in params],
        "v": [np.zeros_like(p.data) for p in params],
    }


def adam_step(params, state, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update; deterministic given inputs."""
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"adam_step: parameter '{p.name}' has no grad")
        g = p.grad
        state["m"][i] = beta1 * state["m"][i] + (1.0 - beta1) * g
        state["v"][i] = beta2 * state["v"][i] + (1.0 - beta2) * (g * g)
        m_hat = state["m"][i] / bc1
        v_hat = state["v"][i] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def sgd_step(params, lr):
    for p in params:
        if p.grad is None:
            raise ContractError(f"sgd_step: parameter '{p.name}' has no grad")
        p.data = p.data - lr * p.grad


def clip_grad_norm(params, max_norm):
    """Scale all grads so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


class Adam:
    """Stateful wrapper around adam_step for a parameter registry."""

    def __init__(self, params, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = adam_state(self.params)

    def step(self):
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Sgd:
    def __init__(self, params, lr=2e-4):
        self.params = list(params)
        self.lr = lr

    def step(self):
        sgd_step(self.params, self.lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
