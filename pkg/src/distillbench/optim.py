"""SGDW and AdamW with weight decay decoupled from the gradient update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError

OPTIMIZER_KINDS = ("sgdw", "adamw")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgdw"
    weight_decay: float = 0.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise DomainError(f"optimizer must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if self.weight_decay < 0:
            raise DomainError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise DomainError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise DomainError(f"betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")

    def with_weight_decay(self, weight_decay: float) -> "OptimizerConfig":
        return OptimizerConfig(self.kind, weight_decay, self.momentum, self.beta1, self.beta2, self.epsilon)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "weight_decay": self.weight_decay}
        if self.kind == "sgdw":
            d["momentum"] = self.momentum
        else:
            d.update(beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(kind=str(d.get("kind", "sgdw")).lower(),
                   weight_decay=float(d.get("weight_decay", 0.0)),
                   momentum=float(d.get("momentum", 0.9)),
                   beta1=float(d.get("beta1", 0.9)),
                   beta2=float(d.get("beta2", 0.999)),
                   epsilon=float(d.get("epsilon", 1e-8)))


def _check(params, grads, *buffers):
    for group in (grads, *buffers):
        if len(group) != len(params) or any(p.shape != g.shape for p, g in zip(params, group)):
            raise ContractError("optimizer buffers do not match parameter shapes")


def sgdw_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float, momentum: float,
              weight_decay: float, state: dict) -> None:
    """v <- momentum*v + g;  w <- w - lr*v - lr*weight_decay*w  (in place)."""
    velocity = state.setdefault("velocity", [np.zeros_like(p) for p in params])
    _check(params, grads, velocity)
    for w, g, v in zip(params, grads, velocity):
        v *= momentum
        v += g
        w -= lr * v + lr * weight_decay * w


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float, betas: tuple[float, float],
               epsilon: float, weight_decay: float, state: dict, t: int) -> None:
    """One bias-corrected Adam update with decoupled decay; ``t`` counts from 1."""
    if t < 1:
        raise ContractError(f"adamw step index must be >= 1, got {t}")
    beta1, beta2 = betas
    m_buf = state.setdefault("m", [np.zeros_like(p) for p in params])
    v_buf = state.setdefault("v", [np.zeros_like(p) for p in params])
    _check(params, grads, m_buf, v_buf)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for w, g, m, v in zip(params, grads, m_buf, v_buf):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        w -= lr * ((m / c1) / (np.sqrt(v / c2) + epsilon) + weight_decay * w)


class Optimizer:
    """Stateful wrapper that feeds tensor data and grads to the step functions."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.state: dict = {}
        self.t = 0

    def step(self, tensors, lr: float) -> None:
        params = [t.data for t in tensors]
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
        self.t += 1
        c = self.config
        if c.kind == "sgdw":
            sgdw_step(params, grads, lr, c.momentum, c.weight_decay, self.state)
        else:
            adamw_step(params, grads, lr, (c.beta1, c.beta2), c.epsilon, c.weight_decay, self.state, self.t)
