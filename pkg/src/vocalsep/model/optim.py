"""Adam with bias correction over the network's named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import GradientError, MaskNet


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_net(cls, net: MaskNet, lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, p in net.named_parameters().items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(net: MaskNet, grads: dict[str, np.ndarray], state: AdamState):
    """One in-place update; returns (net, state) for chaining.

    A non-finite gradient rejects the whole step.
    """
    params = net.named_parameters()
    for name, g in grads.items():
        if name not in params:
            raise GradientError(f"gradient for unknown parameter {name}")
        if g.shape != params[name].shape:
            raise GradientError(
                f"gradient shape {g.shape} != parameter shape "
                f"{params[name].shape} for {name}"
            )
        if not np.isfinite(g).all():
            raise GradientError(f"non-finite gradient for {name}; step rejected")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        m, v, p = state.m[name], state.v[name], params[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)
    return net, state
