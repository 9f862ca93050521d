from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, check_finite


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kwargs
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatch("params, grads and Adam buffers differ in count")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionMismatch(f"param {p.shape} vs grad {g.shape}")
        check_finite("gradient", g)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    step_size = state.lr / (1.0 - b1**state.step)
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        scratch = np.multiply(g, 1.0 - b1)
        m *= b1
        m += scratch
        np.multiply(g, g, out=scratch)
        scratch *= 1.0 - b2
        v *= b2
        v += scratch
        np.divide(v, c2, out=scratch)
        np.sqrt(scratch, out=scratch)
        scratch += state.eps
        np.divide(m, scratch, out=scratch)
        scratch *= step_size
        p -= scratch

def minibatches(n: int, batch_size: int, rng) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the last partial batch is kept."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]
