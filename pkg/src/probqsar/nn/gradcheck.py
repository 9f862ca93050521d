from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: int
    worst_index: tuple[int, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor
    )


def numeric_grad(loss: Callable[[], float], param: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss()`` w.r.t. every entry of ``param`` (perturbed in place)."""
    grad = np.zeros_like(param)
    flat = param.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss()
        flat[i] = orig - h
        down = loss()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def grad_check(
    params: list[np.ndarray],
    analytic: list[np.ndarray],
    loss: Callable[[], float],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients against central differences for every parameter.

    ``loss`` must recompute the scalar objective from the current contents of
    ``params``.
    """
    worst = (0.0, -1, ())
    for k, (p, g) in enumerate(zip(params, analytic)):
        err = relative_error(g, numeric_grad(loss, p, h))
        idx = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[idx] > worst[0] or worst[1] < 0:
            worst = (float(err[idx]), k, tuple(int(i) for i in idx))
    return GradCheckReport(worst[0], worst[1], worst[2], tol)
