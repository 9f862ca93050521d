"""Dense layers with cached forward passes and analytic backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NoCachedForward, check_finite
from .rng import Prng

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("relu", "leaky_relu", "tanh", "identity")


def activate(name: str, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return a
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "leaky_relu":
        return np.where(a > 0, a, LEAKY_SLOPE * a)
    if name == "tanh":
        return np.tanh(a)
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, a: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation ``a`` (``out`` = activation(a))."""
    if name == "identity":
        return np.ones_like(a)
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "leaky_relu":
        return np.where(a > 0, 1.0, LEAKY_SLOPE)
    if name == "tanh":
        return 1.0 - out * out
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    """``activation(x @ W.T + b)`` with ``W`` stored out x in."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatch(
                f"weights {self.weights.shape} incompatible with bias {self.bias.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: str, rng: Prng) -> "DenseLayer":
        """He-uniform for (leaky) relu, Xavier-uniform otherwise; zero bias."""
        if activation in ("relu", "leaky_relu"):
            gain = 2.0 / (1.0 + LEAKY_SLOPE**2) if activation == "leaky_relu" else 2.0
            limit = np.sqrt(3.0 * gain / in_dim)
        else:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = (rng.uniform((out_dim, in_dim)) * 2.0 - 1.0) * limit
        return cls(w, np.zeros(out_dim), activation)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionMismatch(f"expected (n, {self.in_dim}) input, got {x.shape}")
        a = x @ self.weights.T + self.bias
        out = activate(self.activation, a)
        check_finite("dense output", out)
        if cache:
            self._cache = (x, a, out)
        return out

    def backward(self, upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Return ([dW, db], dx) for the cached batch."""
        if self._cache is None:
            raise NoCachedForward("backward called before forward")
        x, a, out = self._cache
        if upstream.shape != out.shape:
            raise DimensionMismatch(f"upstream {upstream.shape} vs output {out.shape}")
        da = upstream * activation_grad(self.activation, a, out)
        dw = da.T @ x
        db = da.sum(axis=0)
        dx = da @ self.weights
        return [dw, db], dx


class Sequential:
    """A plain stack of dense layers."""

    def __init__(self, layers: list[DenseLayer]) -> None:
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionMismatch(f"layer widths {prev.out_dim} -> {nxt.in_dim}")
        self.layers = list(layers)

    @classmethod
    def build(cls, dims: list[int], hidden: str, output: str, rng: Prng) -> "Sequential":
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            act = output if i == len(dims) - 2 else hidden
            layers.append(DenseLayer.init(a, b, act, rng))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, cache=cache)
        return x

    __call__ = forward

    def backward(self, upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        grads: list[np.ndarray] = []
        for layer in reversed(self.layers):
            g, upstream = layer.backward(upstream)
            grads = g + grads
        return grads, upstream


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
