"""Small dense-network engine on numpy with hand-written gradients."""

from .checkpoint import CheckpointError, dump_layers, load_layers
from .errors import DimensionMismatch, NoCachedForward, NonFiniteValue
from .gradcheck import GradCheckReport, grad_check, numeric_grad
from .layers import LEAKY_SLOPE, DenseLayer, Sequential, mse_loss
from .optim import AdamState, adam_step, minibatches
from .rng import Prng

__all__ = [
    "AdamState",
    "CheckpointError",
    "DenseLayer",
    "DimensionMismatch",
    "GradCheckReport",
    "LEAKY_SLOPE",
    "NoCachedForward",
    "NonFiniteValue",
    "Prng",
    "Sequential",
    "adam_step",
    "dump_layers",
    "grad_check",
    "load_layers",
    "minibatches",
    "mse_loss",
    "numeric_grad",
]
