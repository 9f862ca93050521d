"""Autoencoder that compresses 812-d descriptors to a 203-d code."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, DimensionMismatch, Prng, Sequential, adam_step, minibatches, mse_loss
from .nn.checkpoint import dump_layers, load_layers

INPUT_DIM = 812
HIDDEN_DIM = 512
CODE_DIM = 203


class InsufficientData(ValueError):
    pass


@dataclass
class AutoencoderConfig:
    input_dim: int = INPUT_DIM
    hidden_dim: int = HIDDEN_DIM
    code_dim: int = CODE_DIM
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3


@dataclass
class AutoencoderModel:
    encoder: Sequential
    decoder: Sequential
    config: AutoencoderConfig
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, config: AutoencoderConfig, rng: Prng) -> "AutoencoderModel":
        c = config
        enc = Sequential.build([c.input_dim, c.hidden_dim, c.code_dim], "leaky_relu", "identity", rng)
        dec = Sequential.build([c.code_dim, c.hidden_dim, c.input_dim], "leaky_relu", "identity", rng)
        return cls(enc, dec, config)

    def params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.decoder.params()

    def _check(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.config.input_dim:
            raise DimensionMismatch(f"expected {self.config.input_dim}-d input, got {x.shape[1]}")
        return x

    def encode(self, features: np.ndarray) -> np.ndarray:
        """Latent codes for one vector or a batch (rows)."""
        single = np.ndim(features) == 1
        code = self.encoder.forward(self._check(features), cache=False)
        return code[0] if single else code

    def decode(self, codes: np.ndarray) -> np.ndarray:
        single = np.ndim(codes) == 1
        out = self.decoder.forward(np.atleast_2d(codes), cache=False)
        return out[0] if single else out

    def reconstruct(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reconstructions and per-sample MSE."""
        x = self._check(features)
        recon = self.decoder.forward(self.encoder.forward(x, cache=False), cache=False)
        mse = np.mean((recon - x) ** 2, axis=1)
        if np.ndim(features) == 1:
            return recon[0], mse[0]
        return recon, mse

    def to_bytes(self) -> bytes:
        c = self.config
        header = {"kind": "autoencoder", "code_dim": c.code_dim, "n_encoder": len(self.encoder.layers),
                  "config": vars(c)}
        return dump_layers(self.encoder.layers + self.decoder.layers, header)

    @classmethod
    def from_bytes(cls, data: bytes) -> "AutoencoderModel":
        header, layers = load_layers(data)
        if header.get("kind") != "autoencoder":
            raise ValueError("checkpoint is not an autoencoder")
        k = header["n_encoder"]
        return cls(Sequential(layers[:k]), Sequential(layers[k:]), AutoencoderConfig(**header["config"]))


def train_autoencoder(
    features: np.ndarray, config: AutoencoderConfig = AutoencoderConfig(), seed: int = 0
) -> AutoencoderModel:
    """Fit by minibatch Adam on reconstruction MSE for a fixed epoch budget.

    ``loss_history[0]`` is the full-data loss of the untrained model and
    ``loss_history[e]`` the full-data loss after epoch ``e``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 10:
        raise InsufficientData("autoencoder needs at least 10 training vectors")
    rng = Prng(seed)
    model = AutoencoderModel.init(config, rng.derive(1))
    model._check(x)
    batch_rng = rng.derive(2)
    params = model.params()
    opt = AdamState.for_params(params, lr=config.lr)

    def full_loss() -> float:
        return float(np.mean(model.reconstruct(x)[1]))

    model.loss_history.append(full_loss())
    for _ in range(config.epochs):
        for idx in minibatches(len(x), config.batch_size, batch_rng):
            xb = x[idx]
            recon = model.decoder.forward(model.encoder.forward(xb))
            _, grad = mse_loss(recon, xb)
            g_dec, g_code = model.decoder.backward(grad)
            g_enc, _ = model.encoder.backward(g_code)
            adam_step(params, g_enc + g_dec, opt)
        model.loss_history.append(full_loss())
    return model
