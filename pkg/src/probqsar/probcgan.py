"""Probabilistic conditional GAN regressor.

The generator maps a condition ``x`` and a noise vector ``z`` to a scalar
activity. In ``prob`` mode ``z`` is concatenated to the input of every
hidden layer; in ``plain`` mode only to the first one. The discriminator
embeds the condition and the activity in two separate pathways, merges
them, and emits an unbounded scalar critic value ``T`` that the f-GAN
objective turns into a divergence estimate. Repeated draws of ``z`` for a
fixed condition give the predictive distribution.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import AdamState, DenseLayer, DimensionMismatch, NonFiniteValue, Prng, adam_step, minibatches
from .nn.checkpoint import dump_layers, load_layers

DIVERGENCES = ("pearson_chi2", "kl", "js")
LOG2 = float(np.log(2.0))


class InsufficientData(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


@dataclass
class GanTrainingConfig:
    epochs: int = 300
    batch_size: int = 32
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    d_steps: int = 1
    noise_dim: int = 32
    divergence: str = "pearson_chi2"
    mode: str = "prob"
    hidden: tuple[int, ...] = (256, 128, 64)
    disc_width: int = 128
    samples: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        self.hidden = tuple(self.hidden)
        if self.divergence not in DIVERGENCES:
            raise ValueError(f"divergence must be one of {DIVERGENCES}")
        if self.mode not in ("prob", "plain"):
            raise ValueError("mode must be 'prob' or 'plain'")
        positive = (self.epochs, self.batch_size, self.d_steps, self.noise_dim, self.samples, self.disc_width)
        if min(positive) < 1 or min(self.hidden) < 1:
            raise ValueError("sizes and counts must be positive")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")


# -- networks -----------------------------------------------------------------


class Generator:
    """Noise-injection generator; hidden layers read ``[h ‖ z]``."""

    def __init__(self, layers: list[DenseLayer], noise_dim: int, mode: str = "prob") -> None:
        self.layers = layers
        self.noise_dim = noise_dim
        self.mode = mode
        self.cond_dim = layers[0].in_dim - noise_dim
        if layers[-1].out_dim != 1 or layers[-1].activation != "identity":
            raise ValueError("generator output must be one identity unit")
        for k in range(1, len(layers)):
            expect = layers[k - 1].out_dim + (noise_dim if self.injects(k) else 0)
            if layers[k].in_dim != expect:
                raise DimensionMismatch(f"generator layer {k} expects width {expect}")

    @classmethod
    def init(cls, cond_dim: int, config: GanTrainingConfig, rng: Prng) -> "Generator":
        nd = config.noise_dim
        layers = []
        width = cond_dim
        for k, h in enumerate(config.hidden):
            extra = nd if (k == 0 or config.mode == "prob") else 0
            layers.append(DenseLayer.init(width + extra, h, "leaky_relu", rng))
            width = h
        layers.append(DenseLayer.init(width, 1, "identity", rng))
        return cls(layers, nd, config.mode)

    def injects(self, k: int) -> bool:
        """Whether layer ``k`` receives the noise vector."""
        return k == 0 or (self.mode == "prob" and k < len(self.layers) - 1)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x: np.ndarray, z: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if x.shape[1] != self.cond_dim or z.shape != (len(x), self.noise_dim):
            raise DimensionMismatch(f"expected x (n, {self.cond_dim}) and z (n, {self.noise_dim})")
        h = x
        for k, layer in enumerate(self.layers):
            if self.injects(k):
                h = np.concatenate([h, z], axis=1)
            h = layer.forward(h, cache=cache)
        return h[:, 0]

    __call__ = forward

    def backward(self, d_out: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = []
        up = np.asarray(d_out, dtype=np.float64).reshape(-1, 1)
        for k in range(len(self.layers) - 1, -1, -1):
            g, up = self.layers[k].backward(up)
            grads = g + grads
            if self.injects(k):
                up = up[:, : up.shape[1] - self.noise_dim]
        return grads

    def zero_noise_weights(self) -> None:
        """Cut every noise input (wiring check: output then ignores ``z``)."""
        for k, layer in enumerate(self.layers):
            if self.injects(k):
                layer.weights[:, layer.in_dim - self.noise_dim :] = 0.0

    def to_bytes(self, divergence: str = "") -> bytes:
        header = {"kind": "generator", "noise_dim": self.noise_dim, "mode": self.mode, "divergence": divergence}
        return dump_layers(self.layers, header)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Generator":
        header, layers = load_layers(data)
        if header.get("kind") != "generator":
            raise ValueError("checkpoint is not a generator")
        return cls(layers, header["noise_dim"], header["mode"])


class Discriminator:
    """Dual-pathway critic: condition and activity branches, merged trunk, raw scalar output."""

    def __init__(self, cond_path: DenseLayer, act_path: DenseLayer, trunk: list[DenseLayer]) -> None:
        if act_path.in_dim != 1:
            raise DimensionMismatch("activity pathway takes a scalar")
        if trunk[0].in_dim != cond_path.out_dim + act_path.out_dim:
            raise DimensionMismatch("trunk input must equal both pathway widths")
        if trunk[-1].out_dim != 1 or trunk[-1].activation != "identity":
            raise ValueError("critic output must be one unit with no activation")
        self.cond_path = cond_path
        self.act_path = act_path
        self.trunk = trunk

    @classmethod
    def init(cls, cond_dim: int, config: GanTrainingConfig, rng: Prng) -> "Discriminator":
        w = config.disc_width
        return cls(
            DenseLayer.init(cond_dim, w, "leaky_relu", rng),
            DenseLayer.init(1, w, "leaky_relu", rng),
            [DenseLayer.init(2 * w, w, "leaky_relu", rng), DenseLayer.init(w, 1, "identity", rng)],
        )

    @property
    def cond_dim(self) -> int:
        return self.cond_path.in_dim

    @property
    def layers(self) -> list[DenseLayer]:
        return [self.cond_path, self.act_path, *self.trunk]

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x: np.ndarray, y: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        if x.shape[1] != self.cond_dim or len(y) != len(x):
            raise DimensionMismatch(f"expected x (n, {self.cond_dim}) and n activities")
        h = np.concatenate(
            [self.cond_path.forward(x, cache=cache), self.act_path.forward(y, cache=cache)], axis=1
        )
        for layer in self.trunk:
            h = layer.forward(h, cache=cache)
        return h[:, 0]

    __call__ = forward

    def backward(self, d_t: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Parameter gradients and the gradient w.r.t. the activity input."""
        up = np.asarray(d_t, dtype=np.float64).reshape(-1, 1)
        trunk_grads: list[np.ndarray] = []
        for layer in reversed(self.trunk):
            g, up = layer.backward(up)
            trunk_grads = g + trunk_grads
        w = self.cond_path.out_dim
        g_cond, _ = self.cond_path.backward(up[:, :w])
        g_act, d_y = self.act_path.backward(up[:, w:])
        return g_cond + g_act + trunk_grads, d_y[:, 0]

    def to_bytes(self, divergence: str = "") -> bytes:
        return dump_layers(self.layers, {"kind": "discriminator", "divergence": divergence})

    @classmethod
    def from_bytes(cls, data: bytes) -> "Discriminator":
        header, layers = load_layers(data)
        if header.get("kind") != "discriminator":
            raise ValueError("checkpoint is not a discriminator")
        return cls(layers[0], layers[1], layers[2:])


# -- f-GAN objective -------------------------------------------------------------


def _softplus(v: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, v)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def output_activation(divergence: str, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """g_f(v) and its derivative."""
    if divergence in ("pearson_chi2", "kl"):
        return v, np.ones_like(v)
    if divergence == "js":
        return LOG2 - _softplus(-v), _sigmoid(-v)
    raise ValueError(divergence)


def conjugate_of_activation(divergence: str, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """f*(g_f(v)) and its derivative w.r.t. ``v``, in numerically stable closed forms."""
    if divergence == "pearson_chi2":
        return v * v / 4.0 + v, v / 2.0 + 1.0
    if divergence == "kl":
        with np.errstate(over="ignore"):  # overflow surfaces as NonFiniteValue in the caller
            e = np.exp(v - 1.0)
        return e, e
    if divergence == "js":
        return _softplus(v) - LOG2, _sigmoid(v)
    raise ValueError(divergence)


@dataclass
class FGanLosses:
    objective: float
    d_loss: float
    g_loss: float
    d_grad_real: np.ndarray
    d_grad_fake: np.ndarray
    g_grad_fake: np.ndarray


def fgan_losses(divergence: str, t_real: np.ndarray, t_fake: np.ndarray) -> FGanLosses:
    """Variational f-divergence objective and gradients w.r.t. the critic outputs.

    ``objective = mean g_f(T_real) - mean f*(g_f(T_fake))``; the discriminator
    minimises ``d_loss = -objective`` and the generator minimises
    ``g_loss = -mean f*(g_f(T_fake))``.
    """
    t_real = np.asarray(t_real, dtype=np.float64).ravel()
    t_fake = np.asarray(t_fake, dtype=np.float64).ravel()
    if t_real.size == 0 or t_fake.size == 0:
        raise EmptyBatch("f-GAN losses need non-empty batches")
    g_real, dg_real = output_activation(divergence, t_real)
    c_fake, dc_fake = conjugate_of_activation(divergence, t_fake)
    objective = float(g_real.mean() - c_fake.mean())
    g_loss = float(-c_fake.mean())
    if not (np.isfinite(objective) and np.isfinite(g_loss)):
        raise NonFiniteValue("f-GAN loss is not finite")
    return FGanLosses(
        objective=objective,
        d_loss=-objective,
        g_loss=g_loss,
        d_grad_real=-dg_real / t_real.size,
        d_grad_fake=dc_fake / t_fake.size,
        g_grad_fake=-dc_fake / t_fake.size,
    )


# -- training ---------------------------------------------------------------------


@dataclass
class GanState:
    generator: Generator
    discriminator: Discriminator
    config: GanTrainingConfig
    opt_g: AdamState
    opt_d: AdamState
    history: list[dict] = field(default_factory=list)

    @classmethod
    def create(cls, cond_dim: int, config: GanTrainingConfig) -> "GanState":
        rng = Prng(config.seed)
        g = Generator.init(cond_dim, config, rng.derive(1))
        d = Discriminator.init(cond_dim, config, rng.derive(2))
        return cls.wrap(g, d, config)

    @classmethod
    def wrap(cls, g: Generator, d: Discriminator, config: GanTrainingConfig) -> "GanState":
        kw = dict(beta1=config.beta1, beta2=config.beta2)
        return cls(
            g, d, config,
            AdamState.for_params(g.params(), lr=config.lr_g, **kw),
            AdamState.for_params(d.params(), lr=config.lr_d, **kw),
        )


def train_step(state: GanState, x: np.ndarray, y: np.ndarray, rng: Prng) -> dict:
    """``d_steps`` critic updates then one generator update on one batch."""
    g, d, cfg = state.generator, state.discriminator, state.config
    n = len(x)
    if n == 0:
        raise EmptyBatch("empty training batch")
    d_params = d.params()
    for _ in range(cfg.d_steps):
        z = rng.normal((n, cfg.noise_dim))
        y_fake = g.forward(x, z, cache=False)
        t = d.forward(np.concatenate([x, x]), np.concatenate([y, y_fake]))
        losses = fgan_losses(cfg.divergence, t[:n], t[n:])
        grads, _ = d.backward(np.concatenate([losses.d_grad_real, losses.d_grad_fake]))
        adam_step(d_params, grads, state.opt_d)
    t_real = t[:n]
    z = rng.normal((n, cfg.noise_dim))
    y_fake = g.forward(x, z)
    t_fake = d.forward(x, y_fake)
    g_losses = fgan_losses(cfg.divergence, t_real, t_fake)
    _, d_y = d.backward(g_losses.g_grad_fake)
    adam_step(g.params(), g.backward(d_y), state.opt_g)
    return {
        "d_loss": losses.d_loss,
        "g_loss": g_losses.g_loss,
        "t_real": float(t_real.mean()),
        "t_fake": float(t_fake.mean()),
    }


def train(state: GanState, x: np.ndarray, y: np.ndarray, min_pairs: int = 50) -> GanState:
    """Fixed-epoch alternating optimisation; one history entry per batch."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) < min_pairs or len(x) != len(y):
        raise InsufficientData(f"need at least {min_pairs} (x, y) pairs")
    cfg = state.config
    rng = Prng(cfg.seed)
    batch_rng, noise_rng = rng.derive(3), rng.derive(4)
    for epoch in range(cfg.epochs):
        for b, idx in enumerate(minibatches(len(x), cfg.batch_size, batch_rng)):
            try:
                diag = train_step(state, x[idx], y[idx], noise_rng)
            except NonFiniteValue as exc:
                raise NonFiniteValue(f"epoch {epoch} batch {b}: {exc}") from None
            state.history.append(diag)
    return state


# -- prediction -------------------------------------------------------------------


@dataclass
class PredictiveDistribution:
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.samples.size < 1:
            raise ValueError("need at least one sample")

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def std(self) -> float:
        return float(self.samples.std())

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.samples, q))


def sample_batch(g: Generator, x: np.ndarray, k: int, rng: Prng, zero_noise: bool = False) -> np.ndarray:
    """(n, k) generated activities, ``k`` noise draws per condition row."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = len(x)
    z = np.zeros((n * k, g.noise_dim)) if zero_noise else rng.normal((n * k, g.noise_dim))
    return g.forward(np.repeat(x, k, axis=0), z, cache=False).reshape(n, k)


def predict(g: Generator, x: np.ndarray, k: int, rng: Prng, zero_noise: bool = False) -> PredictiveDistribution:
    if k < 1:
        raise ValueError("K must be >= 1")
    return PredictiveDistribution(sample_batch(g, np.asarray(x).reshape(1, -1), k, rng, zero_noise)[0])


class ProbCGANRegressor:
    """Fit/predict wrapper: standardises the target, trains, un-standardises samples."""

    name = "prob-cgan"

    def __init__(self, config: GanTrainingConfig | None = None) -> None:
        self.config = config or GanTrainingConfig()
        self.state: GanState | None = None
        self.y_mean = 0.0
        self.y_std = 1.0

    def fit(self, x: np.ndarray, y: np.ndarray) -> "ProbCGANRegressor":
        y = np.asarray(y, dtype=np.float64)
        self.y_mean = float(y.mean())
        self.y_std = float(y.std()) or 1.0
        self.state = GanState.create(np.shape(x)[1], self.config)
        train(self.state, x, (y - self.y_mean) / self.y_std)
        return self

    @property
    def generator(self) -> Generator:
        if self.state is None:
            raise RuntimeError("model is not trained")
        return self.state.generator

    def sample(self, x: np.ndarray, k: int | None = None, seed: int | None = None) -> np.ndarray:
        """Un-standardised (n, k) samples; the stream is derived from the training seed."""
        rng = Prng(self.config.seed).derive(5, 0 if seed is None else seed)
        s = sample_batch(self.generator, x, k or self.config.samples, rng)
        return s * self.y_std + self.y_mean

    def predict_distribution(self, x: np.ndarray, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        s = self.sample(x, k)
        return s.mean(axis=1), s.std(axis=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_distribution(x)[0]

    def to_bytes(self) -> bytes:
        import json
        import struct

        cfg = asdict(self.config)
        meta = json.dumps({"config": cfg, "y_mean": self.y_mean, "y_std": self.y_std}).encode()
        g = self.generator.to_bytes(self.config.divergence)
        d = self.state.discriminator.to_bytes(self.config.divergence)
        return struct.pack("<III", len(meta), len(g), len(d)) + meta + g + d

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProbCGANRegressor":
        import json
        import struct

        a, b, c = struct.unpack_from("<III", data, 0)
        if 12 + a + b + c != len(data):
            raise ValueError("corrupt GAN checkpoint")
        meta = json.loads(data[12 : 12 + a])
        model = cls(GanTrainingConfig(**meta["config"]))
        model.y_mean, model.y_std = meta["y_mean"], meta["y_std"]
        g = Generator.from_bytes(data[12 + a : 12 + a + b])
        d = Discriminator.from_bytes(data[12 + a + b :])
        model.state = GanState.wrap(g, d, model.config)
        return model
