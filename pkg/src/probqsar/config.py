"""Run configuration: a flat, typed key-value document.

Text form, one entry per line, ``#`` starts a comment::

    gan.epochs = 300
    gan.divergence = "pearson_chi2"
    gan.hidden = [256, 128, 64]

Values are JSON literals. Unknown keys and type changes are rejected.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .autoencoder import AutoencoderConfig
from .baselines import MlpConfig
from .featurize import FingerprintConfig, SkipGramConfig
from .probcgan import GanTrainingConfig

DEFAULTS: dict[str, Any] = {
    "fingerprint.length": 512,
    "fingerprint.radius": 3,
    "skipgram.dim": 300,
    "skipgram.window": 5,
    "skipgram.negatives": 5,
    "skipgram.epochs": 15,
    "skipgram.lr": 0.025,
    "skipgram.batch_size": 256,
    "autoencoder.hidden": 512,
    "autoencoder.code": 203,
    "autoencoder.epochs": 200,
    "autoencoder.batch_size": 32,
    "autoencoder.lr": 1e-3,
    "gan.epochs": 300,
    "gan.batch_size": 32,
    "gan.lr_g": 2e-4,
    "gan.lr_d": 2e-4,
    "gan.beta1": 0.5,
    "gan.beta2": 0.999,
    "gan.d_steps": 1,
    "gan.noise_dim": 32,
    "gan.divergence": "pearson_chi2",
    "gan.hidden": [256, 128, 64],
    "gan.disc_width": 128,
    "gan.samples": 100,
    "ridge.lambda": 1.0,
    "knn.k": 5,
    "tree.max_depth": 12,
    "tree.min_leaf": 3,
    "mlp.hidden": [128, 64],
    "mlp.epochs": 200,
    "mlp.batch_size": 32,
    "mlp.lr": 1e-3,
    "split.train_fraction": 0.8,
    "data.smiles_column": "canonical_smiles",
    "data.value_column": "pchembl_value",
    "data.id_column": "molecule_chembl_id",
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}")
    return value


class RunConfig:
    def __init__(self, values: dict[str, Any] | None = None) -> None:
        self.values = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self[key] = value

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def __setitem__(self, key: str, value: Any) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RunConfig) and self.values == other.values

    def set_from_string(self, assignment: str) -> None:
        """Apply ``key=value`` where value is a JSON literal (bare words read as strings)."""
        key, sep, raw = assignment.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {assignment!r}")
        raw = raw.strip()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        self[key.strip()] = value

    def to_text(self) -> str:
        lines = ["# probqsar run configuration"]
        for key in sorted(self.values):
            lines.append(f"{key} = {json.dumps(self.values[key])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            body = _strip_comment(line).strip()
            if not body:
                continue
            key, sep, raw = body.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected key = value")
            try:
                value = json.loads(raw.strip())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"line {lineno}: bad value: {exc}") from None
            try:
                cfg[key.strip()] = value
            except ConfigError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
        return cfg

    def fingerprint(self) -> str:
        blob = json.dumps(self.values, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- component configs --------------------------------------------------

    def fingerprint_config(self) -> FingerprintConfig:
        return FingerprintConfig(self["fingerprint.length"], self["fingerprint.radius"])

    def skipgram(self, seed: int) -> SkipGramConfig:
        return SkipGramConfig(
            dim=self["skipgram.dim"], window=self["skipgram.window"], negatives=self["skipgram.negatives"],
            epochs=self["skipgram.epochs"], lr=self["skipgram.lr"], batch_size=self["skipgram.batch_size"],
            seed=seed,
        )

    def autoencoder(self, input_dim: int) -> AutoencoderConfig:
        return AutoencoderConfig(
            input_dim=input_dim, hidden_dim=self["autoencoder.hidden"], code_dim=self["autoencoder.code"],
            epochs=self["autoencoder.epochs"], batch_size=self["autoencoder.batch_size"], lr=self["autoencoder.lr"],
        )

    def gan(self, seed: int, **overrides: Any) -> GanTrainingConfig:
        kw = dict(
            epochs=self["gan.epochs"], batch_size=self["gan.batch_size"], lr_g=self["gan.lr_g"],
            lr_d=self["gan.lr_d"], beta1=self["gan.beta1"], beta2=self["gan.beta2"],
            d_steps=self["gan.d_steps"], noise_dim=self["gan.noise_dim"], divergence=self["gan.divergence"],
            hidden=tuple(self["gan.hidden"]), disc_width=self["gan.disc_width"], samples=self["gan.samples"],
            seed=seed,
        )
        kw.update(overrides)
        return GanTrainingConfig(**kw)

    def mlp(self, seed: int) -> MlpConfig:
        return MlpConfig(
            hidden=tuple(self["mlp.hidden"]), epochs=self["mlp.epochs"], batch_size=self["mlp.batch_size"],
            lr=self["mlp.lr"], seed=seed,
        )


def _strip_comment(line: str) -> str:
    """Drop a trailing ``#`` comment that is not inside a double-quoted string."""
    quoted = False
    escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\" and quoted:
            escaped = True
        elif ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line
