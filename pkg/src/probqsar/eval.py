"""Metrics, seeded holdout splits, the multi-seed benchmark harness and synthetic tasks."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .autoencoder import train_autoencoder
from .baselines import MlpRegressor, knn_fit, ridge_fit, tree_fit
from .config import RunConfig
from .featurize import Featurizer
from .nn import Prng
from .probcgan import ProbCGANRegressor


class EvalError(ValueError):
    pass


class LengthMismatch(EvalError):
    pass


class EmptyInput(EvalError):
    pass


class ConstantTruth(EvalError):
    pass


class TooFewSamples(EvalError):
    pass


class LeakageError(AssertionError):
    pass


# -- metrics -------------------------------------------------------------------


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.size != t.size:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise EmptyInput("no predictions")
    return p, t


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return math.sqrt(float(np.mean((p - t) ** 2)))


def r2(pred, truth) -> float:
    """1 - SS_res / SS_tot, with SS_tot about the mean of ``truth``."""
    p, t = _pair(pred, truth)
    if p.size < 2:
        raise LengthMismatch("R² needs at least 2 values")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTruth("R² is undefined for constant truth")
    return 1.0 - float(np.sum((p - t) ** 2)) / ss_tot


def spearman(a, b) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(np.asarray(a), np.asarray(b))[0])


# -- splits -----------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 1


def split(n: int, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Fisher-Yates permutation, first round(fraction * n) indices train."""
    if n < 5:
        raise TooFewSamples("need at least 5 samples to split")
    perm = Prng(spec.seed).permutation(n)
    k = int(math.floor(spec.train_fraction * n + 0.5))
    return perm[:k].copy(), perm[k:].copy()


# -- synthetic heteroscedastic task -------------------------------------------------

TASK_PARAM_SEED = 20240203


@dataclass
class SyntheticTask:
    x: np.ndarray
    y: np.ndarray
    true_mean: np.ndarray
    true_std: np.ndarray
    w: np.ndarray
    v: np.ndarray


def synthetic_heteroscedastic_task(
    n: int, seed: int, dim: int = 203, w_scale: float = 0.25, v_scale: float = 6.0
) -> SyntheticTask:
    """y = sin(2 w·x) + N(0, σ(x)²), σ(x) = 0.05 + 0.45 sigmoid(v·x), x ~ U[-1, 1]^dim.

    ``w`` and ``v`` are fixed (drawn from a constant parameter seed and scaled
    to norms ``w_scale`` and ``v_scale``); ``seed`` only controls the samples.
    """
    if n < 500:
        raise TooFewSamples("synthetic task needs n >= 500")
    par = Prng(TASK_PARAM_SEED)
    w = par.normal(dim)
    v = par.normal(dim)
    w *= w_scale / np.linalg.norm(w)
    v *= v_scale / np.linalg.norm(v)
    rng = Prng(seed)
    x = rng.uniform((n, dim)) * 2.0 - 1.0
    mean = np.sin(2.0 * (x @ w))
    std = 0.05 + 0.45 / (1.0 + np.exp(-(x @ v)))
    y = mean + std * rng.normal(n)
    return SyntheticTask(x, y, mean, std, w, v)


def bayes_rmse(true_std: np.ndarray) -> float:
    """Irreducible RMSE of the exact conditional mean."""
    return math.sqrt(float(np.mean(np.asarray(true_std) ** 2)))


def corrupted_views(task: SyntheticTask, seed: int = 0, noise: float = 0.5, fp_cols: int = 120) -> dict[str, np.ndarray]:
    """An 812-d 'raw' view of the latent ``x`` shaped like the molecular descriptor.

    The first 512 columns ('fingerprint') mix only the first ``fp_cols``
    latent coordinates; the last 300 ('embedding') mix all of them. Both
    blocks get isotropic Gaussian noise, so an autoencoder can denoise and the
    fingerprint block alone loses information.
    """
    rng = Prng(TASK_PARAM_SEED).derive(seed, 7)
    d = task.x.shape[1]
    a_fp = rng.normal((fp_cols, 512)) / math.sqrt(fp_cols)
    a_emb = rng.normal((d, 300)) / math.sqrt(d)
    fp = task.x[:, :fp_cols] @ a_fp + noise * rng.normal((len(task.x), 512))
    emb = task.x @ a_emb + noise * rng.normal((len(task.x), 300))
    raw = np.hstack([fp, emb])
    return {"x": task.x, "raw": raw, "fingerprint": raw[:, :512]}


# -- benchmark harness ---------------------------------------------------------------


class Regressor(Protocol):
    def fit(self, x: np.ndarray, y: np.ndarray): ...

    def predict(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class ModelSpec:
    name: str
    view: str
    factory: Callable[[int], Regressor]


class _Fitted:
    """Adapter turning a fit function into the fit/predict protocol."""

    def __init__(self, fit_fn: Callable[[np.ndarray, np.ndarray], object]) -> None:
        self.fit_fn = fit_fn
        self.model = None

    def fit(self, x, y):
        self.model = self.fit_fn(x, y)
        return self

    def predict(self, x):
        return self.model.predict(x)


class MeanPredictor:
    def fit(self, x, y):
        self.mean = float(np.mean(y))
        return self

    def predict(self, x):
        return np.full(len(x), self.mean)


class FitAudit:
    """Records the rows handed to every fitting step and rejects test rows."""

    def __init__(self, test_rows: np.ndarray) -> None:
        self.test = set(int(i) for i in test_rows)
        self.log: list[tuple[str, np.ndarray]] = []

    def check(self, stage: str, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows)
        leaked = self.test.intersection(int(i) for i in rows)
        if leaked:
            raise LeakageError(f"{stage} would be fit on test rows {sorted(leaked)[:5]}")
        self.log.append((stage, rows.copy()))
        return rows


ViewFn = Callable[[np.ndarray, int, set, FitAudit], dict[str, np.ndarray]]


def molecule_views(smiles: Sequence[str], config: RunConfig) -> ViewFn:
    """Feature views for a molecule set, every fitted component trained on train rows only.

    Views: 'fingerprint' (512 bits), 'raw' (812 fused), 'latent' (203-d code).
    """
    smiles = list(smiles)
    fp_cache: dict[str, np.ndarray] = {}

    def fingerprints(featurizer: Featurizer) -> np.ndarray:
        key = "fp"
        if key not in fp_cache:
            fp_cache[key] = featurizer.fingerprints(smiles).astype(np.float64)
        return fp_cache[key]

    def build(train: np.ndarray, seed: int, needed: set, audit: FitAudit) -> dict[str, np.ndarray]:
        rows = audit.check("featurizer", train)
        feat = Featurizer.fit([smiles[i] for i in rows], config.skipgram(seed), config.fingerprint_config())
        fp = fingerprints(feat)
        views = {"fingerprint": fp}
        if needed & {"raw", "latent"}:
            raw = np.hstack([fp, feat.embeddings(smiles)])
            views["raw"] = raw
            if "latent" in needed:
                ae = train_autoencoder(raw[audit.check("autoencoder", train)], config.autoencoder(raw.shape[1]), seed)
                views["latent"] = ae.encode(raw)
        return views

    return build


def array_views(views: dict[str, np.ndarray], config: RunConfig) -> ViewFn:
    """Precomputed views; a 'latent' view is produced by an autoencoder on 'raw' when requested."""

    def build(train: np.ndarray, seed: int, needed: set, audit: FitAudit) -> dict[str, np.ndarray]:
        out = dict(views)
        if "latent" in needed and "latent" not in out:
            raw = views["raw"]
            ae = train_autoencoder(raw[audit.check("autoencoder", train)], config.autoencoder(raw.shape[1]), seed)
            out["latent"] = ae.encode(raw)
        return out

    return build


def default_models(config: RunConfig, views: Iterable[str] = ("latent", "raw")) -> list[ModelSpec]:
    """Prob-cGAN on the latent code plus every baseline on each requested view."""
    specs = [ModelSpec("prob-cgan", "latent", lambda s: ProbCGANRegressor(config.gan(s)))]
    for view in views:
        specs += [
            ModelSpec(f"ridge[{view}]", view, lambda s: _Fitted(lambda x, y: ridge_fit(x, y, config["ridge.lambda"]))),
            ModelSpec(f"knn[{view}]", view, lambda s: _Fitted(lambda x, y: knn_fit(x, y, config["knn.k"]))),
            ModelSpec(
                f"tree[{view}]", view,
                lambda s: _Fitted(lambda x, y: tree_fit(x, y, config["tree.max_depth"], config["tree.min_leaf"])),
            ),
            ModelSpec(f"mlp[{view}]", view, lambda s: MlpRegressor(config.mlp(s))),
        ]
    return specs


def ablation_models(config: RunConfig) -> list[ModelSpec]:
    """The four ablation rows: full, plain cGAN, no autoencoder, fingerprint only."""
    return [
        ModelSpec("prob-cgan", "latent", lambda s: ProbCGANRegressor(config.gan(s))),
        ModelSpec("cgan", "latent", lambda s: ProbCGANRegressor(config.gan(s, mode="plain", divergence="js"))),
        ModelSpec("no-autoencoder", "raw", lambda s: ProbCGANRegressor(config.gan(s))),
        ModelSpec("fingerprint-only", "fingerprint", lambda s: ProbCGANRegressor(config.gan(s))),
    ]


@dataclass
class ReportRow:
    name: str
    r2: list[float]
    rmse: list[float]

    @staticmethod
    def _fmt(values: list[float]) -> str:
        mean = float(np.mean(values))
        if len(values) < 2:
            return f"{mean:.4f}"
        return f"{mean:.4f} (±{float(np.std(values, ddof=1)):.4f})"

    @property
    def r2_mean(self) -> float:
        return float(np.mean(self.r2))

    @property
    def rmse_mean(self) -> float:
        return float(np.mean(self.rmse))

    @property
    def r2_text(self) -> str:
        return self._fmt(self.r2)

    @property
    def rmse_text(self) -> str:
        return self._fmt(self.rmse)


@dataclass
class EvalReport:
    rows: list[ReportRow]
    seeds: list[int]
    config_fingerprint: str
    dataset_fingerprint: str
    curves: list[tuple[int, float, float, str]] = field(default_factory=list)
    widths: dict[str, int] = field(default_factory=dict)

    def row(self, name: str) -> ReportRow:
        return next(r for r in self.rows if r.name == name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "r2", "rmse", "r2_mean", "r2_std", "rmse_mean", "rmse_std", "n_seeds"])
        for r in self.rows:
            sd = (lambda v: f"{np.std(v, ddof=1):.6f}" if len(v) > 1 else "")
            w.writerow([r.name, r.r2_text, r.rmse_text, f"{r.r2_mean:.6f}", sd(r.r2),
                        f"{r.rmse_mean:.6f}", sd(r.rmse), len(r.r2)])
        return buf.getvalue()

    def to_text(self) -> str:
        name_w = max([len("Methods")] + [len(r.name) for r in self.rows])
        r2_w = max([len("R2")] + [len(r.r2_text) for r in self.rows])
        lines = [
            f"# config {self.config_fingerprint}  dataset {self.dataset_fingerprint}  seeds {self.seeds}",
            f"{'Methods':<{name_w}}  {'R2':>{r2_w}}  RMSE",
        ]
        for r in self.rows:
            lines.append(f"{r.name:<{name_w}}  {r.r2_text:>{r2_w}}  {r.rmse_text}")
        return "\n".join(lines) + "\n"

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "truth", "prediction", "model"])
        for rank, truth, pred, name in self.curves:
            w.writerow([rank, repr(float(truth)), repr(float(pred)), name])
        return buf.getvalue()


def fingerprint_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, (list, tuple)) and a and isinstance(a[0], str):
            h.update("\n".join(a).encode())
        else:
            h.update(np.ascontiguousarray(np.asarray(a, dtype=np.float64)).tobytes())
    return h.hexdigest()[:16]


def run_benchmark(
    views: ViewFn,
    y: np.ndarray,
    models: Sequence[ModelSpec],
    seeds: Sequence[int],
    config: RunConfig,
    dataset_fingerprint: str = "",
    audits: list | None = None,
) -> EvalReport:
    """Per seed: split, fit feature stages on train rows, fit and score each model on test rows.

    Prediction curves (rank, truth, prediction) sorted by truth are kept for
    the first seed.
    """
    y = np.asarray(y, dtype=np.float64)
    if not seeds:
        raise EvalError("need at least one seed")
    needed = {m.view for m in models}
    scores = {m.name: ([], []) for m in models}
    curves: list[tuple[int, float, float, str]] = []
    widths: dict[str, int] = {}
    for s_i, seed in enumerate(seeds):
        train, test = split(len(y), SplitSpec(config["split.train_fraction"], seed))
        audit = FitAudit(test)
        feats = views(train, seed, needed, audit)
        for spec in models:
            x = feats[spec.view]
            widths[spec.name] = x.shape[1]
            model = spec.factory(seed)
            model.fit(x[audit.check(spec.name, train)], y[train])
            pred = np.asarray(model.predict(x[test]), dtype=np.float64)
            scores[spec.name][0].append(r2(pred, y[test]))
            scores[spec.name][1].append(rmse(pred, y[test]))
            if s_i == 0:
                order = np.lexsort((np.arange(len(test)), y[test]))
                curves += [(rank, y[test][j], pred[j], spec.name) for rank, j in enumerate(order)]
        if audits is not None:
            audits.append(audit)
    rows = [ReportRow(m.name, *scores[m.name]) for m in models]
    return EvalReport(rows, list(seeds), config.fingerprint(), dataset_fingerprint, curves, widths)


def run_ablation(
    views: ViewFn, y: np.ndarray, seeds: Sequence[int], config: RunConfig, dataset_fingerprint: str = ""
) -> EvalReport:
    return run_benchmark(views, y, ablation_models(config), seeds, config, dataset_fingerprint)
