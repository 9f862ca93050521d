"""Command-line entry point: ``probqsar <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .chem_parse import SmilesError
from .config import ConfigError, RunConfig
from .dataio import (
    DataError,
    Pipeline,
    atomic_write,
    load_chembl_csv,
    load_model_bundle,
    save_model_bundle,
)
from .eval import (
    EvalError,
    array_views,
    bayes_rmse,
    corrupted_views,
    default_models,
    fingerprint_arrays,
    molecule_views,
    r2,
    rmse,
    run_ablation,
    run_benchmark,
    spearman,
    split,
    SplitSpec,
    synthetic_heteroscedastic_task,
)
from .featurize import Featurizer
from .fixture import fixture_path
from .probcgan import ProbCGANRegressor

log = logging.getLogger("probqsar")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SEED_ENV = "PROBQSAR_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"random seed (falls back to ${SEED_ENV}, then 1)")
    p.add_argument("--config", type=Path, help="run configuration file (key = value lines)")
    p.add_argument("--out", type=Path, help="output file or directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration entry (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def _ae_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ae-epochs", type=int, help="autoencoder epochs")
    p.add_argument("--ae-batch-size", type=int, help="autoencoder mini-batch size")
    p.add_argument("--ae-lr", type=float, help="autoencoder learning rate")


def _data_flag(p: argparse.ArgumentParser, required: bool = False) -> None:
    help_text = "activity table (CSV or TSV)" + ("" if required else "; defaults to the bundled synthetic fixture")
    p.add_argument("--data", type=Path, required=required, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probqsar", description="Probabilistic activity prediction from SMILES.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("featurize", help="activity table -> 812-d feature file (.npz)")
    _common(p)
    _data_flag(p)

    p = sub.add_parser("train", help="fit the full pipeline and write a model bundle")
    _common(p)
    _ae_flags(p)
    _data_flag(p)

    p = sub.add_parser("predict", help="predictive mean and std per SMILES from a bundle")
    _common(p)
    p.add_argument("--bundle", type=Path, required=True, help="model bundle written by 'train'")
    p.add_argument("smiles", nargs="*", help="SMILES strings (or use --smiles-file)")
    p.add_argument("--smiles-file", type=Path, help="file with one SMILES per line")

    p = sub.add_parser("benchmark", help="multi-seed holdout comparison of every model")
    _common(p)
    _ae_flags(p)
    _data_flag(p)
    p.add_argument("--n-seeds", type=int, default=5, help="seeds used are seed, seed+1, ... (default 5)")

    p = sub.add_parser("ablate", help="four-row ablation (synthetic task unless --data is given)")
    _common(p)
    _ae_flags(p)
    _data_flag(p)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--n", type=int, default=1000, help="synthetic task size")

    p = sub.add_parser("synth-check", help="calibration check on the synthetic heteroscedastic task")
    _common(p)
    p.add_argument("--n", type=int, default=2000, help="task size (train fraction from config)")
    return parser


# -- helpers ------------------------------------------------------------------------


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def _load_config(args) -> RunConfig:
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"--config: no such file {args.config}")
        cfg = RunConfig.from_text(args.config.read_text(encoding="utf-8"))
    else:
        cfg = RunConfig()
    for item in args.overrides:
        cfg.set_from_string(item)
    for flag, key in (("ae_epochs", "autoencoder.epochs"), ("ae_batch_size", "autoencoder.batch_size"),
                      ("ae_lr", "autoencoder.lr")):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _dataset(args, cfg: RunConfig):
    path = args.data if args.data is not None else fixture_path()
    return load_chembl_csv(
        path, cfg["data.smiles_column"], cfg["data.value_column"], cfg["data.id_column"]
    )


def _emit(args, name: str, text: str) -> None:
    """Write ``text`` to ``--out`` (a directory receives ``name``) or stdout."""
    if args.out is None:
        sys.stdout.write(text)
        return
    target = args.out / name if args.out.suffix == "" else args.out
    atomic_write(target, text)
    log.info("wrote %s", target)


def _report_files(args, stem: str, report) -> None:
    if args.out is None:
        sys.stdout.write(report.to_text())
        return
    for name, text in ((f"{stem}.txt", report.to_text()), (f"{stem}.csv", report.to_csv()),
                       (f"{stem}_curves.csv", report.curves_csv())):
        atomic_write(args.out / name, text)
        log.info("wrote %s", args.out / name)
    sys.stdout.write(report.to_text())


# -- commands -------------------------------------------------------------------------


def cmd_featurize(args, cfg: RunConfig, seed: int) -> int:
    data = _dataset(args, cfg)
    feat = Featurizer.fit(data.smiles, cfg.skipgram(seed), cfg.fingerprint_config())
    x = feat.transform(data.smiles)
    if args.out is None:
        raise UsageError("featurize: --out is required")
    buf = io.BytesIO()
    np.savez(buf, features=x, pchembl=data.values, ids=np.array(data.ids), smiles=np.array(data.smiles))
    atomic_write(args.out, buf.getvalue())
    log.info("wrote %d x %d features to %s", *x.shape, args.out)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig, seed: int) -> int:
    if args.out is None:
        raise UsageError("train: --out is required (bundle path)")
    data = _dataset(args, cfg)
    log.info("training on %d records from %s", len(data), data.source)
    pipe = Pipeline.fit(data.smiles, data.values, cfg, seed)
    save_model_bundle(args.out, pipe)
    log.info("wrote bundle %s", args.out)
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig, seed: int) -> int:
    smiles = list(args.smiles)
    if args.smiles_file is not None:
        if not args.smiles_file.is_file():
            raise DataError(f"--smiles-file: no such file {args.smiles_file}")
        smiles += [s.strip() for s in args.smiles_file.read_text(encoding="utf-8").splitlines() if s.strip()]
    if not smiles:
        raise UsageError("predict: give SMILES arguments or --smiles-file")
    pipe = load_model_bundle(args.bundle)
    mean, std = pipe.predict_distribution(smiles)
    lines = ["smiles,mean,std"] + [f"{s},{m!r},{d!r}" for s, m, d in zip(smiles, mean.tolist(), std.tolist())]
    _emit(args, "predictions.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _seeds(args, seed: int) -> list[int]:
    if args.n_seeds < 1:
        raise UsageError("--n-seeds must be >= 1")
    return [seed + i for i in range(args.n_seeds)]


def cmd_benchmark(args, cfg: RunConfig, seed: int) -> int:
    data = _dataset(args, cfg)
    views = molecule_views(data.smiles, cfg)
    models = default_models(cfg)
    fp = fingerprint_arrays(data.smiles, data.values)
    report = run_benchmark(views, data.values, models, _seeds(args, seed), cfg, fp)
    _report_files(args, "benchmark", report)
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig, seed: int) -> int:
    seeds = _seeds(args, seed)
    if args.data is not None:
        data = _dataset(args, cfg)
        views, y = molecule_views(data.smiles, cfg), data.values
        fp = fingerprint_arrays(data.smiles, y)
    else:
        task = synthetic_heteroscedastic_task(args.n, seed)
        v = corrupted_views(task)
        views, y = array_views({"raw": v["raw"], "fingerprint": v["fingerprint"]}, cfg), task.y
        fp = fingerprint_arrays(v["raw"], y)
    _report_files(args, "ablation", run_ablation(views, y, seeds, cfg, fp))
    return EXIT_OK


def fit_synthetic(n: int, seed: int, cfg: RunConfig):
    """Synthetic task, its split and a regressor trained on the train rows."""
    task = synthetic_heteroscedastic_task(n, seed)
    train, test = split(n, SplitSpec(cfg["split.train_fraction"], seed))
    model = ProbCGANRegressor(cfg.gan(seed)).fit(task.x[train], task.y[train])
    return task, train, test, model


def synth_check(n: int, seed: int, cfg: RunConfig, fitted=None) -> dict:
    """Train on the synthetic task and score accuracy against the Bayes floor and noise ranking."""
    task, _, test, model = fitted or fit_synthetic(n, seed, cfg)
    mean, std = model.predict_distribution(task.x[test])
    out = {
        "n": n,
        "seed": seed,
        "rmse": rmse(mean, task.y[test]),
        "bayes_rmse": bayes_rmse(task.true_std[test]),
        "r2": r2(mean, task.y[test]),
        "spearman_std": spearman(std, task.true_std[test]),
        "mean_pred_std": float(np.mean(std)),
    }
    out["rmse_ratio"] = out["rmse"] / out["bayes_rmse"]
    out["passed"] = out["rmse_ratio"] <= 1.5 and out["spearman_std"] > 0.5
    return out


def cmd_synth_check(args, cfg: RunConfig, seed: int) -> int:
    res = synth_check(args.n, seed, cfg)
    lines = [f"# config {cfg.fingerprint()}"]
    for key in ("n", "seed", "rmse", "bayes_rmse", "rmse_ratio", "r2", "spearman_std", "mean_pred_std"):
        value = res[key]
        lines.append(f"{key} = {value:.6f}" if isinstance(value, float) else f"{key} = {value}")
    lines.append(f"result = {'PASS' if res['passed'] else 'FAIL'} (ratio <= 1.5 and spearman > 0.5)")
    _emit(args, "synth_check.txt", "\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "ablate": cmd_ablate,
    "synth-check": cmd_synth_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True,
        )
        seed = _resolve_seed(args)
        cfg = _load_config(args)
        log.warning("config fingerprint %s seed %d", cfg.fingerprint(), seed)
        return COMMANDS[args.command](args, cfg, seed)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SmilesError, EvalError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
