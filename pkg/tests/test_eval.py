import numpy as np
import pytest

from probqsar.config import RunConfig
from probqsar.eval import (
    ConstantTruth,
    EmptyInput,
    EvalReport,
    FitAudit,
    LeakageError,
    LengthMismatch,
    MeanPredictor,
    ModelSpec,
    ReportRow,
    SplitSpec,
    TooFewSamples,
    ablation_models,
    array_views,
    bayes_rmse,
    corrupted_views,
    default_models,
    molecule_views,
    r2,
    rmse,
    run_ablation,
    run_benchmark,
    spearman,
    split,
    synthetic_heteroscedastic_task,
)
from probqsar.fixture import fixture_rows


def small_config() -> RunConfig:
    cfg = RunConfig()
    for key, value in {
        "skipgram.epochs": 1, "autoencoder.hidden": 16, "autoencoder.code": 6, "autoencoder.epochs": 2,
        "gan.epochs": 2, "gan.hidden": [8, 8, 8], "gan.noise_dim": 4, "gan.disc_width": 8, "gan.samples": 10,
        "mlp.hidden": [8], "mlp.epochs": 2, "tree.max_depth": 3,
    }.items():
        cfg[key] = value
    return cfg


class TestMetrics:
    def test_rmse_examples(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5), abs=1e-12)

    def test_r2_examples(self):
        assert r2([1, 2, 3], [1, 2, 3]) == 1.0
        assert r2([2, 2, 2], [1, 2, 3]) == pytest.approx(0.0, abs=1e-12)
        assert r2([3, 2, 1], [1, 2, 3]) == pytest.approx(-3.0, abs=1e-12)

    def test_r2_at_most_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert r2(rng.normal(size=10), rng.normal(size=10)) <= 1.0

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            rmse([1, 2], [1])
        with pytest.raises(EmptyInput):
            rmse([], [])
        with pytest.raises(ConstantTruth):
            r2([1, 2], [5, 5])

    def test_spearman_monotone(self):
        assert spearman([1, 2, 3, 4], [10, 20, 25, 100]) == pytest.approx(1.0)


class TestSplit:
    def test_disjoint_cover_and_size(self):
        train, test = split(101, SplitSpec(0.8, 3))
        assert len(train) == 81 and len(test) == 20
        assert set(train).isdisjoint(test) and sorted(np.concatenate([train, test]).tolist()) == list(range(101))

    def test_deterministic(self):
        a, b = split(50, SplitSpec(seed=9)), split(50, SplitSpec(seed=9))
        assert all(np.array_equal(u, v) for u, v in zip(a, b))
        assert not np.array_equal(split(50, SplitSpec(seed=10))[0], a[0])

    def test_too_small(self):
        with pytest.raises(TooFewSamples):
            split(4)


class TestSyntheticTask:
    def test_std_range_and_shapes(self):
        task = synthetic_heteroscedastic_task(500, 1)
        assert task.x.shape == (500, 203) and task.y.shape == (500,)
        assert task.true_std.min() >= 0.05 and task.true_std.max() <= 0.5
        assert np.abs(task.x).max() <= 1.0

    def test_deterministic(self):
        a, b = synthetic_heteroscedastic_task(500, 2), synthetic_heteroscedastic_task(500, 2)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
        c = synthetic_heteroscedastic_task(500, 3)
        assert np.array_equal(a.w, c.w) and not np.array_equal(a.y, c.y)

    def test_bayes_rmse(self):
        task = synthetic_heteroscedastic_task(20_000, 4)
        assert bayes_rmse(task.true_std) == pytest.approx(np.sqrt(np.mean(task.true_std**2)), abs=1e-15)
        assert rmse(task.true_mean, task.y) == pytest.approx(bayes_rmse(task.true_std), rel=0.02)

    def test_too_small(self):
        with pytest.raises(TooFewSamples):
            synthetic_heteroscedastic_task(499, 1)

    def test_corrupted_views_widths(self):
        views = corrupted_views(synthetic_heteroscedastic_task(500, 1))
        assert views["raw"].shape == (500, 812) and views["fingerprint"].shape == (500, 512)
        assert np.array_equal(views["fingerprint"], views["raw"][:, :512])


class TestLeakage:
    def test_audit_rejects_test_rows(self):
        audit = FitAudit(np.array([3, 4]))
        audit.check("ok", np.array([0, 1, 2]))
        with pytest.raises(LeakageError):
            audit.check("bad", np.array([1, 4]))

    def test_benchmark_never_fits_on_test_rows(self):
        cfg = small_config()
        smiles = [s for _, s, _ in fixture_rows(80)]
        y = np.array([v for _, _, v in fixture_rows(80)])
        audits = []
        run_benchmark(molecule_views(smiles, cfg), y, default_models(cfg, ("latent",)), [1, 2], cfg, audits=audits)
        assert len(audits) == 2
        for audit in audits:
            stages = {name for name, _ in audit.log}
            assert {"featurizer", "autoencoder", "prob-cgan", "ridge[latent]"} <= stages
            for _, rows in audit.log:
                assert audit.test.isdisjoint(rows.tolist())

    def test_leaking_view_detected(self):
        cfg = small_config()

        def leaky(train, seed, needed, audit):
            audit.check("scaler", np.arange(30))
            return {"x": np.zeros((30, 2))}

        with pytest.raises(LeakageError):
            run_benchmark(leaky, np.arange(30.0), [ModelSpec("mean", "x", lambda s: MeanPredictor())], [1], cfg)


class TestReport:
    def test_formatting(self):
        row = ReportRow("m", [0.8124, 0.8138], [0.5, 0.5])
        assert row.r2_text == f"0.8131 (±{np.std([0.8124, 0.8138], ddof=1):.4f})"
        assert ReportRow("m", [0.5], [0.1]).r2_text == "0.5000"

    def test_text_and_csv(self):
        rep = EvalReport([ReportRow("a", [0.1, 0.2], [1.0, 1.1])], [1, 2], "cfg", "data")
        assert rep.to_text().splitlines()[1].startswith("Methods")
        assert rep.to_csv().splitlines()[1].startswith("a,")

    def test_reproducible_bytes(self):
        cfg = small_config()
        task = synthetic_heteroscedastic_task(500, 1)
        views = array_views({"x": task.x[:, :10]}, cfg)
        models = [ModelSpec("mean", "x", lambda s: MeanPredictor())] + default_models(cfg, ("x",))[1:]
        a = run_benchmark(views, task.y, models, [1, 2], cfg, "d")
        b = run_benchmark(views, task.y, models, [1, 2], cfg, "d")
        assert a.to_text() == b.to_text() and a.to_csv() == b.to_csv() and a.curves_csv() == b.curves_csv()
        assert all(min(r.rmse) >= 0 and max(r.r2) <= 1 for r in a.rows)

    def test_curves_sorted_by_truth(self):
        cfg = small_config()
        task = synthetic_heteroscedastic_task(500, 1)
        rep = run_benchmark(array_views({"x": task.x}, cfg), task.y,
                            [ModelSpec("mean", "x", lambda s: MeanPredictor())], [1], cfg)
        truths = [c[1] for c in rep.curves]
        assert len(truths) == 100 and truths == sorted(truths)


class TestAblation:
    def test_rows_and_widths(self):
        cfg = small_config()
        task = synthetic_heteroscedastic_task(500, 1)
        rep = run_ablation(array_views(corrupted_views(task), cfg), task.y, [1], cfg)
        assert [r.name for r in rep.rows] == ["prob-cgan", "cgan", "no-autoencoder", "fingerprint-only"]
        assert rep.widths == {"prob-cgan": 6, "cgan": 6, "no-autoencoder": 812, "fingerprint-only": 512}

    def test_model_list(self):
        assert len(ablation_models(RunConfig())) == 4
