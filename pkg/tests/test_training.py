import json

import numpy as np
import pytest

from brdfest.dataset import DatasetConfig, generate_dataset
from brdfest.errors import ConfigurationError, NonFiniteLossError
from brdfest.losses import LossConfig
from brdfest.training import (
    NormStats,
    TrainConfig,
    compute_norm_stats,
    fit_model,
    targets_for,
)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    cfg = DatasetConfig(
        n_scenes=10, n_views=6, n_voxels=60, resolution=32, seed=21, val_fraction=0.2
    )
    return generate_dataset(cfg, tmp_path_factory.mktemp("tiny_ds"))


class TestNormStats:
    def test_two_scene_example(self, tiny_dataset):
        recs = [tiny_dataset.records[0], tiny_dataset.records[1]]
        recs[0].material.alpha = 0.2
        recs[1].material.alpha = 0.4
        stats = compute_norm_stats(recs, "physical")
        assert stats.mean[4] == pytest.approx(0.3, abs=1e-12)
        assert stats.std[4] == pytest.approx(0.1, abs=1e-12)  # population std

    def test_deterministic_across_reruns(self, tiny_dataset):
        a = compute_norm_stats(tiny_dataset.records, "physical")
        b = compute_norm_stats(tiny_dataset.records, "physical")
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)

    def test_perceptual_parameterization(self, tiny_dataset):
        stats = compute_norm_stats(tiny_dataset.records, "perceptual")
        assert stats.parameterization == "perceptual"
        assert np.all(stats.std > 0)

    def test_zero_std_rejected(self, tiny_dataset):
        recs = [tiny_dataset.records[0], tiny_dataset.records[0]]
        with pytest.raises(ConfigurationError):
            compute_norm_stats(recs, "physical")

    def test_json_roundtrip(self, tiny_dataset):
        stats = compute_norm_stats(tiny_dataset.records, "physical")
        clone = NormStats.from_json(stats.to_json())
        assert np.allclose(clone.mean, stats.mean) and clone.parameterization == "physical"

    def test_normalize_roundtrip(self, tiny_dataset):
        stats = compute_norm_stats(tiny_dataset.records, "physical")
        vecs = targets_for(tiny_dataset.records, "physical")
        assert np.max(np.abs(stats.denormalize(stats.normalize(vecs)) - vecs)) < 1e-12


class TestFitModel:
    def test_zero_budget_returns_initialization(self, tiny_dataset):
        from brdfest.training import init_model_params

        tcfg = TrainConfig(model="grouplet-fast", n_minibatches=0, seed=5, dtype="float64")
        result = fit_model(
            tiny_dataset.split_records("train"), [], tcfg, LossConfig("rmse1", lambda_ec=0.0)
        )
        import brdfest.autodiff as ad

        with ad.precision("float64"):
            fresh = init_model_params(tcfg)
        for name, tensor in result.params.items():
            assert np.array_equal(tensor.data, fresh[name].data)

    def test_same_seed_bit_identical_float64(self, tiny_dataset):
        train = tiny_dataset.split_records("train")
        val = tiny_dataset.split_records("val")

        def run():
            tcfg = TrainConfig(
                model="grouplet-fast",
                n_minibatches=12,
                batch_size=4,
                seed=9,
                dtype="float64",
                val_interval=6,
                grouplet_nodes=6,
            )
            res = fit_model(train, val, tcfg, LossConfig("rmse1", lambda_ec=0.01))
            return {k: t.data.copy() for k, t in res.params.items()}, res.log

        pa, la = run()
        pb, lb = run()
        for name in pa:
            assert np.array_equal(pa[name], pb[name]), name
        assert la == lb

    def test_training_log_written(self, tiny_dataset, tmp_path):
        tcfg = TrainConfig(
            model="grouplet-fast", n_minibatches=4, batch_size=4, seed=1, grouplet_nodes=4
        )
        log_path = tmp_path / "log.jsonl"
        fit_model(
            tiny_dataset.split_records("train"), [], tcfg, LossConfig("rmse1"), log_path=log_path
        )
        lines = [json.loads(l) for l in log_path.read_text().splitlines()]
        assert len(lines) == 4
        assert all({"step", "loss", "e_d", "e_c"} <= set(l) for l in lines)

    def test_validation_tracking_keeps_best(self, tiny_dataset):
        tcfg = TrainConfig(
            model="grouplet-fast",
            n_minibatches=10,
            batch_size=4,
            seed=3,
            val_interval=5,
            grouplet_nodes=5,
        )
        res = fit_model(
            tiny_dataset.split_records("train"),
            tiny_dataset.split_records("val"),
            tcfg,
            LossConfig("rmse1"),
        )
        assert np.isfinite(res.best_val_rmse)
        vals = [e["val_rmse"] for e in res.log if "val_rmse" in e]
        assert res.best_val_rmse == pytest.approx(min(vals))

    def test_non_finite_loss_aborts_with_dump(self, tiny_dataset, tmp_path):
        train = [tiny_dataset.records[0], tiny_dataset.records[1]]
        train[0].voxels[0].colors[0, 0] = np.nan
        tcfg = TrainConfig(
            model="grouplet-fast", n_minibatches=50, batch_size=2, seed=2, grouplet_nodes=8
        )
        log_path = tmp_path / "abort.jsonl"
        with pytest.raises(NonFiniteLossError):
            fit_model(train, [], tcfg, LossConfig("rmse1"), log_path=log_path)
        content = log_path.read_text()
        assert "abort" in content
        # restore the record for other tests (module-scoped fixture)
        train[0].voxels[0].colors[0, 0] = 0.5

    def test_unknown_model_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(model="transformer")

    def test_grouplet_nodes_preset(self):
        assert TrainConfig(model="grouplet-fast").grouplet_nodes == 20
        assert TrainConfig(model="grouplet-slow").grouplet_nodes == 354
        assert TrainConfig(model="grouplet-fast", grouplet_nodes=7).grouplet_nodes == 7

    def test_optimizer_defaults(self):
        assert TrainConfig(model="hemicnn").learning_rate == 1e-4
        assert TrainConfig(model="grouplet-slow").learning_rate == 0.01


@pytest.mark.slow
class TestLossDecreases:
    # the four smoke configurations: each model under the two loss designs
    # that are stable at the fixed published optimizer settings (raw-scale
    # Lab squared error exceeds the SGD stability bound at lr 0.01 with
    # momentum 0.9, so grouplet pairs with rmse1/cuberoot instead)
    @pytest.mark.parametrize(
        "model,metric",
        [
            ("hemicnn", "rmse1"),
            ("hemicnn", "rmse2"),
            ("grouplet-fast", "rmse1"),
            ("grouplet-fast", "cuberoot"),
        ],
    )
    def test_moving_average_drops(self, tiny_dataset, model, metric):
        tcfg = TrainConfig(model=model, n_minibatches=200, batch_size=8, seed=4)
        res = fit_model(
            tiny_dataset.split_records("train"), [], tcfg, LossConfig(metric, lambda_ec=0.01)
        )
        losses = np.array([e["loss"] for e in res.log])
        ma_50 = losses[:50].mean()
        ma_200 = losses[150:200].mean()
        assert ma_200 < ma_50, f"{model}/{metric}: {ma_200:.4f} !< {ma_50:.4f}"
