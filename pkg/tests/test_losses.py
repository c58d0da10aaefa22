import numpy as np
import pytest

from brdfest import autodiff as ad
from brdfest.autodiff import Tensor, grad_check, parameter
from brdfest.brdf import (
    WardBRDF,
    cuberoot_distance,
    physical_to_perceptual,
    random_ward,
)
from brdfest.errors import ConfigurationError
from brdfest.losses import (
    LossConfig,
    clamp_physical,
    loss_ec,
    loss_total,
    perceptual_to_physical_graph,
    physical_parts,
)


def stats_for(f_bar, b_bar, views=1):
    return (np.tile(np.asarray(f_bar, dtype=float), (views, 1)), np.tile(np.asarray(b_bar, dtype=float), (views, 1)))


class TestLossConfig:
    def test_defaults_and_parameterization(self):
        assert LossConfig("rmse1").parameterization == "physical"
        assert LossConfig("rmse2").parameterization == "perceptual"
        assert LossConfig("cuberoot").parameterization == "physical"

    def test_inconsistent_parameterization_rejected(self):
        with pytest.raises(ConfigurationError):
            LossConfig("rmse2", parameterization="physical")
        with pytest.raises(ConfigurationError):
            LossConfig("rmse1", parameterization="perceptual")

    def test_unknown_metric_rejected(self):
        with pytest.raises(ConfigurationError):
            LossConfig("huber")

    def test_json_roundtrip(self):
        cfg = LossConfig("rmse2", lambda_ec=0.1, lambda_g=2.0)
        clone = LossConfig.from_json(cfg.to_json())
        assert clone == cfg


class TestLossEc:
    def test_exact_cancellation(self):
        rho_d = Tensor(np.array([[0.6, 0.6, 0.6]]))
        rho_s = Tensor(np.array([[0.4]]))  # rho_d + rho_s = 1 per channel
        value = loss_ec(rho_d, rho_s, [stats_for([0.5] * 3, [0.5] * 3, views=3)])
        assert value.item() == pytest.approx(0.0, abs=1e-12)

    def test_single_view_frozen_value(self):
        # B=(0.5,)*3, F=0, rho_d + rho_s = 1 -> 3 * (0.5^2.4)^2
        rho_d = Tensor(np.array([[0.7, 0.6, 0.8]]))
        rho_s = Tensor(np.array([[0.3]]))
        rho_d.data[0] = [0.7, 0.7, 0.7]
        value = loss_ec(rho_d, rho_s, [stats_for([0.0] * 3, [0.5] * 3)])
        assert value.item() == pytest.approx(0.10769047078097205, rel=1e-10)

    def test_doubling_views_doubles_value(self):
        rho_d = Tensor(np.array([[0.2, 0.3, 0.4]]))
        rho_s = Tensor(np.array([[0.2]]))
        one = loss_ec(rho_d, rho_s, [stats_for([0.3] * 3, [0.6] * 3, views=2)])
        two = loss_ec(rho_d, rho_s, [stats_for([0.3] * 3, [0.6] * 3, views=4)])
        assert two.item() == pytest.approx(2.0 * one.item(), rel=1e-12)

    def test_split_invariance(self):
        # only the sum rho_d + rho_s matters (the scale constraint)
        stats = [stats_for([0.4, 0.5, 0.3], [0.7, 0.6, 0.8], views=3)]
        a = loss_ec(Tensor(np.array([[0.5, 0.4, 0.3]])), Tensor(np.array([[0.2]])), stats)
        b = loss_ec(Tensor(np.array([[0.6, 0.5, 0.4]])), Tensor(np.array([[0.1]])), stats)
        assert a.item() == pytest.approx(b.item(), rel=1e-12)


class TestPerceptualGraph:
    def test_matches_batch_inverse(self):
        rng = np.random.default_rng(0)
        physical = np.stack([random_ward(rng).to_vector() for _ in range(16)])
        perceptual = physical_to_perceptual(physical)
        rho_d, rho_s, alpha = perceptual_to_physical_graph(Tensor(perceptual))
        assert np.max(np.abs(rho_d.data - physical[:, 0:3])) < 1e-9
        assert np.max(np.abs(rho_s.data[:, 0] - physical[:, 3])) < 1e-9
        assert np.max(np.abs(alpha.data[:, 0] - physical[:, 4])) < 1e-9

    def test_graph_is_differentiable(self):
        rng = np.random.default_rng(1)
        physical = np.stack([random_ward(rng).to_vector() for _ in range(3)])
        pred = parameter(physical_to_perceptual(physical))

        def f(pred):
            rho_d, rho_s, alpha = perceptual_to_physical_graph(pred)
            return (rho_d**2.0).sum() + (rho_s**2.0).sum() + (alpha**2.0).sum()

        assert grad_check(f, [pred], h=1e-6) < 1e-6


class TestLossTotal:
    def _targets(self, n, seed=0):
        rng = np.random.default_rng(seed)
        return np.stack([random_ward(rng).to_vector() for _ in range(n)])

    def test_perfect_prediction_leaves_only_ec(self):
        targets = self._targets(4)
        stats = [stats_for([0.4] * 3, [0.7] * 3, views=2) for _ in range(4)]
        cfg = LossConfig("rmse1", lambda_ec=0.01)
        pred = Tensor(targets.copy())
        loss, comp = loss_total(pred, targets, stats, cfg)
        assert comp["e_d"] == pytest.approx(0.0, abs=1e-15)
        assert loss.item() == pytest.approx(0.01 * comp["e_c"], rel=1e-9)
        assert comp["e_c"] >= 0.0

    def test_lambda_zero_is_pure_distance(self):
        targets = self._targets(3, seed=1)
        pred = Tensor(targets + 0.05)
        cfg = LossConfig("rmse1", lambda_ec=0.0)
        loss, comp = loss_total(pred, targets, [], cfg)
        assert loss.item() == pytest.approx(comp["e_d"], rel=1e-12)
        assert comp["e_c"] == 0.0

    def test_rmse1_matches_metric_mean(self):
        targets = self._targets(5, seed=2)
        delta = np.zeros((5, 5))
        delta[:, 0] = 0.1
        pred = Tensor(targets + delta)
        cfg = LossConfig("rmse1", lambda_ec=0.0)
        loss, _ = loss_total(pred, targets, [], cfg)
        assert loss.item() == pytest.approx(0.01, rel=1e-10)

    def test_cuberoot_term_matches_metric_function(self):
        rng = np.random.default_rng(30)
        targets = self._targets(3, seed=3)
        pred_np = np.stack([random_ward(rng).to_vector() for _ in range(3)])
        cfg = LossConfig("cuberoot", lambda_ec=0.0)
        loss, _ = loss_total(Tensor(pred_np), targets, [], cfg, train_grid=False)
        expected = np.mean(
            [
                cuberoot_distance(WardBRDF.from_vector(t), WardBRDF.from_vector(p))
                for t, p in zip(targets, pred_np)
            ]
        )
        assert loss.item() == pytest.approx(expected, rel=1e-9)

    def test_gradients_all_metrics(self):
        rng = np.random.default_rng(4)
        targets = self._targets(2, seed=5)
        stats = [stats_for(rng.uniform(0.2, 0.6, 3), rng.uniform(0.4, 0.8, 3), views=2) for _ in range(2)]
        for metric in ("rmse1", "cuberoot"):
            pred = parameter(np.stack([random_ward(rng).to_vector() for _ in range(2)]))
            cfg = LossConfig(metric, lambda_ec=0.01)

            def f(pred):
                loss, _ = loss_total(pred, targets, stats, cfg)
                return loss

            assert grad_check(f, [pred], h=1e-6) < 1e-3, metric
        # rmse2 with E_c: perceptual prediction, conversion inside the graph
        pred = parameter(physical_to_perceptual(np.stack([random_ward(rng).to_vector() for _ in range(2)])))
        targets_p = physical_to_perceptual(targets)
        cfg = LossConfig("rmse2", lambda_ec=0.01)

        def f2(pred):
            loss, _ = loss_total(pred, targets_p, stats, cfg)
            return loss

        assert grad_check(f2, [pred], h=1e-6) < 1e-3

    def test_loss_continuous_in_lambda(self):
        targets = self._targets(2, seed=6)
        pred = Tensor(targets + 0.03)
        stats = [stats_for([0.3] * 3, [0.6] * 3) for _ in range(2)]
        values = []
        for lam in (0.0, 0.005, 0.01, 0.02):
            loss, _ = loss_total(pred, targets, stats, LossConfig("rmse1", lambda_ec=lam))
            values.append(loss.item())
        diffs = np.diff(values)
        assert np.all(diffs > 0)
        assert values[2] - values[0] == pytest.approx(2 * (values[1] - values[0]), rel=1e-9)


def test_clamp_physical():
    vec = np.array([[1.2, -0.1, 0.5, 1.5, 0.001], [0.5, 0.5, 0.5, 0.2, 2.0]])
    out = clamp_physical(vec)
    assert np.array_equal(out[0], [1.0, 0.0, 0.5, 1.0, 0.03])
    assert np.array_equal(out[1], [0.5, 0.5, 0.5, 0.2, 1.0])
    assert vec[0, 0] == 1.2  # input untouched


def test_physical_parts_slices():
    pred = Tensor(np.arange(10, dtype=float).reshape(2, 5))
    rho_d, rho_s, alpha = physical_parts(pred, "physical")
    assert rho_d.shape == (2, 3) and rho_s.shape == (2, 1) and alpha.shape == (2, 1)
    assert np.array_equal(rho_s.data[:, 0], [3.0, 8.0])
