import json

import numpy as np
import pytest

import sparse_kan.trainer as trainer
from sparse_kan.data import gen_symbolic
from sparse_kan.network import GatedKan, KanShape
from sparse_kan.spline import InvalidInputError
from sparse_kan.trainer import (
    Adam,
    ConditionSpec,
    TrainConfig,
    TrainingError,
    build_network,
    evaluate_condition,
    train,
)


def small_data(n=64, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 2))
    return x, (np.sin(x[:, 0]) + x[:, 1] ** 2)[:, None]


def fit(cond_name="baseline", beta=0.0, epochs=10, seed=0, widths=(2, 3, 1), **cfg):
    cond = ConditionSpec.from_name(cond_name, beta)
    net = build_network(widths, cond, np.random.default_rng(np.random.SeedSequence([seed, 1])))
    kw = dict(epochs=epochs, batch_size=16, warmup_epochs=0, fc_warmup_epochs=0, seed=seed)
    return train(net, small_data(), TrainConfig(**{**kw, **cfg}), cond)


class TestConfig:
    def test_grid_schedule(self):
        assert TrainConfig(epochs=1000).grid_update_epochs() == list(range(0, 50, 5))

    def test_grid_schedule_disabled(self):
        assert TrainConfig(epochs=10, warmup_epochs=0, fc_warmup_epochs=0, grid_update_count=0).grid_update_epochs() == []

    def test_derived_patience(self):
        assert TrainConfig(epochs=10000).patience == 500
        assert TrainConfig(epochs=3000).patience == 150

    def test_warmups_exceed_budget(self):
        with pytest.raises(InvalidInputError):
            TrainConfig(epochs=100, warmup_epochs=80, fc_warmup_epochs=30)

    def test_condition_flags(self):
        c = ConditionSpec.from_name("fc", beta=0.5)
        assert (c.use_fc, c.use_gates, c.beta, c.reported_beta) == (True, False, 0.0, None)
        assert ConditionSpec.from_name("full", 0.1).reported_beta == 0.1
        with pytest.raises(InvalidInputError):
            ConditionSpec.from_name("sparse")


def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([1.0, -2.0])}
    Adam(lr=0.1).step(p, {"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(p["w"], [0.9, -1.9], rtol=1e-6)


class TestTrain:
    def test_descends_on_zero_target(self):
        cond = ConditionSpec.from_name("baseline")
        net = build_network((2, 3, 1), cond, np.random.default_rng(0))
        x = np.random.default_rng(1).uniform(-1, 1, (256, 2))
        _, hist = train(net, (x, np.zeros((256, 1))),
                        TrainConfig(epochs=50, batch_size=64, warmup_epochs=0, fc_warmup_epochs=0), cond)
        losses = [r["data_loss"] for r in hist.records]
        assert losses[-1] < 0.5 * losses[0]

    def test_baseline_keeps_every_edge(self):
        net, hist = fit("baseline", epochs=5)
        assert hist.records[-1]["trunk_active"] == 9
        assert trainer.active_counts(net).sparsity_pct == 100.0

    def test_fc_logits_frozen_during_warmup(self):
        cond = ConditionSpec.from_name("full", 0.1)
        net = build_network((2, 3, 1), cond, np.random.default_rng(0))
        before = [l.egate.logits.copy() for l in net.layers]
        train(net, small_data(), TrainConfig(epochs=6, batch_size=16, warmup_epochs=3, fc_warmup_epochs=3), cond)
        for layer, b in zip(net.layers, before):
            fc = ~layer.trunk
            np.testing.assert_array_equal(layer.egate.logits[fc], b[fc])
            assert not np.array_equal(layer.egate.logits[layer.trunk], b[layer.trunk])

    def test_fc_logits_move_after_warmup(self):
        cond = ConditionSpec.from_name("full", 0.1)
        net = build_network((2, 3, 1), cond, np.random.default_rng(0))
        before = net.layers[1].egate.logits.copy()
        train(net, small_data(), TrainConfig(epochs=6, batch_size=16, warmup_epochs=1, fc_warmup_epochs=1), cond)
        fc = ~net.layers[1].trunk
        assert not np.array_equal(net.layers[1].egate.logits[fc], before[fc])

    def test_non_finite_loss_aborts(self, monkeypatch):
        monkeypatch.setattr(trainer, "data_loss", lambda p, t: float("nan"))
        with pytest.raises(TrainingError, match="epoch 1, batch 1"):
            fit(epochs=3)

    def test_empty_data(self):
        cond = ConditionSpec.from_name("baseline")
        net = build_network((2, 1), cond, np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            train(net, (np.zeros((0, 2)), np.zeros((0, 1))), TrainConfig(epochs=1, warmup_epochs=0, fc_warmup_epochs=0), cond)

    def test_dimension_mismatch(self):
        cond = ConditionSpec.from_name("baseline")
        net = build_network((3, 1), cond, np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            train(net, small_data(), TrainConfig(epochs=1, warmup_epochs=0, fc_warmup_epochs=0), cond)

    def test_deterministic(self):
        a, _ = fit("full", 0.1, epochs=4, seed=3)
        b, _ = fit("full", 0.1, epochs=4, seed=3)
        for k, v in a.parameters().items():
            np.testing.assert_array_equal(v, b.parameters()[k])

    def test_history_file(self, tmp_path):
        cond = ConditionSpec.from_name("gates", 0.1)
        net = build_network((2, 3, 1), cond, np.random.default_rng(0))
        cfg = TrainConfig(epochs=7, batch_size=32, warmup_epochs=2, fc_warmup_epochs=0)
        _, hist = train(net, small_data(), cfg, cond, tmp_path / "h.jsonl")
        lines = (tmp_path / "h.jsonl").read_text().splitlines()
        assert len(lines) == hist.epochs_run == 7
        rec = json.loads(lines[-1])
        assert set(rec) >= {"epoch", "data_loss", "complexity_loss", "total", "decisiveness"}
        assert json.loads(lines[0])["epoch"] == 1

    def test_early_stop(self):
        # frozen gates are fully decisive; a huge tolerance makes every epoch count as stalled
        _, hist = fit("baseline", epochs=50, early_stop=True, patience=2, improvement_tol=1.0)
        assert hist.stopped_early and hist.epochs_run == 3


def test_evaluate_condition_row():
    prob = gen_symbolic("F1", n_train=64, n_test=32)
    cfg = TrainConfig(epochs=3, batch_size=32, warmup_epochs=1, fc_warmup_epochs=1)
    row, net, hist = evaluate_condition(ConditionSpec.from_name("full", 0.1), prob, cfg, [1, 2, 1], config_hash="h")
    assert (row.condition, row.beta, row.epochs, row.config_hash) == ("full", 0.1, 3, "h")
    assert row.rmse_multistep is None
    with pytest.raises(InvalidInputError):
        evaluate_condition(ConditionSpec.from_name("full", 0.1), prob, cfg, [2, 2, 1])
