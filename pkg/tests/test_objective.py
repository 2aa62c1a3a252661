import math

import numpy as np
import pytest

from oracles import finite_difference, naive_mse, random_net
from sparse_kan.gate import OPEN_LOGIT
from sparse_kan.network import GatedKan, KanShape
from sparse_kan.objective import (
    MdlConfig,
    complexity_grad,
    complexity_loss,
    data_loss,
    data_loss_grad,
    total_loss,
)
from sparse_kan.spline import InvalidInputError


def p_open(alpha):
    return 1.0 / (1.0 + math.exp(-(alpha - (2 / 3) * math.log(0.1 / 1.1))))


def compositional_oracle(net, cfg):
    """Loop over every node and its incoming edges, one scalar at a time."""
    total = 0.0
    for l, layer in enumerate(net.layers):
        for j in range(layer.n_out):
            edges = sum(p_open(layer.egate.logits[i, j]) for i in range(layer.n_in))
            pn = 1.0 if layer.ngate is None else p_open(layer.ngate.logits[j])
            total += pn * (1.0 + edges)
    return total


class TestDataLoss:
    def test_perfect_prediction(self):
        y = np.random.default_rng(0).normal(size=(7, 2))
        assert data_loss(y, y) == 0.0

    def test_single_sample_two_outputs(self):
        assert data_loss(np.array([[3.0, 4.0]]), np.zeros((1, 2))) == 25.0

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(1)
        p, t = rng.normal(size=(9, 3)), rng.normal(size=(9, 3))
        assert data_loss(p, t) == pytest.approx(naive_mse(p, t), rel=1e-13)

    def test_gradient(self):
        rng = np.random.default_rng(2)
        p, t = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        fd = finite_difference(lambda: data_loss(p, t), p)
        np.testing.assert_allclose(data_loss_grad(p, t), fd, rtol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            data_loss(np.zeros((3, 1)), np.zeros((3, 2)))


class TestComplexity:
    def test_all_open_counts_edges_and_nodes(self):
        net = GatedKan.create(KanShape((2, 4, 4, 4, 2)), gate_init=OPEN_LOGIT)
        # 48 edges plus 4 + 4 + 4 + 2 nodes
        assert complexity_loss(net, MdlConfig(1.0, 10)) == pytest.approx(62.0, abs=1e-6)

    def test_single_edge_at_default_init(self):
        net = GatedKan.create(KanShape((1, 1)), gate_init=-1.0)
        assert complexity_loss(net, MdlConfig(1.0, 10)) == pytest.approx(1.6453, abs=1e-4)

    def test_beta_zero_is_data_loss(self):
        net = GatedKan.create(KanShape((2, 3, 1)), np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(6, 2))
        y = np.ones((6, 1))
        assert total_loss(net(x), y, net, MdlConfig(0.0, 6)) == data_loss(net(x), y)

    def test_bic_weight(self):
        net = GatedKan.create(KanShape((2, 3, 1)), np.random.default_rng(0))
        cfg = MdlConfig(1.0, 3)
        pred = np.zeros((3, 1))
        expect = (math.log(3) / 3) * complexity_loss(net, cfg)
        assert total_loss(pred, pred, net, cfg) == pytest.approx(expect, rel=1e-14)

    @pytest.mark.parametrize("fc, ngates", [(False, False), (True, False), (True, True)])
    def test_matches_compositional_oracle(self, fc, ngates):
        net = random_net(np.random.default_rng(3), [2, 3, 3, 1], fc=fc, ngates=ngates)
        assert complexity_loss(net, MdlConfig(1.0, 10)) == pytest.approx(compositional_oracle(net, None), rel=1e-12)

    @pytest.mark.parametrize("ngates", [False, True])
    def test_gradient(self, ngates):
        net = random_net(np.random.default_rng(4), [2, 3, 2], fc=True, ngates=ngates)
        cfg = MdlConfig(1.0, 10)
        grads = complexity_grad(net, cfg)
        params = net.parameters()
        for key, g in grads.items():
            fd = finite_difference(lambda: complexity_loss(net, cfg), params[key])
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9, err_msg=key)

    def test_custom_costs(self):
        net = GatedKan.create(KanShape((1, 1)), gate_init=OPEN_LOGIT)
        cfg = MdlConfig(1.0, 10, edge_costs=[np.array([[3.0]])], node_costs=[np.array([0.5])])
        assert complexity_loss(net, cfg) == pytest.approx(3.5)

    def test_misaligned_costs(self):
        net = GatedKan.create(KanShape((2, 1)))
        with pytest.raises(InvalidInputError):
            complexity_loss(net, MdlConfig(1.0, 10, edge_costs=[np.ones((1, 1))]))

    @pytest.mark.parametrize("kw", [dict(beta=-0.1), dict(n_train=1)])
    def test_invalid_config(self, kw):
        with pytest.raises(InvalidInputError):
            MdlConfig(**{"beta": 0.1, "n_train": 10, **kw})
