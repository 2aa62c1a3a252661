"""Minimum-description-length training loss: MSE plus a BIC-weighted expected-L0 term."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gate import expected_open, expected_open_grad
from .network import GatedKan
from .spline import InvalidInputError


@dataclass
class MdlConfig:
    """Objective weights.

    ``edge_costs[l]`` has the layer's egate shape ``(n_in, n_out)`` and
    ``node_costs[l]`` the shape ``(n_out,)`` of the nodes layer ``l`` feeds,
    output nodes included. ``None`` means unit cost everywhere.
    """

    beta: float = 0.0
    n_train: int = 2
    edge_costs: list[np.ndarray] | None = None
    node_costs: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise InvalidInputError("beta must be nonnegative")
        if self.n_train < 2:
            raise InvalidInputError("n_train must be at least 2 for the log(n)/n weight")

    @property
    def weight(self) -> float:
        return self.beta * math.log(self.n_train) / self.n_train

    def costs_for(self, net: GatedKan) -> tuple[list[np.ndarray], list[np.ndarray]]:
        edge = self.edge_costs or [np.ones(l.egate.logits.shape) for l in net.layers]
        node = self.node_costs or [np.ones(l.n_out) for l in net.layers]
        if len(edge) != len(net.layers) or len(node) != len(net.layers):
            raise InvalidInputError("cost tables must have one entry per layer")
        for l, layer in enumerate(net.layers):
            if np.shape(edge[l]) != layer.egate.logits.shape or np.shape(node[l]) != (layer.n_out,):
                raise InvalidInputError(f"cost tables misaligned with layer {l}")
            if np.any(np.asarray(edge[l]) < 0) or np.any(np.asarray(node[l]) < 0):
                raise InvalidInputError("complexity costs must be nonnegative")
        return edge, node


def data_loss(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {target.shape}")
    r = pred - target
    return float(np.mean(np.sum(r.reshape(r.shape[0], -1) ** 2, axis=1)))


def data_loss_grad(pred, target) -> np.ndarray:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    return 2.0 * (pred - target) / pred.shape[0]


def complexity_loss(net: GatedKan, cfg: MdlConfig) -> float:
    """Expected number of open elements, weighted by cost.

    Sum over layers and target nodes j of E[z_j] * (c_j + sum_i E[z_ij] c_ij),
    with E[z_j] = 1 for nodes without an ngate (always the outputs).
    """
    edge_costs, node_costs = cfg.costs_for(net)
    total = 0.0
    for layer, ce, cn in zip(net.layers, edge_costs, node_costs):
        inner = cn + (expected_open(layer.egate) * ce).sum(axis=0)
        if layer.ngate is not None:
            inner = expected_open(layer.ngate) * inner
        total += float(inner.sum())
    return total


def complexity_grad(net: GatedKan, cfg: MdlConfig) -> dict[str, np.ndarray]:
    """d complexity_loss / d logits, keyed like ``GatedKan.parameters``."""
    edge_costs, node_costs = cfg.costs_for(net)
    grads = {}
    for l, (layer, ce, cn) in enumerate(zip(net.layers, edge_costs, node_costs)):
        dedge = expected_open_grad(layer.egate) * ce
        if layer.ngate is not None:
            pn = expected_open(layer.ngate)
            inner = cn + (expected_open(layer.egate) * ce).sum(axis=0)
            grads[f"{l}.ngate"] = expected_open_grad(layer.ngate) * inner
            dedge = dedge * pn[None, :]
        grads[f"{l}.egate"] = dedge
    return grads


def total_loss(pred, target, net: GatedKan, cfg: MdlConfig) -> float:
    return data_loss(pred, target) + cfg.weight * complexity_loss(net, cfg)
