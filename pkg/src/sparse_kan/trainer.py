"""Mini-batch Adam training of gated KANs under the MDL objective."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DYNAMICAL, Problem
from .evaluation import ReportRow, multistep_rmse, r_squared, rmse, safe_model
from .gate import decisiveness
from .network import GatedKan, KanShape, active_counts, backward, forward
from .objective import MdlConfig, complexity_grad, complexity_loss, data_loss, data_loss_grad
from .spline import InvalidInputError

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 128
    lr: float = 1e-3
    warmup_epochs: int = 200
    fc_warmup_epochs: int = 100
    grid_update_count: int = 10
    grid_update_within: int = 50
    early_stop: bool = False
    decisiveness_threshold: float = 0.99
    patience: int | None = None
    improvement_tol: float = 1e-6
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be positive")
        if self.warmup_epochs + self.fc_warmup_epochs > self.epochs:
            raise InvalidInputError("warm-up phases exceed the epoch budget")
        if not 0.5 < self.decisiveness_threshold <= 1.0:
            raise InvalidInputError("decisiveness threshold must lie in (0.5, 1]")
        if self.patience is None:
            self.patience = min(500, math.ceil(0.05 * self.epochs))

    def grid_update_epochs(self) -> list[int]:
        """0-based epochs at which grids are refit, evenly spaced from the first epoch."""
        if self.grid_update_count <= 0:
            return []
        stride = max(1, self.grid_update_within // self.grid_update_count)
        return [e for e in range(0, self.grid_update_count * stride, stride) if e < self.epochs]


@dataclass
class ConditionSpec:
    name: str
    use_fc: bool
    use_gates: bool
    beta: float = 0.0
    gate_init_logit: float = -1.0

    def __post_init__(self):
        if not self.use_gates:
            self.beta = 0.0

    @classmethod
    def from_name(cls, name: str, beta: float = 0.0, gate_init_logit: float = -1.0) -> ConditionSpec:
        flags = {"baseline": (False, False), "fc": (True, False), "gates": (False, True), "full": (True, True)}
        if name not in flags:
            raise InvalidInputError(f"unknown condition {name!r}; choose from {sorted(flags)}")
        use_fc, use_gates = flags[name]
        return cls(name, use_fc, use_gates, beta, gate_init_logit)

    @property
    def reported_beta(self) -> float | None:
        return self.beta if self.use_gates else None


class Adam:
    """Adam over a dict of arrays, updated in place."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in params:
                continue
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def build_network(shape_widths, cond: ConditionSpec, rng: np.random.Generator, **kwargs) -> GatedKan:
    shape = KanShape(tuple(shape_widths), forward_connections=cond.use_fc)
    return GatedKan.create(shape, rng, gate_init=cond.gate_init_logit, gates_trainable=cond.use_gates, **kwargs)


def trainable_parameters(net: GatedKan) -> dict[str, np.ndarray]:
    params = net.parameters()
    for l, layer in enumerate(net.layers):
        if not layer.egate.trainable:
            params.pop(f"{l}.egate")
        if layer.ngate is not None and not layer.ngate.trainable:
            params.pop(f"{l}.ngate")
    return params


def gate_decisiveness(net: GatedKan) -> float:
    bank = net.all_gate_logits(trainable_only=True)
    if bank.size == 0:
        bank = net.all_gate_logits()
    return decisiveness(bank)


@dataclass
class History:
    records: list[dict] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


def train(
    net: GatedKan,
    data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    cond: ConditionSpec,
    history_path: str | Path | None = None,
) -> tuple[GatedKan, History]:
    """Train ``net`` in place and return it with the per-epoch history.

    Gate noise and data shuffling draw from independent streams spawned from
    ``cfg.seed``, so conditions sharing a seed see the same batch order.
    """
    x, y = (np.asarray(a, dtype=float) for a in data)
    if len(x) == 0:
        raise InvalidInputError("empty training data")
    if x.shape[1] != net.shape.input_dim or y.shape[1] != net.shape.output_dim:
        raise InvalidInputError(
            f"data dims ({x.shape[1]}, {y.shape[1]}) do not match network "
            f"({net.shape.input_dim}, {net.shape.output_dim})")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite training data")

    n = len(x)
    data_ss, gate_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    data_rng, gate_rng = np.random.default_rng(data_ss), np.random.default_rng(gate_ss)
    opt = Adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    params = trainable_parameters(net)
    gated = cond.use_gates
    fc_net = net.shape.forward_connections
    fc_release = cfg.warmup_epochs + cfg.fc_warmup_epochs
    trunk_masks = {f"{l}.egate": layer.trunk.astype(float) for l, layer in enumerate(net.layers)}
    grid_epochs = set(cfg.grid_update_epochs())
    history = History()
    fh = open(history_path, "w") if history_path else None
    best, since_best = math.inf, 0
    try:
        for epoch in range(cfg.epochs):
            beta = cond.beta if gated and epoch >= cfg.warmup_epochs else 0.0
            mdl = MdlConfig(beta, max(n, 2))
            freeze_fc = gated and fc_net and epoch < fc_release
            perm = data_rng.permutation(n)
            sum_loss = 0.0
            for b, start in enumerate(range(0, n, cfg.batch_size)):
                idx = perm[start : start + cfg.batch_size]
                xb, yb = x[idx], y[idx]
                gates = net.sample_gates(gate_rng)
                if b == 0 and epoch in grid_epochs:
                    net.update_grids(xb, gates)
                pred, cache = forward(net, xb, gates)
                loss = data_loss(pred, yb)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
                grads = backward(net, cache, data_loss_grad(pred, yb))
                if beta > 0:
                    for k, g in complexity_grad(net, mdl).items():
                        grads[k] = grads[k] + mdl.weight * g
                if freeze_fc:
                    for k, mask in trunk_masks.items():
                        grads[k] = grads[k] * mask
                opt.step(params, grads)
                sum_loss += loss * len(idx)

            dl = sum_loss / n
            cl = complexity_loss(net, mdl)
            total = dl + mdl.weight * cl
            counts = active_counts(net)
            rec = {
                "epoch": epoch + 1,
                "data_loss": dl,
                "complexity_loss": cl,
                "total": total,
                "decisiveness": gate_decisiveness(net),
                "trunk_active": counts.trunk,
                "fc_active": counts.fc,
            }
            history.records.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()

            if cfg.early_stop and epoch + 1 >= fc_release:
                if total < best - cfg.improvement_tol * abs(best) or not math.isfinite(best):
                    best, since_best = total, 0
                else:
                    since_best += 1
                if rec["decisiveness"] > cfg.decisiveness_threshold and since_best >= cfg.patience:
                    history.stopped_early = True
                    log.info("early stop at epoch %d", epoch + 1)
                    break
    finally:
        if fh:
            fh.close()
    return net, history


def evaluate_network(net: GatedKan, problem: Problem, horizon: int | None = None) -> dict:
    """Test metrics under thresholded gates; multi-step only for dynamical problems."""
    pred = net(problem.test_x)
    counts = active_counts(net)
    out = {
        "r2": r_squared(pred, problem.test_y),
        "rmse_1step": rmse(pred, problem.test_y),
        "rmse_multistep": None,
        "diverged": False,
        "trunk_active": counts.trunk,
        "fc_active": counts.fc if net.shape.forward_connections else None,
        "sparsity_pct": counts.sparsity_pct,
    }
    if problem.kind == DYNAMICAL and horizon:
        ms, diverged = multistep_rmse(safe_model(net), problem.trajectory, horizon)
        out["rmse_multistep"], out["diverged"] = ms, diverged
    return out


def evaluate_condition(
    spec: ConditionSpec,
    problem: Problem,
    cfg: TrainConfig,
    widths,
    horizon: int | None = 500,
    history_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    config_hash: str = "",
    net_kwargs: dict | None = None,
) -> tuple[ReportRow, GatedKan, History]:
    """Build, train and score one cell of the condition grid."""
    widths = list(widths)
    if widths[0] != problem.input_dim or widths[-1] != problem.output_dim:
        raise InvalidInputError(f"widths {widths} do not match problem dims "
                                f"({problem.input_dim}, {problem.output_dim})")
    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    net = build_network(widths, spec, init_rng, **(net_kwargs or {}))
    net, history = train(net, (problem.train_x, problem.train_y), cfg, spec, history_path)
    if checkpoint_path:
        net.save(checkpoint_path)
    m = evaluate_network(net, problem, horizon)
    row = ReportRow(
        problem=problem.name,
        condition=spec.name,
        beta=spec.reported_beta,
        r2=m["r2"],
        rmse_1step=m["rmse_1step"],
        rmse_multistep=m["rmse_multistep"],
        trunk_active=m["trunk_active"],
        fc_active=m["fc_active"],
        sparsity_pct=m["sparsity_pct"],
        epochs=history.epochs_run,
        seed=cfg.seed,
        diverged=m["diverged"],
        config_hash=config_hash,
    )
    return row, net, history
