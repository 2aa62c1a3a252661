"""Metrics, closed-loop rollouts and experiment report assembly."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .spline import InvalidInputError


class UndefinedMetricError(ValueError):
    pass


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    return pred, target


def r_squared(pred, target) -> float:
    """Pooled R^2: one residual/total sum-of-squares ratio over all outputs."""
    pred, target = _pair(pred, target)
    if pred.shape[0] < 2:
        raise UndefinedMetricError("R^2 needs at least two rows")
    ss_tot = float(((target - target.mean(axis=0)) ** 2).sum())
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 is undefined for a constant target")
    return 1.0 - float(((pred - target) ** 2).sum()) / ss_tot


def rmse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


@dataclass
class Rollout:
    states: np.ndarray  # (steps, d), excludes the initial state
    diverged: bool = False


def rollout(model: Callable[[np.ndarray], np.ndarray], x0, steps: int) -> Rollout:
    """Feed predictions back as inputs. Stops at the first non-finite prediction."""
    state = np.asarray(x0, dtype=float).reshape(1, -1)
    out = []
    for _ in range(steps):
        nxt = np.asarray(model(state), dtype=float).reshape(1, -1)
        if nxt.shape != state.shape:
            raise InvalidInputError("model output dimension must equal its input dimension")
        if not np.all(np.isfinite(nxt)):
            return Rollout(np.array(out).reshape(-1, state.shape[1]), diverged=True)
        out.append(nxt[0])
        state = nxt
    return Rollout(np.array(out).reshape(-1, state.shape[1]))


def safe_model(net) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a network so overflow during a rollout reads as divergence instead of raising."""
    from .network import NumericalError

    def f(x):
        try:
            return net(x)
        except NumericalError:
            return np.full((x.shape[0], net.shape.output_dim), np.nan)

    return f


def multistep_rmse(model, trajectory, horizon: int) -> tuple[float, bool]:
    """Closed-loop RMSE from ``trajectory[0]`` over ``horizon`` steps, plus the divergence flag.

    On divergence the RMSE covers the finite prefix only (NaN if it is empty).
    """
    trajectory = np.asarray(trajectory, dtype=float)
    if len(trajectory) <= horizon:
        raise InvalidInputError(f"trajectory of {len(trajectory)} states is too short for horizon {horizon}")
    r = rollout(model, trajectory[0], horizon)
    if len(r.states) == 0:
        return float("nan"), r.diverged
    return rmse(r.states, trajectory[1 : 1 + len(r.states)]), r.diverged


@dataclass
class ReportRow:
    problem: str
    condition: str
    beta: float | None
    r2: float
    rmse_1step: float
    rmse_multistep: float | None
    trunk_active: int
    fc_active: int | None
    sparsity_pct: float
    epochs: int
    seed: int
    status: str = "ok"
    diverged: bool = False
    config_hash: str = ""
    error: str = ""


CONDITION_LABELS = {"baseline": "Baseline", "fc": "FC Only", "gates": "Gates Only", "full": "Full (FC+Gates)"}


def _fmt(v, spec: str) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "--"
    return format(v, spec)


def format_table(rows: list[ReportRow]) -> str:
    """Aligned plain-text table, one row per experiment cell."""
    header = ["Problem", "Condition (Epochs)", "beta", "R2", "RMSE 1-step", "RMSE MS",
              "Trunk", "FC", "Sparsity (%)", "Seed", "Status"]
    body = []
    for r in rows:
        body.append([
            r.problem,
            f"{CONDITION_LABELS.get(r.condition, r.condition)} ({r.epochs})",
            _fmt(r.beta, "g"),
            _fmt(r.r2, ".4f"),
            _fmt(r.rmse_1step, ".4f"),
            _fmt(r.rmse_multistep, ".3f"),
            str(r.trunk_active),
            _fmt(r.fc_active, "d"),
            _fmt(r.sparsity_pct, ".1f"),
            str(r.seed),
            r.status + (" (diverged)" if r.diverged else ""),
        ])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)), "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def write_records(rows: list[ReportRow], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(asdict(r)) + "\n")


def read_records(path: str | Path) -> list[ReportRow]:
    names = {f.name for f in fields(ReportRow)}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                rows.append(ReportRow(**{k: v for k, v in d.items() if k in names}))
    return rows
