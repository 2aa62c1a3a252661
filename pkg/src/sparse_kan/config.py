"""Run configuration: per-problem presets, TOML loading and the provenance hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli

from .data import PROBLEMS, SYMBOLIC
from .network import INIT_SCHEMES
from .trainer import TrainConfig

CONDITIONS = ("baseline", "fc", "gates", "full")
GATED = ("gates", "full")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str
    widths: list[int]
    conditions: list[str] = field(default_factory=lambda: list(CONDITIONS))
    betas: list[float] = field(default_factory=lambda: [0.01, 0.1])
    gate_init_logit: float = -1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    problem_params: dict = field(default_factory=dict)
    data_seed: int = 0
    csv: str | None = None
    data_dir: str | None = None
    init: str = "kan"
    horizon: int | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str | None = None

    def validate(self) -> RunConfig:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if not self.conditions:
            raise ConfigError("condition list is empty")
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad:
            raise ConfigError(f"unknown conditions {bad}; choose from {list(CONDITIONS)}")
        if any(c in GATED for c in self.conditions) and not self.betas:
            raise ConfigError("gated conditions need at least one beta")
        if any(b < 0 for b in self.betas):
            raise ConfigError("beta must be nonnegative")
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ConfigError(f"invalid widths {self.widths}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.init not in INIT_SCHEMES:
            raise ConfigError(f"unknown init {self.init!r}; choose from {list(INIT_SCHEMES)}")
        for path in (self.csv, self.data_dir):
            if path and not Path(path).exists():
                raise ConfigError(f"path does not exist: {path}")
        if self.problem in ("concrete", "superconductor") and not (self.csv or self.data_dir):
            raise ConfigError(f"{self.problem} needs problem.csv (see scripts/fetch_data.py)")
        return self

    def cells(self) -> list[tuple[str, float | None, int]]:
        """Every (condition, beta, seed) run; ungated conditions ignore beta."""
        out = []
        for cond in self.conditions:
            betas = self.betas if cond in GATED else [None]
            for beta in betas:
                for seed in self.seeds:
                    out.append((cond, beta, seed))
        return out

    def hash(self) -> str:
        """Digest of everything that determines a cell's result except its seed and location."""
        d = asdict(self)
        for k in ("seeds", "out_dir"):
            d.pop(k)
        d["train"].pop("seed")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def preset(problem: str) -> RunConfig:
    """Recipe used for each benchmark family in the reference experiments."""
    if problem == "anecdote":
        return RunConfig(problem, [2, 2, 1], betas=[0.2],
                         train=TrainConfig(epochs=3000, batch_size=64, warmup_epochs=0, fc_warmup_epochs=0))
    if problem.startswith("nguyen-f") and problem.split("-")[1].upper() in SYMBOLIC:
        n = len(SYMBOLIC[problem.split("-")[1].upper()][1])
        return RunConfig(problem, [n, 5, 5, 5, 1], betas=[0.01, 0.1],
                         train=TrainConfig(epochs=10000, batch_size=128, early_stop=True))
    if problem == "ikeda":
        return RunConfig(problem, [2, 4, 4, 4, 2], betas=[0.0, 0.01, 0.1], gate_init_logit=-2.0, horizon=500,
                         train=TrainConfig(epochs=4000, grid_update_count=0))
    if problem == "ecosystem":
        return RunConfig(problem, [3, 3, 3, 3], betas=[0.0, 0.01, 0.1], gate_init_logit=-2.0, horizon=500,
                         train=TrainConfig(epochs=10000, grid_update_count=0))
    if problem == "concrete":
        return RunConfig(problem, [13, 13, 13, 1], betas=[0.01, 0.1],
                         train=TrainConfig(epochs=5000, batch_size=64, warmup_epochs=500))
    if problem == "superconductor":
        return RunConfig(problem, [5, 5, 5, 5, 1], betas=[0.01, 0.1],
                         train=TrainConfig(epochs=5000, batch_size=64, warmup_epochs=500))
    raise ConfigError(f"unknown problem {problem!r}; choose from {PROBLEMS}")


_SECTIONS = {
    "problem": {"name", "params", "seed", "csv", "data_dir"},
    "arch": {"widths", "init"},
    "cond": {"conditions", "betas", "gate_init_logit"},
    "train": {f.name for f in fields(TrainConfig)} - {"seed"},
    "eval": {"horizon"},
    "out": {"dir"},
}


def from_mapping(doc: dict) -> RunConfig:
    """Overlay a parsed config document on the preset of its problem."""
    unknown = set(doc) - set(_SECTIONS) - {"seeds"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    for sec, keys in _SECTIONS.items():
        extra = set(doc.get(sec, {})) - keys
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
    prob = doc.get("problem", {})
    if "name" not in prob:
        raise ConfigError("problem.name is required")
    cfg = preset(prob["name"])

    def resolve(p):
        return str(Path(p).expanduser()) if p else None

    arch, cond, ev = doc.get("arch", {}), doc.get("cond", {}), doc.get("eval", {})
    try:
        # patience is derived from the epoch budget unless given explicitly
        train = replace(cfg.train, **{"patience": None, **doc.get("train", {})})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [train] section: {exc}") from exc
    cfg = replace(
        cfg,
        problem_params=dict(prob.get("params", {})),
        data_seed=int(prob.get("seed", 0)),
        csv=resolve(prob.get("csv")),
        data_dir=resolve(prob.get("data_dir")),
        widths=[int(w) for w in arch.get("widths", cfg.widths)],
        init=arch.get("init", cfg.init),
        conditions=list(cond.get("conditions", cfg.conditions)),
        betas=[float(b) for b in cond.get("betas", cfg.betas)],
        gate_init_logit=float(cond.get("gate_init_logit", cfg.gate_init_logit)),
        train=train,
        horizon=ev.get("horizon", cfg.horizon) or None,
        seeds=[int(s) for s in doc.get("seeds", cfg.seeds)],
        out_dir=resolve(doc.get("out", {}).get("dir")),
    )
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_mapping(doc)
