"""Benchmark problems: closed-form targets, chaotic systems, and two tabular datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .spline import InvalidInputError

STATIC = "static"
DYNAMICAL = "dynamical"


class GenerationError(RuntimeError):
    pass


@dataclass
class Problem:
    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    kind: str = STATIC
    # per-feature (mean, std) already applied to the inputs; None for raw inputs
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None
    # consecutive test states, for closed-loop evaluation of dynamical problems
    trajectory: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.train_x.shape[1]

    @property
    def output_dim(self) -> int:
        return self.train_y.shape[1]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for split in ("train", "test"):
            x, y = getattr(self, f"{split}_x"), getattr(self, f"{split}_y")
            header = [f"x{i}" for i in range(x.shape[1])] + [f"y{i}" for i in range(y.shape[1])]
            _write_csv(directory / f"{split}.csv", header, np.hstack([x, y]))
        if self.trajectory is not None:
            header = [f"s{i}" for i in range(self.trajectory.shape[1])]
            _write_csv(directory / "trajectory.csv", header, self.trajectory)

    @classmethod
    def load(cls, directory: str | Path, name: str | None = None, kind: str | None = None) -> Problem:
        """Read train/test CSVs written by :meth:`save` (columns x* then y*)."""
        directory = Path(directory)
        parts = {}
        for split in ("train", "test"):
            path = directory / f"{split}.csv"
            if not path.exists():
                raise FileNotFoundError(path)
            header, values = _read_numeric_csv(path)
            xcols = [i for i, h in enumerate(header) if h.startswith("x")]
            ycols = [i for i, h in enumerate(header) if h.startswith("y")]
            parts[split] = values[:, xcols], values[:, ycols]
        traj = None
        if (directory / "trajectory.csv").exists():
            traj = _read_numeric_csv(directory / "trajectory.csv")[1]
        kind = kind or (DYNAMICAL if traj is not None else STATIC)
        return cls(name or directory.name, *parts["train"], *parts["test"], kind=kind, trajectory=traj)


def _write_csv(path: Path, header: list[str], values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def _read_numeric_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric cell ({exc})") from exc
    if values.ndim != 2 or values.shape[1] != len(header):
        raise InvalidInputError(f"{path}: ragged rows")
    return header, values


# -- closed-form targets ------------------------------------------------------

PI = math.pi

SYMBOLIC: dict[str, tuple[Callable[..., np.ndarray], list[tuple[float, float]]]] = {
    "anecdote": (lambda x, y: np.sin(x + y**2), [(-2.0, 2.0)] * 2),
    "F1": (lambda x: x**3 + x**2 + x, [(-1.0, 1.0)]),
    "F2": (lambda x: x**4 + x**3 + x**2 + x, [(-1.0, 1.0)]),
    "F3": (lambda x: x**5 + x**4 + x**3 + x**2 + x, [(-1.0, 1.0)]),
    "F4": (lambda x: x**6 + x**5 + x**4 + x**3 + x**2 + x, [(-1.0, 1.0)]),
    "F5": (lambda x: np.sin(x**2) * np.cos(x) - 1.0, [(-1.0, 1.0)]),
    "F6": (lambda x: np.sin(x) + np.sin(x + x**2), [(-1.0, 1.0)]),
    "F7": (lambda x: np.log(x + 1.0) + np.log(x**2 + 1.0), [(0.0, 2.0)]),
    "F8": (lambda x: np.sqrt(x), [(0.0, 4.0)]),
    "F9": (lambda x, y: np.sin(x) + np.sin(y**2), [(-1.0, 1.0)] * 2),
    "F10": (lambda x, y: 2.0 * np.sin(x) * np.cos(y), [(-PI, PI)] * 2),
}


def symbolic_target(expr_id: str, x: np.ndarray) -> np.ndarray:
    fn, _ = _symbolic(expr_id)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return fn(*x.T)[:, None]


def _symbolic(expr_id: str):
    key = expr_id.upper() if expr_id.upper().startswith("F") else expr_id.lower()
    if key not in SYMBOLIC:
        raise InvalidInputError(f"unknown expression id {expr_id!r}; choose from {sorted(SYMBOLIC)}")
    return SYMBOLIC[key]


def gen_symbolic(expr_id: str, n_train: int = 1024, n_test: int = 256, seed: int = 0) -> Problem:
    fn, domain = _symbolic(expr_id)
    rng = np.random.default_rng(seed)
    lo, hi = np.array(domain).T

    def draw(n):
        x = rng.uniform(lo, hi, size=(n, len(domain)))
        return x, fn(*x.T)[:, None]

    train_x, train_y = draw(n_train)
    test_x, test_y = draw(n_test)
    return Problem(expr_id, train_x, train_y, test_x, test_y, meta={"domain": domain, "seed": seed})


# -- dynamical systems ----------------------------------------------------------

@dataclass
class DynamicalSpec:
    """Trajectory recipe. ``transient_discard`` and ``length`` count sampled states."""

    system: str = "ikeda"
    params: dict = field(default_factory=dict)
    initial_state: tuple[float, ...] | None = None
    transient_discard: int | None = None
    n_train: int = 5000
    n_test: int = 1000
    h: float = 0.01
    dt: float = 0.1

    def __post_init__(self):
        defaults = DYNAMICAL_DEFAULTS.get(self.system)
        if defaults is None:
            raise InvalidInputError(f"unknown system {self.system!r}")
        self.params = {**defaults["params"], **self.params}
        if self.initial_state is None:
            self.initial_state = defaults["initial_state"]
        if self.transient_discard is None:
            self.transient_discard = defaults["transient_discard"]
        if not all(math.isfinite(v) for v in self.params.values()):
            raise InvalidInputError("non-finite system parameters")
        if self.h <= 0 or self.dt <= 0:
            raise InvalidInputError("step sizes must be positive")

    @property
    def length(self) -> int:
        return self.n_train + self.n_test + 1


ECOSYSTEM_PARAMS = {"K": 0.98, "x_p": 0.4, "y_p": 2.009, "x_q": 0.08, "y_q": 2.876, "N_0": 0.16129, "P_0": 0.5}

DYNAMICAL_DEFAULTS = {
    "ikeda": {"params": {"mu": 0.9}, "initial_state": (0.1, 0.1), "transient_discard": 1000},
    # 100 time units at dt = 0.1
    "ecosystem": {"params": ECOSYSTEM_PARAMS, "initial_state": (0.7, 0.2, 0.8), "transient_discard": 1000},
}


def ikeda_step(state: np.ndarray, mu: float = 0.9) -> np.ndarray:
    """One application of the Ikeda map; ``state`` is (..., 2)."""
    state = np.asarray(state, dtype=float)
    x, y = state[..., 0], state[..., 1]
    phi = 0.4 - 6.0 / (1.0 + x**2 + y**2)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([1.0 + mu * (x * c - y * s), mu * (x * s + y * c)], axis=-1)


def ecosystem_rhs(state: np.ndarray, p: dict = ECOSYSTEM_PARAMS) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    N, P, Q = state[..., 0], state[..., 1], state[..., 2]
    graze = N / (N + p["N_0"])
    prey = P / (P + p["P_0"])
    dN = N * (1.0 - N / p["K"]) - p["x_p"] * p["y_p"] * P * graze
    dP = p["x_p"] * P * (p["y_p"] * graze - 1.0) - p["x_q"] * p["y_q"] * Q * prey
    dQ = p["x_q"] * Q * (p["y_q"] * prey - 1.0)
    return np.stack([dN, dP, dQ], axis=-1)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], state: np.ndarray, h: float) -> np.ndarray:
    k1 = f(state)
    k2 = f(state + 0.5 * h * k1)
    k3 = f(state + 0.5 * h * k2)
    k4 = f(state + h * k3)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def ecosystem_flow(state: np.ndarray, spec: DynamicalSpec) -> np.ndarray:
    """Advance by one sampling interval ``dt`` using RK4 sub-steps of size ``h``."""
    n_sub = max(1, round(spec.dt / spec.h))
    h = spec.dt / n_sub
    for _ in range(n_sub):
        state = rk4_step(lambda s: ecosystem_rhs(s, spec.params), state, h)
    return state


def system_stepper(spec: DynamicalSpec) -> Callable[[np.ndarray], np.ndarray]:
    if spec.system == "ikeda":
        return lambda s: ikeda_step(s, spec.params["mu"])
    return lambda s: ecosystem_flow(s, spec)


def _trajectory(spec: DynamicalSpec, check: Callable[[np.ndarray, int], None]) -> np.ndarray:
    step = system_stepper(spec)
    state = np.array(spec.initial_state, dtype=float)
    states = []
    for n in range(spec.transient_discard + spec.length):
        if n >= spec.transient_discard:
            states.append(state)
        state = step(state)
        check(state, n)
    return np.array(states)


def _pairs_problem(name: str, states: np.ndarray, spec: DynamicalSpec) -> Problem:
    n = spec.n_train
    return Problem(
        name,
        states[:n], states[1 : n + 1],
        states[n:-1], states[n + 1 :],
        kind=DYNAMICAL,
        trajectory=states[n:],
        meta={"system": spec.system, "params": dict(spec.params), "initial_state": list(spec.initial_state)},
    )


def gen_ikeda(spec: DynamicalSpec | None = None) -> Problem:
    spec = spec or DynamicalSpec("ikeda")

    def check(state, n):
        if not np.all(np.abs(state) <= 1e6):
            raise GenerationError(f"Ikeda orbit diverged at iteration {n}")

    return _pairs_problem("ikeda", _trajectory(spec, check), spec)


def gen_ecosystem(spec: DynamicalSpec | None = None) -> Problem:
    spec = spec or DynamicalSpec("ecosystem")
    if min(spec.initial_state) < 0:
        raise InvalidInputError("populations must be nonnegative")

    def check(state, n):
        if np.any(state < -1e-9) or not np.all(np.isfinite(state)):
            raise GenerationError(f"negative population at sample {n}; reduce the step size h")

    return _pairs_problem("ecosystem", _trajectory(spec, check), spec)


# -- tabular datasets ------------------------------------------------------------

def standardize(train: np.ndarray, test: np.ndarray):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (train - mean) / std, (test - mean) / std, mean, std


def _normalize_name(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


CONCRETE_RAW = ["cement", "slag", "fly_ash", "water", "superplasticizer", "coarse_agg", "fine_agg", "age"]
CONCRETE_FEATURES = CONCRETE_RAW + ["water_cement", "water_binder", "binder", "aggregate", "log_age"]
_CONCRETE_KEYS = {
    "target": ("strength", "mpa"),
    "cement": ("cement",),
    "slag": ("slag",),
    "fly_ash": ("fly",),
    "water": ("water",),
    "superplasticizer": ("plasticizer",),
    "coarse_agg": ("coarse",),
    "fine_agg": ("fine",),
    "age": ("age",),
}


def _match_concrete_columns(header: list[str]) -> dict[str, int]:
    found: dict[str, int] = {}
    for col, raw in enumerate(header):
        name = _normalize_name(raw)
        for key, words in _CONCRETE_KEYS.items():
            if key not in found and any(w in name for w in words):
                found[key] = col
                break
    missing = [k for k in _CONCRETE_KEYS if k not in found]
    if missing:
        raise InvalidInputError(f"concrete CSV is missing columns: {missing}")
    return found


def concrete_features(raw: np.ndarray) -> np.ndarray:
    """Append water/cement, water/binder, binder, total aggregate and log(age + 1)."""
    cement, slag, fly, water = raw[:, 0], raw[:, 1], raw[:, 2], raw[:, 3]
    binder = cement + slag + fly
    derived = np.column_stack([
        water / cement,
        water / binder,
        binder,
        raw[:, 5] + raw[:, 6],
        np.log(raw[:, 7] + 1.0),
    ])
    return np.hstack([raw, derived])


def load_concrete(csv_path: str | Path, seed: int = 0) -> Problem:
    header, values = _read_numeric_csv(csv_path)
    cols = _match_concrete_columns(header)
    raw = values[:, [cols[k] for k in CONCRETE_RAW]]
    y = values[:, [cols["target"]]]
    binder = raw[:, 0] + raw[:, 1] + raw[:, 2]
    keep = (raw[:, 0] > 0) & (binder > 0)
    rejected = int((~keep).sum())
    X = concrete_features(raw[keep])
    y = y[keep]
    n = len(X)
    if n < 5:
        raise InvalidInputError("too few usable concrete rows")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = (4 * n) // 5
    tr, te = perm[:n_train], perm[n_train:]
    train_x, test_x, mean, std = standardize(X[tr], X[te])
    return Problem("concrete", train_x, y[tr], test_x, y[te], input_mean=mean, input_std=std,
                   meta={"rejected_rows": rejected, "features": CONCRETE_FEATURES, "seed": seed})


SUPERCONDUCTOR_FEATURES = ["number_of_elements", "wtd_mean_Valence", "wtd_mean_fie",
                           "mean_ElectronAffinity", "entropy_Valence"]
SUPERCONDUCTOR_TARGET = "critical_temp"


def load_superconductor(csv_path: str | Path, n_train: int = 1000, n_test: int = 1000, seed: int = 0) -> Problem:
    header, values = _read_numeric_csv(csv_path)
    lookup = {h.lower(): i for i, h in enumerate(header)}
    wanted = SUPERCONDUCTOR_FEATURES + [SUPERCONDUCTOR_TARGET]
    missing = [c for c in wanted if c.lower() not in lookup]
    if missing:
        raise InvalidInputError(f"superconductor CSV is missing columns: {missing}")
    if len(values) < n_train + n_test:
        raise InvalidInputError(f"need {n_train + n_test} rows, file has {len(values)}")
    X = values[:, [lookup[c.lower()] for c in SUPERCONDUCTOR_FEATURES]]
    y = values[:, [lookup[SUPERCONDUCTOR_TARGET.lower()]]]
    perm = np.random.default_rng(seed).permutation(len(values))
    tr, te = perm[:n_train], perm[n_train : n_train + n_test]
    train_x, test_x, mean, std = standardize(X[tr], X[te])
    return Problem("superconductor", train_x, y[tr], test_x, y[te], input_mean=mean, input_std=std,
                   meta={"features": SUPERCONDUCTOR_FEATURES, "seed": seed})


PROBLEMS = ["anecdote"] + [f"nguyen-f{i}" for i in range(1, 11)] + ["ikeda", "ecosystem", "concrete", "superconductor"]


def make_problem(name: str, seed: int = 0, csv_path: str | Path | None = None, **params) -> Problem:
    """Build a problem by its CLI identifier."""
    name = name.lower()
    if name == "anecdote":
        return gen_symbolic("anecdote", seed=seed, **params)
    if name.startswith("nguyen-f"):
        prob = gen_symbolic(name.split("-")[1].upper(), seed=seed, **params)
        prob.name = name
        return prob
    if name in ("ikeda", "ecosystem"):
        spec = DynamicalSpec(name, **params)
        return gen_ikeda(spec) if name == "ikeda" else gen_ecosystem(spec)
    if name in ("concrete", "superconductor"):
        if csv_path is None:
            raise InvalidInputError(f"{name} needs a CSV path")
        if not Path(csv_path).exists():
            raise FileNotFoundError(csv_path)
        loader = load_concrete if name == "concrete" else load_superconductor
        return loader(csv_path, seed=seed, **params)
    raise InvalidInputError(f"unknown problem {name!r}; choose from {PROBLEMS}")
