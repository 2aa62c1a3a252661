"""Gated Kolmogorov-Arnold networks with forward connections and MDL-driven sparsification."""

from .config import RunConfig, load_config, preset
from .data import Problem, make_problem
from .evaluation import ReportRow, multistep_rmse, r_squared, rmse
from .gate import GateBank, GateParams, decisiveness, expected_open
from .network import GatedKan, KanShape, active_counts, backward, edge_counts, forward
from .objective import MdlConfig, complexity_loss, total_loss
from .spline import InvalidInputError, SplineActivation, SplineGrid
from .trainer import ConditionSpec, TrainConfig, evaluate_condition, train

__version__ = "0.1.0"

__all__ = [
    "ConditionSpec", "GateBank", "GateParams", "GatedKan", "InvalidInputError", "KanShape", "MdlConfig",
    "Problem", "ReportRow", "RunConfig", "SplineActivation", "SplineGrid", "TrainConfig", "active_counts",
    "backward", "complexity_loss", "decisiveness", "edge_counts", "evaluate_condition", "expected_open",
    "forward", "load_config", "make_problem", "multistep_rmse", "preset", "r_squared", "rmse",
    "total_loss", "train",
]
