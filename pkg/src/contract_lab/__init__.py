"""Contextual learning in linear-contract principal-agent games."""

from .game import (
    Action,
    GameRound,
    ResolvedInstance,
    Setting,
    best_response,
    critical_contracts,
    implementable_interval,
    min_pay_contract,
    opt_profit,
    opt_profit_from_action,
    resolve,
)
from .adversaries import Environment, make_environment
from .codes import SphericalCode, generate_circle, generate_greedy
from .config import RunConfig
from .geometry import ConvexBody
from .harness import Trajectory, emit_csv, emit_svg, pessimistic_benchmark, run, scaling_experiment
from .learners import Learner, make_learner
from .volumes import Polygon2D, VolumeVector, steiner_fit

__all__ = [
    "Action",
    "ConvexBody",
    "Environment",
    "Learner",
    "Polygon2D",
    "RunConfig",
    "SphericalCode",
    "Trajectory",
    "VolumeVector",
    "emit_csv",
    "emit_svg",
    "generate_circle",
    "generate_greedy",
    "make_environment",
    "make_learner",
    "pessimistic_benchmark",
    "run",
    "scaling_experiment",
    "steiner_fit",
    "GameRound",
    "ResolvedInstance",
    "Setting",
    "best_response",
    "critical_contracts",
    "implementable_interval",
    "min_pay_contract",
    "opt_profit",
    "opt_profit_from_action",
    "resolve",
]

__version__ = "0.1.0"
