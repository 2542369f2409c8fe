"""Lower transition operators and ergodicity of imprecise continuous-time Markov chains."""

from .ergodicity import decide_ergodic, limit_lower_expectation
from .gambles import Gamble, StateSpace
from .modelio import parse_model, serialize_model
from .rates import IntervalModel, LowerRateModel, PreciseModel, RowSetModel, lower_apply, upper_apply
from .semigroup import TransitionSolver

__all__ = [
    "Gamble",
    "IntervalModel",
    "LowerRateModel",
    "PreciseModel",
    "RowSetModel",
    "StateSpace",
    "TransitionSolver",
    "decide_ergodic",
    "limit_lower_expectation",
    "lower_apply",
    "parse_model",
    "serialize_model",
    "upper_apply",
]
