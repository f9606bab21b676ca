"""Time-dependent distance oracles over piecewise-linear arc costs."""

from .instance import GeneratorConfig, TdInstance, generate
from .pwl import PwlFunction
from .query import QueryResult, fca, hqa, rqa, rqa_plus, stretch_constants
from .store import OracleStore, load_store, save_store
from .tuning import MetricProfile, TuningParams, estimate_profile

__all__ = [
    "GeneratorConfig",
    "MetricProfile",
    "OracleStore",
    "PwlFunction",
    "QueryResult",
    "TdInstance",
    "TuningParams",
    "estimate_profile",
    "fca",
    "generate",
    "hqa",
    "load_store",
    "rqa",
    "rqa_plus",
    "save_store",
    "stretch_constants",
]
