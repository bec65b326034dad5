"""Simulation and verification of the dynamic elephant random walk."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Constant,
    LimitPlusPower,
    ModelParams,
    Regime,
    Table,
    classify,
    eval_sequence,
    limit_of,
)
from .sequences import SequenceTables, build_tables  # noqa: E402
from .simulator import (  # noqa: E402
    EnsembleSample,
    PathSample,
    simulate_ensemble,
    simulate_path,
    step_probability,
)

__all__ = [
    "Constant",
    "LimitPlusPower",
    "Table",
    "ModelParams",
    "Regime",
    "classify",
    "eval_sequence",
    "limit_of",
    "SequenceTables",
    "build_tables",
    "PathSample",
    "EnsembleSample",
    "simulate_path",
    "simulate_ensemble",
    "step_probability",
]
