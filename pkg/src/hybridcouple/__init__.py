"""Coupling physics-based and data-driven discrete-time models into one
analysable state-space system, with a PV/battery microgrid and a
neural-network data-center load as the reference case study."""

from .coupling import (CouplingParams, CouplingTerm, CoupledSystem, LinearH, TabulatedH, compose,
                       coupled_step, eval_H, parse_term, validate)
from .errors import ConfigError, DivergenceError, NumericalError, UsageError
from .microgrid import MicrogridParams, build_microgrid
from .model import (ContinuousModel, Signal, StateVector, SubsystemModel, discretize_euler,
                    eval_step)
from .scenario import Scenario, load_scenario
from .wann import DEFAULT_WANN, DelayHistory, WannParams, narma_eval, realize_state_space

__version__ = "0.1.0"

__all__ = [
    "CouplingParams", "CouplingTerm", "CoupledSystem", "LinearH", "TabulatedH", "compose",
    "coupled_step", "eval_H", "parse_term", "validate", "ConfigError", "DivergenceError",
    "NumericalError", "UsageError", "MicrogridParams", "build_microgrid", "ContinuousModel",
    "Signal", "StateVector", "SubsystemModel", "discretize_euler", "eval_step", "Scenario",
    "load_scenario", "DEFAULT_WANN", "DelayHistory", "WannParams", "narma_eval",
    "realize_state_space",
]
