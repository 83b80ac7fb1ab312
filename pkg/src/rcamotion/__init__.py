"""Retina-inspired motion maps for infrared sequences, plus evaluation tools."""

from .errors import (DimensionError, EvaluationError, FormatError, GenerationError,
                     InvariantError, ParameterError, RcaError, SequenceError)
from .grid import LayerTrace, RcaParams, RcaState, grid_new, params_default, state_reset
from .rca import RcaEngine, process_sequence, step

__all__ = [
    "DimensionError", "EvaluationError", "FormatError", "GenerationError", "InvariantError",
    "ParameterError", "RcaError", "SequenceError", "LayerTrace", "RcaParams", "RcaState",
    "grid_new", "params_default", "state_reset", "RcaEngine", "process_sequence", "step",
]

__version__ = "0.1.0"
