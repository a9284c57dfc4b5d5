"""Joint alignment of several networks by hierarchical multi-marginal optimal transport."""

__version__ = "0.1.0"

from .config import RunConfig
from .errors import (CapacityError, ConfigurationError, FormatError, GenerationError, HotError,
                     NumericalError, SolverInstabilityError, StageError, ValidationError)
from .graph import Graph, MultiNetworkProblem, generate_noisy_er, load_graph
from .metrics import EvalReport, compose_pairwise, evaluate, split_folds
from .pipeline import AlignmentResult, hot_align, read_alignment, write_alignment

__all__ = [
    "AlignmentResult", "CapacityError", "ConfigurationError", "EvalReport", "FormatError",
    "GenerationError", "Graph", "HotError", "MultiNetworkProblem", "NumericalError", "RunConfig",
    "SolverInstabilityError", "StageError", "ValidationError", "compose_pairwise", "evaluate",
    "generate_noisy_er", "hot_align", "load_graph", "read_alignment", "split_folds", "write_alignment",
]
