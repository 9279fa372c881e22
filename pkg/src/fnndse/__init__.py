"""Fuzzy-neural-network guided micro-architecture design space exploration."""

from .config import RunConfig, load_config
from .design_space import DesignSpace, MergeGroup, ParameterSpec, table1_space
from .fnn_core import FnnWeights, forward, backward, set_preference
from .harness import oracle, run_experiment
from .lf_model import ModelConfig, WorkloadProfile, lf_evaluate
from .rule_extract import extract, render_report
from .trainer import Problem, Schedule, hf_train, hf_transition, lf_train

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "DesignSpace", "MergeGroup", "ParameterSpec", "table1_space", "FnnWeights",
    "forward", "backward", "set_preference", "oracle", "run_experiment", "ModelConfig", "WorkloadProfile",
    "lf_evaluate", "extract", "render_report", "Problem", "Schedule", "hf_train", "hf_transition", "lf_train",
]
