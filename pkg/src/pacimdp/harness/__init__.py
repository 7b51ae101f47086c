"""Orchestration: planning loop, simulation, benchmark models, configuration and outputs."""
from .models import MODELS, builtin_model
from .output import emit_results
from .planning import RunReport, monte_carlo, offline_plan, online_control
from .problem import ProblemSpec, load_config, spec_from_dict
from .samplers import NoiseSampler, make_rng

__all__ = [
    "MODELS", "NoiseSampler", "ProblemSpec", "RunReport", "builtin_model", "emit_results",
    "load_config", "make_rng", "monte_carlo", "offline_plan", "online_control", "spec_from_dict",
]
