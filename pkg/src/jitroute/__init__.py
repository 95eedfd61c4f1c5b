"""Just-in-time configuration routing and stage scheduling for agentic workflows."""
from .baselines import PolicyKind
from .metrics import RunReport, SweepResult, compare_policies, summarize, sweep
from .predictor import NoisyRouter, OracleRouter, PredictorBudget, predict_viable_set
from .scenario import Scenario, load_scenario, parse_scenario
from .scheduler import beam_schedule, brute_force_schedule, greedy_schedule
from .sim import RunTrace, run
from .workflow import ConfigSpace, ModelCatalog, WorkflowGraph, build_graph

__version__ = "0.1.0"

__all__ = [
    "ConfigSpace", "ModelCatalog", "NoisyRouter", "OracleRouter", "PolicyKind", "PredictorBudget",
    "RunReport", "RunTrace", "Scenario", "SweepResult", "WorkflowGraph", "beam_schedule",
    "brute_force_schedule", "build_graph", "compare_policies", "greedy_schedule", "load_scenario",
    "parse_scenario", "predict_viable_set", "run", "summarize", "sweep",
]
