"""Decentralized multi-robot target coverage: greedy baselines and a GNN imitation policy."""

from .world import (
    MotionPrimitive,
    Scenario,
    ScenarioParams,
    build_comm_graph,
    coverage_region,
    covered_targets,
    generate_scenario,
    marginal_gain,
    objective,
    observe,
)
from .selectors import exhaustive_opt, greedy_central, greedy_decentralized, random_assign

__version__ = "0.1.0"
