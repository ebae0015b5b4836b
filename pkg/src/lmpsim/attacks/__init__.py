from .meter import SuspectSpace, center_attack, m3_attack, mmse_state, worst_meter_attack
from .topology import (
    Capabilities,
    TopologyEvaluator,
    feasible_targets,
    incidence_column,
    line_removal_attack,
    worst_topology_attack,
)

__all__ = [
    "Capabilities",
    "SuspectSpace",
    "TopologyEvaluator",
    "center_attack",
    "feasible_targets",
    "incidence_column",
    "line_removal_attack",
    "m3_attack",
    "mmse_state",
    "worst_meter_attack",
    "worst_topology_attack",
]
