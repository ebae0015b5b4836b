"""Real-time LMP sensitivity to corrupted meter and breaker data.

Quick start:

    from lmpsim import load_case, build_dc_model, estimate, solve_expost_lmp

    case, meters = load_case("ieee14")
    model = build_dc_model(case, meters)
"""

from .cases import build_measurement_model, load_case, parse_case, t3_case
from .estimation import DetectorConfig, detector_threshold, estimate, topo_estimate
from .network import apply_topology, branch_flows, build_dc_model, is_observable
from .pricing import price_metrics, solve_expost_lmp
from .regions import boundary_margin, candidate_patterns, region_of_state, region_witness

__all__ = [
    "DetectorConfig",
    "apply_topology",
    "boundary_margin",
    "branch_flows",
    "build_dc_model",
    "build_measurement_model",
    "candidate_patterns",
    "detector_threshold",
    "estimate",
    "is_observable",
    "load_case",
    "parse_case",
    "price_metrics",
    "region_of_state",
    "region_witness",
    "solve_expost_lmp",
    "t3_case",
    "topo_estimate",
]

__version__ = "0.1.0"
