"""Joint service migration and BS handover for multi-cell mobile edge computing."""
from .bandwidth import BandwidthInstance, recover_bw_integer, solve_bw_relaxed
from .hotspot import HotspotConfig, HotspotInstance, solve_hotspot
from .model import Assignment, FeasibilityError, Instance, SolveReport, evaluate
from .pipeline import solve_jmh
from .recovery import recover_integer, round_loads
from .relaxed import SolverConfig, solve_relaxed
from .scenario import ScenarioConfig, generate

__all__ = [
    "Assignment", "BandwidthInstance", "FeasibilityError", "HotspotConfig", "HotspotInstance", "Instance",
    "ScenarioConfig", "SolveReport", "SolverConfig", "evaluate", "generate", "recover_bw_integer",
    "recover_integer", "round_loads", "solve_bw_relaxed", "solve_hotspot", "solve_jmh", "solve_relaxed",
]
