"""Energy- and thermal-aware data-centre simulation and consolidation policies."""

from .domain import (
    DataCentreState,
    DemandSample,
    HostSpec,
    HostState,
    Plan,
    VmSpec,
    capacity_mhz,
    clone_twin,
    validate,
)
from .engine import EngineConfig, IntervalMetrics, SimSetup, run
from .metrics import RunSummary, compare, summarize
from .models import Models, build_models
from .policies import Criterion, NoOpPolicy, Policy, PolicyConfig
from .workload import DemandSeries, demand_at, parse_trace, serialize_trace, synth_workload

__version__ = "0.1.0"

__all__ = [
    "Criterion", "DataCentreState", "DemandSample", "DemandSeries", "EngineConfig", "HostSpec",
    "HostState", "IntervalMetrics", "Models", "NoOpPolicy", "Plan", "Policy", "PolicyConfig",
    "RunSummary", "SimSetup", "VmSpec", "build_models", "capacity_mhz", "clone_twin", "compare",
    "demand_at", "parse_trace", "run", "serialize_trace", "summarize", "synth_workload", "validate",
]
