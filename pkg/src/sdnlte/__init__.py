"""SDN-controlled LTE simulator: joint access/backhaul handover policies,
controller-side flow admission, routing and metering."""

from .config import ExperimentConfig, SimConfig, parse_config
from .engine import MetricsRecord, RunResult, compare_local_global, run

__all__ = [
    "ExperimentConfig",
    "SimConfig",
    "parse_config",
    "run",
    "compare_local_global",
    "MetricsRecord",
    "RunResult",
]
