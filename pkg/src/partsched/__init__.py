"""Simulator and analysis toolkit for a temporal-partition, mixed-criticality scheduler."""
from .analysis import availability_curve, cap_audit, emergency_latencies, export_gantt, jitter_stats, response_time
from .cluster import run_cluster, scatter_variant
from .frames import generate_major_frame, validate_major_frame
from .model import MS, S, US, Criticality, MajorFrame, MinorFrame, PartitionSpec, TraceLog
from .scenario import Scenario, load, loads
from .scheduler import Scheduler
from .sim import run_node

__version__ = "0.1.0"

__all__ = [
    "Criticality", "MS", "MajorFrame", "MinorFrame", "PartitionSpec", "S", "Scenario", "Scheduler", "TraceLog",
    "US", "availability_curve", "cap_audit", "emergency_latencies", "export_gantt", "generate_major_frame",
    "jitter_stats", "load", "loads", "response_time", "run_cluster", "run_node", "scatter_variant",
    "validate_major_frame",
]
