"""Deterministic simulated cloud: virtual clock, providers, cost ledger."""

from .clock import ClockMode, VirtualClock
from .ledger import CostLedger, LedgerEntry
from .provider import (
    Cluster,
    DelayProfile,
    Event,
    SimCloud,
    SimProvider,
    instance_catalog,
    price_catalog,
)
from .workload import WorkloadProfile, parse_workload, workload_duration, workload_result

__all__ = [
    "ClockMode",
    "VirtualClock",
    "CostLedger",
    "LedgerEntry",
    "Cluster",
    "DelayProfile",
    "Event",
    "SimCloud",
    "SimProvider",
    "instance_catalog",
    "price_catalog",
    "WorkloadProfile",
    "parse_workload",
    "workload_duration",
    "workload_result",
]
