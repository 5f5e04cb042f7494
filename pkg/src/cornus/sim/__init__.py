from .engine import (ConfigError, CrashSpec, FaultPlan, NetworkModel, Node, Simulator, StorageOutage, Timeouts,
                     storage_write_latency)
from .run import build, describe_storage, run

__all__ = ["ConfigError", "CrashSpec", "FaultPlan", "NetworkModel", "Node", "Simulator", "StorageOutage",
           "Timeouts", "build", "describe_storage", "run", "storage_write_latency"]
