"""Runtime for heterogeneous task scheduling with API-based and DAG-based applications."""

from .model import CostModel, KernelId, KernelName, PeType, RuntimeConfig, SchedulerName, Task

__version__ = "0.1.0"

__all__ = ["CostModel", "KernelId", "KernelName", "PeType", "RuntimeConfig", "SchedulerName", "Task"]
