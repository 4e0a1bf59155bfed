"""Runtime service: main loop, workers, IPC endpoint and execution logs."""

from .daemon import AppInstance, AppMode, AppState, Runtime, RunState
from .log import ExecutionLog

__all__ = ["AppInstance", "AppMode", "AppState", "ExecutionLog", "Runtime", "RunState"]
