"""Exception types shared across the runtime."""


class CedrError(Exception):
    """Base class for all runtime errors."""


class InvalidArgument(CedrError, ValueError):
    pass


class ConfigError(CedrError, ValueError):
    pass


class CostModelError(ConfigError):
    pass


class DagParseError(CedrError, ValueError):
    """Raised for malformed DAG documents.

    ``line`` and ``col`` point at the offending position when the error comes
    from the JSON decoder; structural errors leave them as ``None``.
    """

    def __init__(self, msg, line=None, col=None):
        if line is not None:
            msg = f"{msg} (line {line}, column {col})"
        super().__init__(msg)
        self.line = line
        self.col = col


class InvariantViolation(CedrError, RuntimeError):
    pass


class UsageError(CedrError, RuntimeError):
    pass


class TaskFailed(CedrError, RuntimeError):
    pass


class RuntimeTerminated(CedrError, RuntimeError):
    pass


class RuntimeNotRunning(CedrError, ConnectionError):
    pass


class EndpointBusy(CedrError, OSError):
    pass
