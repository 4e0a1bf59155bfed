"""Domain types shared by the scheduler, the kernels and the runtime.

Timestamps are ``time.monotonic_ns()`` values; durations are integer
nanoseconds so that scheduling decisions compare exactly.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .errors import ConfigError, CostModelError, InvalidArgument, InvariantViolation

COST_MODEL_VERSION = "cedr-cost-model v1"


class KernelName(str, enum.Enum):
    FFT = "FFT"
    IFFT = "IFFT"
    GEMM = "GEMM"
    CONV2D = "CONV2D"
    ZIP = "ZIP"
    # Opaque application code (non-kernel regions of DAG-mode applications).
    FUNC = "FUNC"

    def __str__(self):
        return self.value


class PeType(str, enum.Enum):
    CPU = "CPU"
    FFT_ACC = "FFT_ACC"
    MMULT_ACC = "MMULT_ACC"
    GPU_ACC = "GPU_ACC"

    def __str__(self):
        return self.value

    @property
    def is_accelerator(self) -> bool:
        return self is not PeType.CPU


SUPPORT: dict[PeType, frozenset[KernelName]] = {
    PeType.CPU: frozenset(KernelName),
    PeType.FFT_ACC: frozenset({KernelName.FFT, KernelName.IFFT}),
    PeType.MMULT_ACC: frozenset({KernelName.GEMM}),
    PeType.GPU_ACC: frozenset({KernelName.FFT, KernelName.IFFT, KernelName.ZIP}),
}


def supported_types(kernel: KernelName) -> frozenset[PeType]:
    return frozenset(t for t, ks in SUPPORT.items() if kernel in ks)


def next_pow2(n: int) -> int:
    if n < 1:
        raise InvalidArgument(f"size must be positive, got {n}")
    return 1 << (n - 1).bit_length()


def is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class KernelId:
    name: KernelName
    size: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "name", KernelName(self.name))
        size = tuple(int(s) for s in self.size)
        if not size or any(s <= 0 for s in size):
            raise InvalidArgument(f"size_key must be positive integers, got {self.size}")
        object.__setattr__(self, "size", size)

    @property
    def bucket(self) -> tuple[int, ...]:
        return tuple(next_pow2(s) for s in self.size)

    def __str__(self):
        return f"{self.name.value}[{format_size(self.size)}]"


def format_size(size: Iterable[int]) -> str:
    return "x".join(str(s) for s in size)


def parse_size(text: str) -> tuple[int, ...]:
    try:
        size = tuple(int(p) for p in str(text).split("x"))
    except ValueError:
        raise InvalidArgument(f"bad size descriptor {text!r}") from None
    if not size or any(s <= 0 for s in size):
        raise InvalidArgument(f"bad size descriptor {text!r}")
    return size


@dataclass
class ProcessingElement:
    id: int
    pe_type: PeType
    busy_until: int = 0
    assigned_count: int = 0

    def supports(self, kernel: KernelName) -> bool:
        return kernel in SUPPORT[self.pe_type]

    def advance(self, t: int):
        # busy_until is monotone for the lifetime of a runtime instance
        if t > self.busy_until:
            self.busy_until = t


class TaskState(str, enum.Enum):
    CREATED = "CREATED"
    READY = "READY"
    RUNNING = "RUNNING"
    COMPLETE = "COMPLETE"
    ERROR = "ERROR"


_TRANSITIONS = {
    TaskState.CREATED: {TaskState.READY},
    TaskState.READY: {TaskState.RUNNING, TaskState.ERROR},
    TaskState.RUNNING: {TaskState.COMPLETE, TaskState.ERROR},
    TaskState.COMPLETE: set(),
    TaskState.ERROR: set(),
}


class TaskIdSource:
    """Strictly increasing task ids, safe under concurrent producers."""

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            return next(self._counter)


@dataclass(eq=False)
class Task:
    task_id: int
    app_id: int
    kernel: KernelId
    args: dict[str, Any]
    supported: frozenset[PeType] = None
    state: TaskState = TaskState.CREATED
    enqueue_ts: Optional[int] = None
    assign_ts: Optional[int] = None
    dispatch_ts: Optional[int] = None
    complete_ts: Optional[int] = None
    assigned_pe: Optional[int] = None
    error: Optional[str] = None
    # HEFT_RT priority supplied by the DAG engine (upward rank), if any
    rank_hint: Optional[int] = None
    node_id: Optional[str] = None
    completion: threading.Event = field(default_factory=threading.Event, repr=False)

    def __post_init__(self):
        if self.supported is None:
            self.supported = supported_types(self.kernel.name)
        if PeType.CPU not in self.supported:
            raise InvariantViolation(f"task {self.task_id}: CPU must support every kernel")

    @property
    def name(self) -> KernelName:
        return self.kernel.name

    def _move(self, new: TaskState):
        if new not in _TRANSITIONS[self.state]:
            raise InvariantViolation(
                f"task {self.task_id}: illegal transition {self.state.value} -> {new.value}")
        self.state = new

    def mark_ready(self, ts: int):
        self._move(TaskState.READY)
        self.enqueue_ts = ts

    def mark_running(self, pe_id: int, ts: int):
        self._move(TaskState.RUNNING)
        self.assigned_pe = pe_id
        self.assign_ts = ts

    def mark_complete(self, ts: int):
        self._move(TaskState.COMPLETE)
        self.complete_ts = ts

    def mark_error(self, ts: int, msg: str):
        self._move(TaskState.ERROR)
        self.complete_ts = ts
        self.error = msg

    @property
    def done(self) -> bool:
        return self.state in (TaskState.COMPLETE, TaskState.ERROR)

    @property
    def service_ns(self) -> Optional[int]:
        if self.dispatch_ts is None or self.complete_ts is None:
            return None
        return self.complete_ts - self.dispatch_ts


def kernel_work(name: KernelName, size: tuple[int, ...]) -> float:
    """Relative amount of work, used to extrapolate between profiled sizes."""
    if name in (KernelName.FFT, KernelName.IFFT):
        n = size[0]
        return n * max(1.0, math.log2(n))
    if name is KernelName.GEMM:
        return float(math.prod(size))
    if name is KernelName.CONV2D:
        hw = size[0] * size[1]
        return hw * max(1.0, math.log2(hw))
    return float(math.prod(size))


class CostModel:
    """Expected execution time per (kernel, size bucket, PE type).

    Exact bucket matches return the table entry.  A supported pairing whose
    bucket was never profiled is extrapolated from the nearest profiled
    bucket of the same kernel and PE type by relative work.
    """

    def __init__(self, table: dict[tuple[KernelName, tuple[int, ...], PeType], int]):
        self.table = {(KernelName(k), tuple(b), PeType(p)): int(d) for (k, b, p), d in table.items()}
        self._by_pair: dict[tuple[KernelName, PeType], list[tuple[tuple[int, ...], int]]] = {}
        for (k, b, p), d in sorted(self.table.items()):
            self._by_pair.setdefault((k, p), []).append((b, d))
        self.validate()

    def validate(self):
        for key, d in self.table.items():
            k, b, p = key
            if d <= 0:
                raise CostModelError(f"non-positive duration for {key}")
            if k not in SUPPORT[p]:
                raise CostModelError(f"{p} does not support {k} but the table lists it")
            if any(not is_pow2(x) for x in b):
                raise CostModelError(f"size bucket {b} for {k} is not a power of two")
        for k in KernelName:
            if (k, PeType.CPU) not in self._by_pair:
                raise CostModelError(f"missing CPU entry for kernel {k}")

    def estimate(self, kernel: KernelId, pe_type: PeType) -> Optional[int]:
        if kernel.name not in SUPPORT[pe_type]:
            return None
        rows = self._by_pair.get((kernel.name, pe_type))
        if not rows:
            return None
        bucket = kernel.bucket
        d = self.table.get((kernel.name, bucket, pe_type))
        if d is not None:
            return d
        want = kernel_work(kernel.name, bucket)
        same_rank = [r for r in rows if len(r[0]) == len(bucket)]
        ref_b, ref_d = min(
            same_rank or rows,
            key=lambda r: abs(math.log(kernel_work(kernel.name, r[0]) / want)),
        )
        return max(1, round(ref_d * want / kernel_work(kernel.name, ref_b)))

    def covers(self, kernel: KernelName, pe_type: PeType) -> bool:
        return (kernel, pe_type) in self._by_pair

    def scaled(self, factor) -> "CostModel":
        return CostModel({k: max(1, round(d * factor)) for k, d in self.table.items()})

    def dumps(self) -> str:
        lines = [COST_MODEL_VERSION]
        for (k, b, p), d in sorted(self.table.items(), key=lambda kv: (kv[0][0].value, kv[0][1], kv[0][2].value)):
            lines.append(f"{k.value},{format_size(b)},{p.value},{d}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def loads(cls, text: str) -> "CostModel":
        lines = [ln.strip() for ln in text.splitlines()]
        if not lines or lines[0] != COST_MODEL_VERSION:
            raise CostModelError(f"missing or unknown header, expected {COST_MODEL_VERSION!r}")
        table = {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise CostModelError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                key = (KernelName(parts[0]), parse_size(parts[1]), PeType(parts[2]))
                dur = int(parts[3])
            except ValueError as exc:
                raise CostModelError(f"line {lineno}: {exc}") from None
            if key in table:
                raise CostModelError(f"line {lineno}: duplicate entry {parts[:3]}")
            table[key] = dur
        return cls(table)

    @classmethod
    def load(cls, path) -> "CostModel":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise CostModelError(f"cannot read cost model {path}: {exc}") from None
        return cls.loads(text)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]


def estimate_exec(model: CostModel, kernel: KernelId, pe: PeType) -> Optional[int]:
    return model.estimate(kernel, pe)


class SchedulerName(str, enum.Enum):
    RR = "RR"
    EFT = "EFT"
    ETF = "ETF"
    HEFT_RT = "HEFT_RT"

    def __str__(self):
        return self.value


class ChargeMode(str, enum.Enum):
    SLEEP_REMAINDER = "SLEEP_REMAINDER"
    SLEEP_FULL = "SLEEP_FULL"


@dataclass
class RuntimeConfig:
    pe_roster: list[tuple[PeType, int]] = field(default_factory=lambda: [(PeType.CPU, 3), (PeType.FFT_ACC, 1)])
    scheduler: SchedulerName = SchedulerName.EFT
    cost_model_path: Optional[str] = None
    log_path: Optional[str] = None
    ipc_endpoint: Optional[str] = None
    scheduler_batch_max: int = 64
    drain_timeout_s: float = 30.0
    # Emulated-platform timing: every PE charges its cost-model duration.
    emulate_timing: bool = True
    charge_mode: ChargeMode = ChargeMode.SLEEP_REMAINDER
    # Periodic management tick while applications are in flight (0 = events only).
    poll_interval_us: int = 250
    pin_threads: bool = True
    accel_max_fft: Optional[int] = None
    debug_leases: bool = False
    switch_interval_us: Optional[int] = 500

    def __post_init__(self):
        self.pe_roster = [(PeType(t), int(c)) for t, c in _roster_pairs(self.pe_roster)]
        self.scheduler = SchedulerName(self.scheduler)
        self.charge_mode = ChargeMode(self.charge_mode)
        self.validate()

    def validate(self):
        if any(c < 0 for _, c in self.pe_roster):
            raise ConfigError("PE counts must be non-negative")
        if sum(c for t, c in self.pe_roster if t is PeType.CPU) < 1:
            raise ConfigError("pe_roster must contain at least one CPU")
        if self.scheduler_batch_max < 1:
            raise ConfigError("scheduler_batch_max must be >= 1")
        if self.drain_timeout_s < 0:
            raise ConfigError("drain_timeout_s must be >= 0")
        if self.poll_interval_us < 0:
            raise ConfigError("poll_interval_us must be >= 0")

    def processing_elements(self) -> list[ProcessingElement]:
        pes = []
        for pe_type, count in self.pe_roster:
            for _ in range(count):
                pes.append(ProcessingElement(id=len(pes), pe_type=pe_type))
        return pes

    def to_dict(self) -> dict:
        return {
            "pe_roster": [{"type": t.value, "count": c} for t, c in self.pe_roster],
            "scheduler": self.scheduler.value,
            "cost_model_path": self.cost_model_path,
            "log_path": self.log_path,
            "ipc_endpoint": self.ipc_endpoint,
            "scheduler_batch_max": self.scheduler_batch_max,
            "drain_timeout_s": self.drain_timeout_s,
            "emulate_timing": self.emulate_timing,
            "charge_mode": self.charge_mode.value,
            "poll_interval_us": self.poll_interval_us,
            "pin_threads": self.pin_threads,
            "accel_max_fft": self.accel_max_fft,
            "debug_leases": self.debug_leases,
            "switch_interval_us": self.switch_interval_us,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RuntimeConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RuntimeConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def _roster_pairs(roster):
    for item in roster:
        if isinstance(item, dict):
            yield item["type"], item.get("count", 1)
        else:
            t, c = item
            yield t, c
