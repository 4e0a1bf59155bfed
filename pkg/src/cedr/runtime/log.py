"""Execution logs: per-task, per-application and per-scheduler-invocation records.

A run directory holds ``header.json`` plus one CSV per record kind
(``tasks.csv``, ``apps.csv``, ``sched.csv``, ``edges.csv``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional


@dataclass
class TaskRecord:
    task_id: int
    app_id: int
    kernel: str
    size: str
    node_id: str
    pe_id: int
    pe_type: str
    enqueue_ts: int
    assign_ts: int
    dispatch_ts: int
    complete_ts: int
    status: str
    error: str = ""


@dataclass
class AppRecord:
    app_id: int
    name: str
    mode: str
    arrival_ts: int
    start_ts: int
    end_ts: int
    state: str
    task_count: int
    mgmt_ns: int
    error: str = ""


@dataclass
class InvocationRecord:
    seq: int
    ts: int
    queue_len: int
    assigned: int
    decision_ns: int
    # "app:count" pairs separated by "|"
    app_tasks: str


@dataclass
class EdgeRecord:
    app_id: int
    src: str
    dst: str


_KINDS = {
    "tasks": TaskRecord,
    "apps": AppRecord,
    "sched": InvocationRecord,
    "edges": EdgeRecord,
}

_INT_FIELDS = {
    cls: {f.name for f in fields(cls) if f.type in ("int", int)} for cls in _KINDS.values()
}


def encode_app_tasks(counts: dict[int, int]) -> str:
    return "|".join(f"{a}:{n}" for a, n in sorted(counts.items()))


def decode_app_tasks(text: str) -> dict[int, int]:
    out = {}
    for part in filter(None, text.split("|")):
        a, n = part.split(":")
        out[int(a)] = int(n)
    return out


@dataclass
class ExecutionLog:
    header: dict = field(default_factory=dict)
    tasks: list[TaskRecord] = field(default_factory=list)
    apps: list[AppRecord] = field(default_factory=list)
    sched: list[InvocationRecord] = field(default_factory=list)
    edges: list[EdgeRecord] = field(default_factory=list)

    def write(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "header.json").write_text(json.dumps(self.header, indent=2, default=str))
        for kind, cls in _KINDS.items():
            with open(d / f"{kind}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([f.name for f in fields(cls)])
                for rec in getattr(self, kind):
                    writer.writerow(["" if v is None else v for v in asdict(rec).values()])
        return d

    @classmethod
    def read(cls, directory) -> "ExecutionLog":
        d = Path(directory)
        log = cls(header=json.loads((d / "header.json").read_text()))
        for kind, rec_cls in _KINDS.items():
            ints = _INT_FIELDS[rec_cls]
            path = d / f"{kind}.csv"
            if not path.exists():
                continue
            with open(path, newline="") as fh:
                rows = []
                for row in csv.DictReader(fh):
                    rows.append(rec_cls(**{k: (_to_int(v) if k in ints else v) for k, v in row.items()}))
            setattr(log, kind, rows)
        return log

    def app(self, app_id: int) -> Optional[AppRecord]:
        return next((a for a in self.apps if a.app_id == app_id), None)

    def tasks_of(self, app_id: int) -> list[TaskRecord]:
        return [t for t in self.tasks if t.app_id == app_id]


def _to_int(v):
    return -1 if v in ("", None) else int(v)
