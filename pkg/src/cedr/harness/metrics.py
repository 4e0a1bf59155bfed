"""Per-application metrics from execution logs, averaged per app then across trials."""

from __future__ import annotations

import json
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from ..runtime.log import ExecutionLog, decode_app_tasks

METRICS = ("exec_time", "sched_overhead", "runtime_overhead")


@dataclass
class AppMetrics:
    app_id: int
    name: str
    exec_ns: int
    sched_ns: float
    runtime_ns: float


def sched_attribution(log: ExecutionLog) -> dict[int, float]:
    """Each invocation's decision time split across apps by their share of its snapshot."""
    out: dict[int, float] = defaultdict(float)
    for inv in log.sched:
        counts = decode_app_tasks(inv.app_tasks)
        total = sum(counts.values())
        for app_id, n in counts.items():
            out[app_id] += inv.decision_ns * n / total
    return out


def app_metrics(log: ExecutionLog) -> tuple[list[AppMetrics], int]:
    """Metrics for every completed app, plus the number of apps excluded as incomplete."""
    sched = sched_attribution(log)
    rows, incomplete = [], 0
    for a in log.apps:
        if a.state != "DONE" or a.end_ts < 0 or a.start_ts < 0:
            incomplete += 1
            continue
        rows.append(AppMetrics(a.app_id, a.name, a.end_ts - a.start_ts, sched.get(a.app_id, 0.0), a.mgmt_ns))
    return rows, incomplete


def residual_overhead(log: ExecutionLog) -> dict[int, float]:
    """(end - arrival) - sum of task service times - attributed scheduling time, per app.

    Kept for comparison; this residual also absorbs queuing delay.
    """
    sched = sched_attribution(log)
    service: dict[int, int] = defaultdict(int)
    for t in log.tasks:
        if t.dispatch_ts >= 0 and t.complete_ts >= 0:
            service[t.app_id] += t.complete_ts - t.dispatch_ts
    return {a.app_id: (a.end_ts - a.arrival_ts) - service[a.app_id] - sched.get(a.app_id, 0.0)
            for a in log.apps if a.state == "DONE"}


def trial_summary(log: ExecutionLog) -> dict:
    """Per-app averages (ms) for one trial."""
    rows, incomplete = app_metrics(log)
    n = len(rows)
    if n == 0:
        return {"apps": 0, "incomplete": incomplete}
    return {
        "apps": n,
        "incomplete": incomplete,
        "exec_time": sum(r.exec_ns for r in rows) / n / 1e6,
        "sched_overhead": sum(r.sched_ns for r in rows) / n / 1e6,
        "runtime_overhead": sum(r.runtime_ns for r in rows) / n / 1e6,
    }


@dataclass
class MetricRow:
    rate_mbps: float
    scheduler: str
    mode: str
    metric: str
    mean_ms: float
    std_ms: float
    trials: int
    incomplete: int


@dataclass
class MetricsReport:
    rows: list[MetricRow] = field(default_factory=list)
    failed_trials: int = 0

    def get(self, rate: float, scheduler: str, mode: str, metric: str) -> Optional[MetricRow]:
        for r in self.rows:
            if r.rate_mbps == rate and r.scheduler == scheduler and r.mode == mode and r.metric == metric:
                return r
        return None

    def series(self, scheduler: str, mode: str, metric: str) -> list[tuple[float, float]]:
        return sorted((r.rate_mbps, r.mean_ms) for r in self.rows
                      if r.scheduler == scheduler and r.mode == mode and r.metric == metric)


def _std(values: list[float]) -> float:
    return statistics.pstdev(values) if len(values) > 1 else 0.0


def compute_metrics(trials: Iterable[tuple[float, str, str, ExecutionLog]], failed: int = 0) -> MetricsReport:
    """``trials`` yields (rate, scheduler, mode, log) per completed trial."""
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for rate, sched, mode, log in trials:
        groups[(float(rate), sched, mode)].append(trial_summary(log))
    report = MetricsReport(failed_trials=failed)
    for (rate, sched, mode), summaries in sorted(groups.items()):
        usable = [s for s in summaries if s["apps"]]
        incomplete = sum(s["incomplete"] for s in summaries)
        if not usable:
            continue
        for metric in METRICS:
            vals = [s[metric] for s in usable]
            report.rows.append(MetricRow(rate, sched, mode, metric, statistics.fmean(vals), _std(vals),
                                         len(usable), incomplete))
    return report


def load_sweep(out_dir) -> tuple[list[tuple[float, str, str, ExecutionLog]], int]:
    """Read every successful trial listed in a sweep directory's manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    trials, failed = [], 0
    for t in manifest["trials"]:
        if not t["ok"] or not Path(t["log_dir"]).exists():
            failed += 1
            continue
        trials.append((t["rate_mbps"], t["scheduler"], t["mode"], ExecutionLog.read(t["log_dir"])))
    return trials, failed
