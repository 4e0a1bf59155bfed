"""Soundness checks over a serialized execution log."""

from __future__ import annotations

from collections import Counter, defaultdict

from ..runtime.log import ExecutionLog


def _union_length(intervals) -> int:
    total, end = 0, None
    for s, e in sorted(intervals):
        if end is None or s > end:
            total += e - s
            end = e
        elif e > end:
            total += e - end
            end = e
    return total


def check_log(log: ExecutionLog) -> list[str]:
    """Return a list of violations (empty when the log is sound).

    Checks: every task accounted for exactly once and tallied against its
    app; per-PE service intervals never overlap; every DAG edge's source
    completed before its destination started; each finished app's execution
    interval covers the union of its task service intervals.
    """
    problems = []
    ids = Counter(t.task_id for t in log.tasks)
    dup = [i for i, n in ids.items() if n > 1]
    if dup:
        problems.append(f"task ids logged more than once: {dup[:5]}")
    per_app = Counter(t.app_id for t in log.tasks)
    for a in log.apps:
        if per_app.get(a.app_id, 0) != a.task_count:
            problems.append(f"app {a.app_id}: task_count {a.task_count} but {per_app.get(a.app_id, 0)} records")
    for t in log.tasks:
        if t.status not in ("OK", "ERROR", "INCOMPLETE"):
            problems.append(f"task {t.task_id}: unknown status {t.status}")
        if t.status == "OK" and not (0 <= t.enqueue_ts <= t.assign_ts <= t.dispatch_ts <= t.complete_ts):
            problems.append(f"task {t.task_id}: timestamps out of order")

    by_pe = defaultdict(list)
    for t in log.tasks:
        if t.status != "INCOMPLETE" and t.pe_id >= 0:
            by_pe[t.pe_id].append((t.dispatch_ts, t.complete_ts, t.task_id))
    for pe_id, spans in by_pe.items():
        spans.sort()
        for (s0, e0, i0), (s1, e1, i1) in zip(spans, spans[1:]):
            if s1 < e0:
                problems.append(f"PE {pe_id}: tasks {i0} and {i1} overlap")

    node_task = {(t.app_id, t.node_id): t for t in log.tasks if t.node_id}
    for e in log.edges:
        src, dst = node_task.get((e.app_id, e.src)), node_task.get((e.app_id, e.dst))
        if dst is None or dst.status == "INCOMPLETE":
            continue
        if src is None or src.status != "OK":
            problems.append(f"app {e.app_id}: {e.dst} ran without a completed predecessor {e.src}")
        elif dst.dispatch_ts < src.complete_ts:
            problems.append(f"app {e.app_id}: {e.dst} started before {e.src} completed")

    spans_by_app = defaultdict(list)
    for t in log.tasks:
        if t.status == "OK":
            spans_by_app[t.app_id].append((t.dispatch_ts, t.complete_ts))
    for a in log.apps:
        if a.state == "DONE" and a.end_ts >= 0:
            busy = _union_length(spans_by_app[a.app_id])
            if a.end_ts - a.arrival_ts < busy:
                problems.append(f"app {a.app_id}: execution interval shorter than its busy time")
    return problems
