"""List-scheduling heuristics mapping ready tasks onto processing elements.

All heuristics are pure functions of a :class:`ScheduleSnapshot` (round
robin additionally keeps a cursor between invocations).  Predicted PE
availability is advanced locally as tasks are committed, so later decisions
in the same invocation see earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import ConfigError
from .model import CostModel, PeType, SchedulerName, Task


@dataclass
class PeSlot:
    id: int
    pe_type: PeType
    busy_until: int = 0


@dataclass
class ScheduleSnapshot:
    ready: list[Task]
    pes: list[PeSlot]
    now: int
    model: CostModel

    def __post_init__(self):
        self.pes = sorted(self.pes, key=lambda p: p.id)


@dataclass(frozen=True)
class Assignment:
    task_id: int
    pe_id: int
    predicted_start: int
    predicted_finish: int
    task: Optional[Task] = field(default=None, compare=False, repr=False)


class _Estimates:
    """Per-invocation cache of cost-model lookups keyed by (kernel, PE type)."""

    def __init__(self, model: CostModel):
        self.model = model
        self._cache = {}

    def __call__(self, task: Task, pe_type: PeType) -> int:
        key = (task.kernel, pe_type)
        est = self._cache.get(key)
        if est is None:
            est = self.model.estimate(task.kernel, pe_type)
            if est is None:
                raise ConfigError(f"cost model has no entry for {task.kernel} on {pe_type}")
            self._cache[key] = est
        return est


def _candidates(task: Task, pes: Sequence[PeSlot]) -> list[PeSlot]:
    return [pe for pe in pes if pe.pe_type in task.supported]


def _eft_pass(tasks, snapshot: ScheduleSnapshot, est: _Estimates) -> list[Assignment]:
    busy = {pe.id: pe.busy_until for pe in snapshot.pes}
    now = snapshot.now
    out = []
    for task in tasks:
        best = None
        for pe in _candidates(task, snapshot.pes):
            start = max(now, busy[pe.id])
            finish = start + est(task, pe.pe_type)
            if best is None or finish < best[0]:
                best = (finish, start, pe.id)
        finish, start, pe_id = best
        busy[pe_id] = finish
        out.append(Assignment(task.task_id, pe_id, start, finish, task))
    return out


class RoundRobin:
    """FIFO tasks onto a persistent cyclic cursor over the PE list.

    PEs that cannot run a task are skipped; the cursor always moves past the
    PE that was chosen, so PEs supporting every kernel stay balanced.
    """

    name = SchedulerName.RR

    def __init__(self):
        self.cursor = 0

    def __call__(self, snapshot: ScheduleSnapshot) -> list[Assignment]:
        pes = snapshot.pes
        n = len(pes)
        est = _Estimates(snapshot.model)
        busy = {pe.id: pe.busy_until for pe in pes}
        out = []
        for task in snapshot.ready:
            for step in range(n):
                pe = pes[(self.cursor + step) % n]
                if pe.pe_type in task.supported:
                    break
            else:  # pragma: no cover - CPU supports every kernel
                raise ConfigError(f"no PE supports task {task.task_id}")
            self.cursor = (self.cursor + step + 1) % n
            start = max(snapshot.now, busy[pe.id])
            finish = start + est(task, pe.pe_type)
            busy[pe.id] = finish
            out.append(Assignment(task.task_id, pe.id, start, finish, task))
        return out


class EarliestFinishTime:
    """Each task, in FIFO order, goes to the PE predicted to finish it first."""

    name = SchedulerName.EFT

    def __call__(self, snapshot: ScheduleSnapshot) -> list[Assignment]:
        return _eft_pass(snapshot.ready, snapshot, _Estimates(snapshot.model))


class EarliestTaskFirst:
    """Repeatedly commit the globally earliest-finishing (task, PE) pair.

    Every round scans all remaining ready tasks against all PEs, which makes
    one invocation quadratic in the ready-queue length.  Ties go to the
    earlier-enqueued task, then the lower PE id.  ``now`` is held fixed for
    the whole invocation.
    """

    name = SchedulerName.ETF

    def __call__(self, snapshot: ScheduleSnapshot) -> list[Assignment]:
        est = _Estimates(snapshot.model)
        now = snapshot.now
        busy = {pe.id: pe.busy_until for pe in snapshot.pes}
        remaining = [
            (task, [(pe.id, est(task, pe.pe_type)) for pe in _candidates(task, snapshot.pes)])
            for task in snapshot.ready
        ]
        out = []
        while remaining:
            best_key = None
            best_idx = 0
            for idx, (task, cands) in enumerate(remaining):
                order = (task.enqueue_ts or 0, task.task_id)
                for pe_id, cost in cands:
                    b = busy[pe_id]
                    key = ((b if b > now else now) + cost, order, pe_id)
                    if best_key is None or key < best_key:
                        best_key = key
                        best_idx = idx
            task, _ = remaining.pop(best_idx)
            finish, _, pe_id = best_key
            start = max(now, busy[pe_id])
            busy[pe_id] = finish
            out.append(Assignment(task.task_id, pe_id, start, finish, task))
        return out


def mean_cost(task: Task, snapshot: ScheduleSnapshot, est=None) -> float:
    est = est or _Estimates(snapshot.model)
    types = {pe.pe_type for pe in _candidates(task, snapshot.pes)}
    return sum(est(task, t) for t in types) / len(types)


class HeftRt:
    """Runtime HEFT: order the ready list by rank, then assign EFT-style.

    A task's rank is its upward rank when the DAG engine supplied one,
    otherwise the mean estimate over the PE types able to run it.
    """

    name = SchedulerName.HEFT_RT

    def __call__(self, snapshot: ScheduleSnapshot) -> list[Assignment]:
        est = _Estimates(snapshot.model)

        def rank(task):
            return task.rank_hint if task.rank_hint is not None else mean_cost(task, snapshot, est)

        ordered = sorted(snapshot.ready, key=lambda t: (-rank(t), t.enqueue_ts or 0, t.task_id))
        return _eft_pass(ordered, snapshot, est)


def schedule_rr(snapshot: ScheduleSnapshot, rr: Optional[RoundRobin] = None) -> list[Assignment]:
    return (rr or RoundRobin())(snapshot)


def schedule_eft(snapshot: ScheduleSnapshot) -> list[Assignment]:
    return EarliestFinishTime()(snapshot)


def schedule_etf(snapshot: ScheduleSnapshot) -> list[Assignment]:
    return EarliestTaskFirst()(snapshot)


def schedule_heft_rt(snapshot: ScheduleSnapshot) -> list[Assignment]:
    return HeftRt()(snapshot)


SCHEDULERS: dict[SchedulerName, Callable[[], Callable[[ScheduleSnapshot], list[Assignment]]]] = {
    SchedulerName.RR: RoundRobin,
    SchedulerName.EFT: EarliestFinishTime,
    SchedulerName.ETF: EarliestTaskFirst,
    SchedulerName.HEFT_RT: HeftRt,
}


def make_scheduler(name) -> Callable[[ScheduleSnapshot], list[Assignment]]:
    try:
        return SCHEDULERS[SchedulerName(name)]()
    except ValueError:
        raise ConfigError(f"unknown scheduler {name!r}; choose from {[s.value for s in SchedulerName]}") from None
