"""The runtime service: main event loop, per-PE workers and application lifecycle.

Thread layout: one main loop (receives submissions, launches applications,
runs the scheduler, dispatches work, handles completions), one worker per
processing element, one thread per live API-mode application and, when an
IPC endpoint is configured, one acceptor thread.

Runtime overhead is measured as CPU time spent by the main loop (and the
acceptor) on application management, i.e. everything except scheduling
decisions, and attributed to the applications it was spent on.
"""

from __future__ import annotations

import datetime
import enum
import logging
import os
import queue
import sys
import threading
import time
from collections import Counter, deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .. import api
from ..dag import AppDag, parse_dag
from ..errors import (
    CedrError,
    ConfigError,
    DagParseError,
    InvalidArgument,
    RuntimeNotRunning,
    UsageError,
)
from ..kernels import AcceleratorProfile, execute_on_pe
from ..model import (
    SUPPORT,
    CostModel,
    KernelId,
    KernelName,
    PeType,
    ProcessingElement,
    RuntimeConfig,
    Task,
    TaskIdSource,
    TaskState,
    format_size,
    supported_types,
)
from ..scheduler import PeSlot, ScheduleSnapshot, make_scheduler
from .log import AppRecord, EdgeRecord, ExecutionLog, InvocationRecord, TaskRecord, encode_app_tasks

log = logging.getLogger(__name__)

_clock = time.monotonic_ns
_cpu = time.thread_time_ns
_OUTPUT_ARG = {KernelName.FFT: "output", KernelName.IFFT: "output", KernelName.ZIP: "output",
               KernelName.GEMM: "C", KernelName.CONV2D: "output"}


class AppMode(str, enum.Enum):
    API = "API"
    DAG = "DAG"


class AppState(str, enum.Enum):
    RECEIVED = "RECEIVED"
    RUNNING = "RUNNING"
    DONE = "DONE"
    INCOMPLETE = "INCOMPLETE"


class RunState(str, enum.Enum):
    INIT = "INIT"
    RUNNING = "RUNNING"
    DRAINING = "DRAINING"
    STOPPED = "STOPPED"


@dataclass(eq=False)
class AppInstance:
    app_id: int
    name: str
    mode: AppMode
    params: dict
    arrival_ts: int
    start_ts: Optional[int] = None
    end_ts: Optional[int] = None
    state: AppState = AppState.RECEIVED
    task_count: int = 0
    mgmt_ns: float = 0.0
    error: Optional[str] = None
    result: Any = None
    thread: Optional[threading.Thread] = None
    dag: Optional[AppDag] = None
    frame: Optional[dict] = None
    funcs: Optional[dict] = None
    ranks: dict = field(default_factory=dict)
    in_flight: int = 0
    exited: bool = False
    share_mark: float = 0.0
    # set by the app thread just before it posts app_exit
    reported: bool = False
    done: threading.Event = field(default_factory=threading.Event, repr=False)

    @property
    def finished(self) -> bool:
        return self.state in (AppState.DONE, AppState.INCOMPLETE)


class _Reply:
    """One-shot reply slot for in-process requests to the main loop."""

    def __init__(self):
        self._event = threading.Event()
        self.value = None

    def __call__(self, value):
        self.value = value
        self._event.set()

    def get(self, timeout=None):
        if not self._event.wait(timeout):
            raise TimeoutError("runtime did not answer in time")
        return self.value


def error_reply(exc: BaseException) -> dict:
    kind = {
        DagParseError: "parse_error",
        InvalidArgument: "invalid_argument",
        RuntimeNotRunning: "not_running",
        ConfigError: "config_error",
    }
    for cls, name in kind.items():
        if isinstance(exc, cls):
            return {"error": str(exc), "kind": name}
    return {"error": f"{type(exc).__name__}: {exc}", "kind": "error"}


def raise_reply(reply: dict):
    if "error" not in reply:
        return reply
    cls = {
        "parse_error": DagParseError,
        "invalid_argument": InvalidArgument,
        "not_running": RuntimeNotRunning,
        "config_error": ConfigError,
    }.get(reply.get("kind"), CedrError)
    raise cls(reply["error"])


class Runtime:
    """In-process runtime instance; the daemon CLI wraps one of these."""

    def __init__(self, config: RuntimeConfig, model: Optional[CostModel] = None, registry: Optional[dict] = None):
        config.validate()
        self.config = config
        if model is None:
            if not config.cost_model_path:
                raise ConfigError("no cost model given (set cost_model_path)")
            model = CostModel.load(config.cost_model_path)
        self.model = model
        self.pes: list[ProcessingElement] = config.processing_elements()
        self._check_model_coverage()
        if registry is None:
            from ..apps import REGISTRY as registry
        self.registry = registry
        self.profile = AcceleratorProfile(
            model if config.emulate_timing else None, config.charge_mode, True, config.accel_max_fft)
        self.scheduler = make_scheduler(config.scheduler)
        self.roster_types = frozenset(pe.pe_type for pe in self.pes)

        self._cond = threading.Condition()
        self._inbox: deque = deque()
        self._completions: deque = deque()
        self._ready: deque = deque()
        self._queues = [queue.SimpleQueue() for _ in self.pes]
        self._workers: list[threading.Thread] = []
        self._records: list[list[TaskRecord]] = [[] for _ in self.pes]
        self._main: Optional[threading.Thread] = None
        self._ipc = None
        self._ids = TaskIdSource()
        self._next_app = 1
        self._apps: dict[int, AppInstance] = {}
        self._supported_cache: dict[KernelId, frozenset] = {}
        self._pe_pending = [0] * len(self.pes)
        self._estimate = {}
        self._sched_log: list[InvocationRecord] = []
        self._edges: list[EdgeRecord] = []
        self._orphan_records: list[TaskRecord] = []
        self._unattributed_ns = 0
        self._live: dict[int, AppInstance] = {}
        # management CPU time by category, reported in the log header
        self._breakdown = Counter()
        self._done_count = 0
        # O(1) bookkeeping for the periodic pass: running totals for the
        # status snapshot, a rotating probe over application threads, and
        # the cumulative per-live-app share of shared management time
        self._in_flight_total = 0
        self._threads_running = 0
        self._live_api = 0
        self._leases: dict[int, Any] = {}
        self._lease_lock = threading.Lock()
        self._probe: deque = deque()
        self._share_acc = 0.0
        self._snapshot: Optional[dict] = None
        self.state = RunState.INIT
        self._accepting = False
        self._stop_requested = False
        self._drain_deadline: Optional[int] = None
        self._shutdown_waiters: list = []
        self._stopped = threading.Event()
        self._final_log: Optional[ExecutionLog] = None
        self._wall_start = None
        self._old_switch = None
        self.pinned = False

    # ------------------------------------------------------------------ setup

    def _check_model_coverage(self):
        for pe_type in {pe.pe_type for pe in self.pes}:
            for kernel in SUPPORT[pe_type]:
                if not self.model.covers(kernel, pe_type):
                    raise ConfigError(f"cost model has no {kernel} entries for {pe_type}")

    def _supported(self, kid: KernelId) -> frozenset:
        s = self._supported_cache.get(kid)
        if s is None:
            s = frozenset(t for t in supported_types(kid.name) & self.roster_types
                          if self.profile.accepts(kid, t))
            self._supported_cache[kid] = s
        return s

    def _pin_plan(self) -> dict:
        """Core assignment: main loop on the first core, one core per CPU worker."""
        if not self.config.pin_threads or not hasattr(os, "sched_getaffinity"):
            return {}
        cores = sorted(os.sched_getaffinity(0))
        cpu_pes = [pe.id for pe in self.pes if pe.pe_type is PeType.CPU]
        if len(cores) < 1 + len(cpu_pes):
            log.warning("host has %d usable cores for 1 main loop + %d CPU workers; running unpinned",
                        len(cores), len(cpu_pes))
            return {}
        plan = {"main": cores[0]}
        for i, pe_id in enumerate(cpu_pes):
            plan[pe_id] = cores[1 + i]
        return plan

    def start(self) -> "Runtime":
        if self.state is not RunState.INIT:
            raise RuntimeNotRunning("runtime can only be started once")
        if self.config.ipc_endpoint:
            from .ipc import IpcServer
            self._ipc = IpcServer(self.config.ipc_endpoint, self)
            self._ipc.bind()
        if self.config.switch_interval_us:
            self._old_switch = sys.getswitchinterval()
            sys.setswitchinterval(self.config.switch_interval_us / 1e6)
        plan = self._pin_plan()
        self.pinned = bool(plan)
        self._wall_start = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.state = RunState.RUNNING
        self._accepting = True
        for pe in self.pes:
            t = threading.Thread(target=self._worker, args=(pe, plan.get(pe.id)),
                                 name=f"cedr-pe{pe.id}-{pe.pe_type.value}", daemon=True)
            self._workers.append(t)
            t.start()
        self._main = threading.Thread(target=self._loop, args=(plan.get("main"),), name="cedr-main", daemon=True)
        self._main.start()
        if self._ipc:
            self._ipc.start()
        log.info("runtime started: %s, scheduler %s", self._roster_text(), self.config.scheduler.value)
        return self

    def _roster_text(self):
        return ", ".join(f"{c}x{t.value}" for t, c in self.config.pe_roster if c)

    @property
    def thread_count(self) -> int:
        return len(self._workers) + (1 if self._main else 0)

    # -------------------------------------------------------- external entry

    def post(self, msg: tuple):
        with self._cond:
            self._inbox.append(msg)
            self._cond.notify()

    def _request(self, msg_kind, *payload, timeout=None):
        if self.state is RunState.STOPPED:
            raise RuntimeNotRunning("runtime is stopped")
        reply = _Reply()
        self.post((msg_kind, *payload, reply, 0))
        return raise_reply(reply.get(timeout))

    def submit(self, app: str, mode="API", params: Optional[dict] = None, timeout: Optional[float] = 30.0) -> int:
        payload = {"app": app, "mode": mode, "params": params or {}}
        return self._request("submit", payload, timeout=timeout)["app_id"]

    def enqueue(self, app_id: int, kernel: KernelId, args: dict) -> Task:
        """Called from application threads: append a READY task to the ready queue."""
        if not self._accepting:
            raise RuntimeNotRunning("runtime is not accepting tasks")
        task = Task(self._ids.next(), app_id, kernel, args, supported=self._supported(kernel))
        if self.config.debug_leases:
            self._take_lease(task)
        task.mark_ready(_clock())
        with self._cond:
            if not self._accepting:
                raise RuntimeNotRunning("runtime is not accepting tasks")
            self._ready.append(task)
            self._cond.notify()
        return task

    def _take_lease(self, task: Task):
        """Debug check: an output buffer may be lent to one in-flight task at a time."""
        out = task.args.get(_OUTPUT_ARG.get(task.name, ""))
        if out is None:
            return
        with self._lease_lock:
            for other_id, other in self._leases.items():
                if np.shares_memory(out, other):
                    raise UsageError(f"output buffer of new {task.kernel} task overlaps one still "
                                     f"lent to in-flight task {other_id}")
            self._leases[task.task_id] = out

    def _release_lease(self, task: Task):
        if self.config.debug_leases:
            with self._lease_lock:
                self._leases.pop(task.task_id, None)

    @contextmanager
    def session(self, name: str = "session"):
        """Bind the calling thread to this runtime as an API-mode application."""
        app_id = self._request("attach", {"name": name}, timeout=30)["app_id"]
        error = None
        try:
            with api.bind(self, app_id) as ctx:
                try:
                    yield ctx
                except BaseException as exc:
                    error = f"{type(exc).__name__}: {exc}"
                    raise
                finally:
                    error = error or self._settle_orphans(ctx)
        finally:
            self.post(("app_exit", app_id, None, error, _clock()))

    def app(self, app_id: int) -> AppInstance:
        return self._apps[app_id]

    def wait_app(self, app_id: int, timeout: Optional[float] = None) -> AppInstance:
        deadline = None if timeout is None else time.monotonic() + timeout
        while app_id not in self._apps:
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError(f"app {app_id} unknown")
            time.sleep(0.001)
        app = self._apps[app_id]
        if not app.done.wait(timeout):
            raise TimeoutError(f"app {app_id} still running after {timeout}s")
        return app

    def wait_idle(self, timeout: Optional[float] = None):
        for app_id in list(self._apps):
            self.wait_app(app_id, timeout)

    def status(self, fresh: bool = False) -> dict:
        """Runtime status.

        While running, the main loop republishes a snapshot every poll
        interval and that snapshot is returned; ``fresh`` computes it now.
        """
        if fresh or self.state is not RunState.RUNNING or self._snapshot is None:
            return self._status_now()
        return dict(self._snapshot)

    def _status_now(self, scan: bool = True) -> dict:
        """Status document; ``scan=False`` uses running totals (the periodic pass)."""
        if scan:
            apps = list(self._apps.values())
            counts = {st.value: sum(a.state is st for a in apps) for st in AppState}
            running_api = sum(a.state is AppState.RUNNING and a.thread is not None for a in apps)
            threads = sum(a.thread is not None and a.thread.is_alive() for a in apps)
            in_flight = sum(a.in_flight for a in apps if not a.finished)
        else:
            # O(1) so the periodic pass costs the same however many apps
            # are in flight or already finished
            counts = {st.value: 0 for st in AppState}
            counts[AppState.RUNNING.value] = len(self._live)
            counts[AppState.DONE.value] = self._done_count
            running_api = self._live_api
            threads, in_flight = self._threads_running, self._in_flight_total
        return {
            "state": self.state.value,
            "apps": counts,
            "running_api_apps": running_api,
            "live_app_threads": threads,
            "in_flight_tasks": in_flight,
            "ready_queue": len(self._ready),
            "pes": [{"id": pe.id, "type": pe.pe_type.value, "assigned": pe.assigned_count} for pe in self.pes],
            "pinned": self.pinned,
        }

    def shutdown(self, drain_timeout: Optional[float] = None, timeout: Optional[float] = None) -> ExecutionLog:
        """Stop accepting work, drain in-flight apps, join threads, return the log."""
        if self.state is RunState.STOPPED:
            return self._final_log
        if self.state is RunState.INIT:
            raise RuntimeNotRunning("runtime was never started")
        reply = _Reply()
        self.post(("shutdown", {"drain_timeout_s": drain_timeout}, reply, 0))
        self._stopped.wait(timeout)
        if self._ipc:
            self._ipc.stop()
        return self._final_log

    def wait_stopped(self, timeout: Optional[float] = None) -> bool:
        return self._stopped.wait(timeout)

    @property
    def execution_log(self) -> Optional[ExecutionLog]:
        return self._final_log

    # ---------------------------------------------------------------- workers

    def _worker(self, pe: ProcessingElement, core: Optional[int]):
        if core is not None:
            os.sched_setaffinity(0, {core})
        q = self._queues[pe.id]
        records = self._records[pe.id]
        profile = self.profile
        while True:
            task = q.get()
            if task is None:
                return
            t0 = _clock()
            try:
                rec = execute_on_pe(task, pe, profile)
                task.dispatch_ts = rec.dispatch_ts
                task.mark_complete(rec.complete_ts)
            except Exception as exc:  # task errors are reported, never fatal
                task.dispatch_ts = t0
                task.mark_error(_clock(), f"{type(exc).__name__}: {exc}")
            records.append(self._task_record(task, pe.id, pe.pe_type.value))
            self._release_lease(task)
            # wake the application thread directly, then tell the main loop
            task.completion.set()
            with self._cond:
                self._completions.append(task)
                self._cond.notify()

    @staticmethod
    def _task_record(task: Task, pe_id: int, pe_type: str, status: Optional[str] = None) -> TaskRecord:
        if status is None:
            status = "OK" if task.state is TaskState.COMPLETE else "ERROR"
        return TaskRecord(
            task.task_id, task.app_id, task.kernel.name.value, format_size(task.kernel.size),
            task.node_id or "", pe_id, pe_type, task.enqueue_ts or -1,
            -1 if task.assign_ts is None else task.assign_ts,
            -1 if task.dispatch_ts is None else task.dispatch_ts,
            -1 if task.complete_ts is None else task.complete_ts, status, task.error or "")

    # -------------------------------------------------------------- main loop

    def _loop(self, core: Optional[int]):
        if core is not None:
            os.sched_setaffinity(0, {core})
        pending: deque = deque()
        poll_ns = self.config.poll_interval_us * 1000
        next_pass = _clock() + poll_ns
        seq = 0
        while True:
            with self._cond:
                while not (self._inbox or self._completions or self._ready or pending):
                    timeout = None
                    if self._live:
                        timeout = max(0.0, (next_pass - _clock()) / 1e9) if poll_ns else None
                    if self._drain_deadline is not None:
                        left = max(0.0, (self._drain_deadline - _clock()) / 1e9)
                        timeout = left if timeout is None else min(timeout, left)
                    if timeout == 0.0 or not self._cond.wait(timeout):
                        break
                inbox = list(self._inbox)
                self._inbox.clear()
                done = list(self._completions)
                self._completions.clear()
                fresh = list(self._ready)
                self._ready.clear()

            t0 = _cpu()
            events: Counter = Counter()
            specific: Counter = Counter()
            excluded = 0

            for msg in inbox:
                s = _cpu()
                app_id, skip = self._handle_message(msg, pending)
                if app_id is not None:
                    specific[app_id] += _cpu() - s - skip
                excluded += skip

            for task in fresh:
                app = self._apps.get(task.app_id)
                if app is None or app.finished:
                    # late enqueue from an app that was already closed out
                    task.mark_error(_clock(), api.TERMINATED)
                    task.completion.set()
                    self._orphan_records.append(self._task_record(task, -1, "", "INCOMPLETE"))
                    continue
                app.task_count += 1
                app.in_flight += 1
                self._in_flight_total += 1
                events[task.app_id] += 1
                pending.append(task)

            for task in done:
                events[task.app_id] += 1
                self._handle_completion(task, pending)

            sched_ns = 0
            if pending:
                seq += 1
                sched_ns = self._schedule(pending, seq, events)

            spent = _cpu() - t0 - sched_ns - excluded
            for app_id, ns in specific.items():
                if app_id in self._apps:
                    self._apps[app_id].mgmt_ns += ns
            self._attribute(spent - sum(specific.values()), events)
            bd = self._breakdown
            bd["iterations"] += 1
            bd["events"] += sum(events.values())
            bd["message_ns"] += sum(specific.values())
            bd["event_ns"] += spent - sum(specific.values())
            bd["sched_ns"] += sched_ns

            now = _clock()
            if self._live and now >= next_pass:
                s = _cpu()
                self._housekeeping(now)
                ns = _cpu() - s
                self._share_live(ns)
                self._breakdown["passes"] += 1
                self._breakdown["pass_ns"] += ns
                next_pass = now + poll_ns

            if self._stop_requested:
                if not self._live or (self._drain_deadline is not None and _clock() >= self._drain_deadline):
                    self._stop(pending)
                    return

    def _attribute(self, ns: float, events: Counter):
        if ns <= 0:
            return
        total = sum(events.values())
        if not total:
            self._share_live(ns)
            return
        for app_id, n in events.items():
            app = self._apps.get(app_id)
            if app is not None:
                app.mgmt_ns += ns * n / total

    def _share_live(self, ns: float):
        """Split management time that no single app caused across the apps in flight.

        Shares accumulate in a running per-app total that each app settles
        when it leaves the live set, so the split costs O(1).
        """
        if self._live:
            self._share_acc += ns / len(self._live)
        else:
            self._unattributed_ns += ns

    def _retire(self, app: AppInstance):
        """Remove an app from the live set, settling its share of shared time."""
        if self._live.pop(app.app_id, None) is None:
            return
        app.mgmt_ns += self._share_acc - app.share_mark
        if app.thread is not None:
            self._live_api -= 1
        if app.thread is not None and not app.exited:
            self._threads_running -= 1
        self._in_flight_total -= app.in_flight
        if not self._live:
            # the periodic pass goes quiet with nothing live; leave a current snapshot behind
            self._snapshot = self._status_now(scan=False)

    def _housekeeping(self, now: int):
        """Periodic management pass over the applications in flight.

        Probes one application thread per pass (round robin) for a thread
        that died without reporting, and publishes the status snapshot
        served to IPC status queries.
        """
        while self._probe:
            app = self._probe.popleft()
            if app.app_id not in self._live or app.exited or app.reported:
                continue
            if not app.thread.is_alive():
                self._mark_exited(app, None, "application thread exited abnormally", now)
                self._try_finish(app)
            else:
                self._probe.append(app)
            break
        self._snapshot = self._status_now(scan=False)

    def _mark_exited(self, app: AppInstance, result, error, end_ts):
        if app.thread is not None and not app.exited:
            self._threads_running -= 1
        app.exited = True
        app.result = result if result is not None else app.result
        app.error = app.error or error
        app.end_ts = end_ts

    # ------------------------------------------------------------- messages

    def _handle_message(self, msg, pending) -> tuple[Optional[int], int]:
        """Returns (app the work is attributed to, ns of input generation to exclude)."""
        kind = msg[0]
        if kind == "submit":
            _, payload, reply, recv_ns = msg
            try:
                app, skip = self._submit(payload, pending)
            except Exception as exc:
                reply(error_reply(exc))
                return None, 0
            app.mgmt_ns += recv_ns
            reply({"app_id": app.app_id})
            return app.app_id, skip
        if kind == "attach":
            _, payload, reply, _ = msg
            if not self._accepting:
                reply(error_reply(RuntimeNotRunning("runtime is shutting down")))
                return None, 0
            app = self._new_app(payload.get("name", "session"), AppMode.API, {})
            app.state = AppState.RUNNING
            app.start_ts = app.arrival_ts
            reply({"app_id": app.app_id})
            return app.app_id, 0
        if kind == "app_exit":
            _, app_id, result, error, end_ts = msg
            app = self._apps.get(app_id)
            if app is None or app.finished:
                return None, 0
            self._mark_exited(app, result, error, end_ts)
            if app.thread is not None:
                app.thread.join(1.0)
            self._try_finish(app)
            return app_id, 0
        if kind == "shutdown":
            _, payload, reply, _ = msg
            drain = payload.get("drain_timeout_s")
            drain = self.config.drain_timeout_s if drain is None else float(drain)
            if not self._stop_requested:
                self._stop_requested = True
                self.state = RunState.DRAINING
                self._drain_deadline = _clock() + int(drain * 1e9)
            self._shutdown_waiters.append(reply)
            return None, 0
        reply = msg[-2] if len(msg) >= 3 and callable(msg[-2]) else None
        if reply:
            reply({"error": f"unknown command {kind!r}", "kind": "invalid_argument"})
        return None, 0

    def _new_app(self, name: str, mode: AppMode, params: dict) -> AppInstance:
        app = AppInstance(self._next_app, name, mode, params, arrival_ts=_clock())
        self._next_app += 1
        self._apps[app.app_id] = app
        self._live[app.app_id] = app
        app.share_mark = self._share_acc
        return app

    def _submit(self, payload: dict, pending) -> tuple[AppInstance, int]:
        if self._stop_requested or not self._accepting:
            raise RuntimeNotRunning("runtime is shutting down")
        name = payload.get("app")
        try:
            mode = AppMode(str(payload.get("mode", "API")).upper())
        except ValueError:
            raise InvalidArgument(f"unknown mode {payload.get('mode')!r}") from None
        spec = self.registry.get(name)
        params = dict(payload.get("params") or {})
        dag_path = params.pop("dag", None)
        if spec is None:
            raise InvalidArgument(f"unknown application {name!r}; registered: {sorted(self.registry)}")
        resolved = spec.resolve_params(params)
        if mode is AppMode.API:
            app = self._new_app(spec.name, mode, resolved)
            app.state = AppState.RUNNING
            app.thread = threading.Thread(target=self._run_app, args=(app, spec),
                                          name=f"cedr-app{app.app_id}-{spec.name}", daemon=True)
            app.thread.start()
            self._threads_running += 1
            self._live_api += 1
            self._probe.append(app)
            return app, 0

        if dag_path is not None:
            try:
                text = Path(dag_path).read_text()
            except OSError as exc:
                raise InvalidArgument(f"cannot read DAG file {dag_path}: {exc}") from None
        else:
            text = spec.dag_document(resolved)
        dag = parse_dag(text, funcs=spec.funcs)
        s = _cpu()
        frame = spec.dag_buffers(spec.make_frame(resolved), resolved)
        skip = _cpu() - s
        missing = {ref.buf for n in dag.nodes.values() for ref in n.buffer_refs()} - set(frame)
        if missing:
            raise DagParseError(f"DAG references unknown buffers {sorted(missing)}")
        app = self._new_app(spec.name, mode, resolved)
        app.dag, app.frame, app.funcs = dag, frame, spec.funcs
        app.state = AppState.RUNNING
        app.start_ts = _clock()
        if self.config.scheduler.value == "HEFT_RT":
            app.ranks = dag.upward_ranks(self._node_cost)
        self._edges.extend(EdgeRecord(app.app_id, a, b) for a, b in dag.edges())
        for nid in dag.heads():
            self._push_node(app, nid, pending)
        return app, skip

    def _node_cost(self, node) -> float:
        types = self._supported(node.kernel)
        return sum(self.model.estimate(node.kernel, t) for t in types) / len(types)

    def _push_node(self, app: AppInstance, nid: str, pending):
        node = app.dag.nodes[nid]
        app.dag.start(nid)
        task = Task(self._ids.next(), app.app_id, node.kernel, node.bind(app.frame, app.funcs),
                    supported=self._supported(node.kernel), rank_hint=app.ranks.get(nid), node_id=nid)
        task.mark_ready(_clock())
        app.task_count += 1
        app.in_flight += 1
        self._in_flight_total += 1
        pending.append(task)

    def _run_app(self, app: AppInstance, spec):
        result, error = None, None
        with api.bind(self, app.app_id) as ctx:
            try:
                frame = spec.make_frame(app.params)
                app.start_ts = _clock()
                result = spec.run(frame, app.params)
            except Exception as exc:
                error = f"{type(exc).__name__}: {exc}"
            error = error or self._settle_orphans(ctx)
        app.reported = True
        self.post(("app_exit", app.app_id, result, error, _clock()))

    @staticmethod
    def _settle_orphans(ctx) -> Optional[str]:
        orphans = ctx.orphans()
        if not orphans:
            return None
        # buffers stay leased until the runtime is done with them
        for h in orphans:
            h.task.completion.wait()
        return f"{len(orphans)} non-blocking task(s) never waited before exit"

    # ----------------------------------------------------------- completions

    def _handle_completion(self, task: Task, pending):
        pe_id = task.assigned_pe
        est = self._estimate.pop(task.task_id, 0)
        self._pe_pending[pe_id] -= est
        self.pes[pe_id].advance(_clock() + self._pe_pending[pe_id])
        app = self._apps.get(task.app_id)
        if app is None:
            return
        app.in_flight -= 1
        self._in_flight_total -= 1
        if task.state is TaskState.ERROR:
            app.error = app.error or f"task {task.task_id} ({task.kernel}) failed: {task.error}"
        if app.mode is AppMode.DAG and not app.finished:
            if app.error is None and task.node_id is not None:
                for nid in app.dag.release_ready(task.node_id):
                    self._push_node(app, nid, pending)
                if app.dag.complete:
                    app.end_ts = task.complete_ts
            if app.dag.complete or (app.error is not None and app.in_flight == 0):
                app.exited = True
                if app.end_ts is None:
                    app.end_ts = task.complete_ts
        self._try_finish(app)

    def _try_finish(self, app: AppInstance):
        if app.finished or not app.exited or app.in_flight > 0:
            return
        if app.mode is AppMode.DAG and app.error is None:
            spec = self.registry.get(app.name)
            app.result = spec.dag_result(app.frame, app.params) if spec else None
        app.state = AppState.DONE
        self._done_count += 1
        self._retire(app)
        app.done.set()

    # ------------------------------------------------------------ scheduling

    def _schedule(self, pending: deque, seq: int, events: Counter) -> int:
        n = min(len(pending), self.config.scheduler_batch_max)
        batch = [pending.popleft() for _ in range(n)]
        queue_len = n + len(pending)
        now = _clock()
        slots = [PeSlot(pe.id, pe.pe_type, pe.busy_until) for pe in self.pes]
        snap = ScheduleSnapshot(batch, slots, now, self.model)
        s = _cpu()
        assignments = self.scheduler(snap)
        decision = _cpu() - s
        per_app = Counter(t.app_id for t in batch)
        for app_id, k in per_app.items():
            app = self._apps.get(app_id)
            if app is not None:
                events[app_id] += k
        now = _clock()
        for a in assignments:
            task = a.task
            pe = self.pes[a.pe_id]
            task.mark_running(a.pe_id, now)
            pe.assigned_count += 1
            pe.advance(a.predicted_finish)
            est = a.predicted_finish - a.predicted_start
            self._estimate[task.task_id] = est
            self._pe_pending[a.pe_id] += est
            self._queues[a.pe_id].put(task)
        self._sched_log.append(InvocationRecord(seq, now, queue_len, len(assignments), decision,
                                                encode_app_tasks(per_app)))
        return decision

    # --------------------------------------------------------------- shutdown

    def _stop(self, pending: deque):
        with self._cond:
            self._accepting = False
            pending.extend(self._ready)
            self._ready.clear()
        now = _clock()
        unstarted = list(pending)
        for q in self._queues:
            while True:
                try:
                    unstarted.append(q.get_nowait())
                except queue.Empty:
                    break
            q.put(None)
        for task in unstarted:
            task.mark_error(now, api.TERMINATED)
            task.completion.set()
            self._orphan_records.append(self._task_record(task, -1 if task.assigned_pe is None else task.assigned_pe,
                                                          "", "INCOMPLETE"))
        for t in self._workers:
            t.join()
        with self._cond:
            late = list(self._completions)
            self._completions.clear()
        for task in late:
            self._handle_completion(task, deque())
        for app in self._apps.values():
            if not app.finished:
                self._retire(app)
                app.state = AppState.INCOMPLETE
                app.error = app.error or "runtime stopped before the application finished"
                app.done.set()
        self._final_log = self._build_log()
        log_dir = None
        if self.config.log_path:
            log_dir = str(self._final_log.write(self.config.log_path))
        incomplete = [a.app_id for a in self._apps.values() if a.state is AppState.INCOMPLETE]
        self.state = RunState.STOPPED
        if self._old_switch is not None:
            sys.setswitchinterval(self._old_switch)
        for reply in self._shutdown_waiters:
            reply({"ok": True, "log_path": log_dir, "incomplete": incomplete})
        self._stopped.set()
        log.info("runtime stopped: %d apps, %d incomplete", len(self._apps), len(incomplete))

    def _build_log(self) -> ExecutionLog:
        tasks = [r for recs in self._records for r in recs] + self._orphan_records
        tasks.sort(key=lambda r: r.task_id)
        apps = [
            AppRecord(a.app_id, a.name, a.mode.value, a.arrival_ts,
                      -1 if a.start_ts is None else a.start_ts,
                      -1 if a.end_ts is None or a.state is AppState.INCOMPLETE else a.end_ts,
                      a.state.value, a.task_count, int(round(a.mgmt_ns)), a.error or "")
            for a in self._apps.values()
        ]
        header = {
            "config": self.config.to_dict(),
            "cost_model_digest": self.model.digest(),
            "wall_clock_start": self._wall_start,
            "host_cores": len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count(),
            "pinned": self.pinned,
            "pes": [{"id": pe.id, "type": pe.pe_type.value} for pe in self.pes],
            "unattributed_mgmt_ns": int(self._unattributed_ns),
            "mgmt_breakdown": {k: int(v) for k, v in sorted(self._breakdown.items())},
        }
        return ExecutionLog(header, tasks, apps, list(self._sched_log), list(self._edges))

