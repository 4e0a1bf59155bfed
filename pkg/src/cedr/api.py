"""Application-facing kernel API.

Blocking calls (``cedr_fft`` and friends) return once the output buffer is
filled.  The ``_nb`` variants return a :class:`TaskHandle` immediately; the
caller must not touch the output buffer until the handle has been waited on.

When the calling thread is bound to a running runtime (application threads
always are), each call becomes a task routed through the scheduler.  With no
binding the kernels run inline on the caller's thread, so the same
application code works as a plain library.
"""

from __future__ import annotations

import enum
import threading
import time
from contextlib import contextmanager
from typing import Optional

import numpy as np

from . import kernels
from .errors import InvalidArgument, RuntimeTerminated, TaskFailed, UsageError
from .model import KernelId, KernelName, Task, TaskState

_local = threading.local()

TERMINATED = "runtime terminated"


class Status(str, enum.Enum):
    PENDING = "PENDING"
    OK = "OK"
    ERROR = "ERROR"


class AppContext:
    """Binding of one application thread to a runtime instance."""

    def __init__(self, runtime, app_id: int):
        self.runtime = runtime
        self.app_id = app_id
        self.handles: list[TaskHandle] = []

    def orphans(self) -> list["TaskHandle"]:
        return [h for h in self.handles if not h.waited]


def current() -> Optional[AppContext]:
    return getattr(_local, "ctx", None)


@contextmanager
def bind(runtime, app_id: int):
    """Route kernel calls made on this thread to ``runtime`` as app ``app_id``."""
    prev = current()
    ctx = AppContext(runtime, app_id)
    _local.ctx = ctx
    try:
        yield ctx
    finally:
        _local.ctx = prev


class TaskHandle:
    """One-shot completion handle for a non-blocking kernel call."""

    def __init__(self, task: Task):
        self.task = task
        self.waited = False
        self._lock = threading.Lock()

    @property
    def task_id(self) -> int:
        return self.task.task_id

    @property
    def status(self) -> Status:
        if not self.task.completion.is_set():
            return Status.PENDING
        return Status.OK if self.task.state is TaskState.COMPLETE else Status.ERROR

    @property
    def error(self) -> Optional[str]:
        return self.task.error

    def wait(self, timeout: Optional[float] = None) -> Status:
        with self._lock:
            if self.waited:
                raise UsageError(f"handle for task {self.task_id} was already waited on")
            self.waited = True
        if not self.task.completion.wait(timeout):
            with self._lock:
                self.waited = False
            raise TimeoutError(f"task {self.task_id} did not complete within {timeout}s")
        return self.status

    def __repr__(self):
        return f"TaskHandle(task={self.task_id}, {self.status.value})"


def _standalone(kernel: KernelId, args: dict) -> TaskHandle:
    task = Task(0, 0, kernel, args)
    now = time.monotonic_ns()
    task.mark_ready(now)
    task.mark_running(-1, now)
    task.dispatch_ts = now
    try:
        kernels.run_kernel(kernel.name, args)
    except Exception as exc:
        task.mark_error(time.monotonic_ns(), f"{type(exc).__name__}: {exc}")
    else:
        task.mark_complete(time.monotonic_ns())
    task.completion.set()
    return TaskHandle(task)


def _check_args(kernel: KernelName, args: dict):
    missing = [a for a in kernels.KERNEL_ARGS[kernel] if a not in args]
    if missing:
        raise InvalidArgument(f"{kernel} missing arguments {missing}")
    if kernel in (KernelName.FFT, KernelName.IFFT):
        src, dst = np.asarray(args["input"]), args["output"]
        if src.ndim != 1 or not kernels.is_pow2(src.shape[0]):
            raise InvalidArgument(f"{kernel} input must be 1-D with power-of-two length, got {src.shape}")
        if np.shape(dst) != src.shape:
            raise InvalidArgument(f"{kernel} output shape {np.shape(dst)} != input shape {src.shape}")
    elif kernel is KernelName.ZIP:
        if np.shape(args["a"]) != np.shape(args["b"]) or np.shape(args["output"]) != np.shape(args["a"]):
            raise InvalidArgument("zip operands and output must share a shape")
    elif kernel is KernelName.GEMM:
        a, b, c = np.shape(args["A"]), np.shape(args["B"]), np.shape(args["C"])
        if len(a) != 2 or len(b) != 2 or a[1] != b[0] or c != (a[0], b[1]):
            raise InvalidArgument(f"gemm dimension mismatch: {a} x {b} -> {c}")
    elif kernel is KernelName.CONV2D:
        kernels.check_conv_args(args["input"], args["mask"])
        if np.shape(args["output"]) != np.shape(args["input"]):
            raise InvalidArgument("conv2d output must match the image shape")


def enqueue_kernel(kernel, args: dict) -> TaskHandle:
    """Submit one kernel invocation; returns without waiting for it."""
    try:
        name = KernelName(kernel)
    except ValueError:
        raise InvalidArgument(f"unknown kernel {kernel!r}") from None
    _check_args(name, args)
    kid = KernelId(name, kernels.size_key(name, args))
    ctx = current()
    if ctx is None:
        return _standalone(kid, args)
    handle = TaskHandle(ctx.runtime.enqueue(ctx.app_id, kid, args))
    ctx.handles.append(handle)
    return handle


def wait(handle: TaskHandle) -> Status:
    return handle.wait()


def wait_all(handles) -> list[Status]:
    return [h.wait() for h in handles]


def _raise_for(handles, statuses):
    for h, s in zip(handles, statuses):
        if s is Status.ERROR:
            if h.error == TERMINATED:
                raise RuntimeTerminated(f"task {h.task_id}: runtime terminated")
            raise TaskFailed(f"task {h.task_id} ({h.task.kernel}) failed: {h.error}")


def wait_all_ok(handles) -> None:
    """wait_all, then raise for the first errored handle."""
    handles = list(handles)
    _raise_for(handles, wait_all(handles))


def _blocking(kernel: KernelName, args: dict):
    h = enqueue_kernel(kernel, args)
    _raise_for([h], [h.wait()])


def cedr_fft(input, output):
    _blocking(KernelName.FFT, {"input": input, "output": output})


def cedr_ifft(input, output):
    _blocking(KernelName.IFFT, {"input": input, "output": output})


def cedr_zip(a, b, output):
    _blocking(KernelName.ZIP, {"a": a, "b": b, "output": output})


def cedr_gemm(A, B, C):
    _blocking(KernelName.GEMM, {"A": A, "B": B, "C": C})


def cedr_fft_nb(input, output) -> TaskHandle:
    return enqueue_kernel(KernelName.FFT, {"input": input, "output": output})


def cedr_ifft_nb(input, output) -> TaskHandle:
    return enqueue_kernel(KernelName.IFFT, {"input": input, "output": output})


def cedr_zip_nb(a, b, output) -> TaskHandle:
    return enqueue_kernel(KernelName.ZIP, {"a": a, "b": b, "output": output})


def cedr_gemm_nb(A, B, C) -> TaskHandle:
    return enqueue_kernel(KernelName.GEMM, {"A": A, "B": B, "C": C})


def cedr_conv2d_nb(input, mask, output) -> TaskHandle:
    """Whole convolution as one schedulable CONV2D task."""
    return enqueue_kernel(KernelName.CONV2D, {"input": input, "mask": mask, "output": output})


def _transform_2d(bufs, inverse: bool):
    """Row transforms of every buffer, then column transforms, in place."""
    nb = cedr_ifft_nb if inverse else cedr_fft_nb
    for axis in (0, 1):
        handles = []
        for buf in bufs:
            lines = buf if axis == 0 else buf.T
            handles.extend(nb(line, line) for line in lines)
        wait_all_ok(handles)


def cedr_conv2d(input, mask, output):
    """Frequency-domain 2-D convolution split into per-row/column FFT tasks.

    Row and column FFTs of the image and mask are issued non-blocking, the
    spectra are multiplied by one ZIP task, and the product is transformed
    back the same way.  The arithmetic matches ``kernels.conv2d_freq``
    operation for operation.
    """
    _check_args(KernelName.CONV2D, {"input": input, "mask": mask, "output": output})
    image, mask = kernels.check_conv_args(input, mask)
    h, w = image.shape
    hp, wp = kernels.conv_canvas(h, w)
    fi = kernels.pad_image(image, hp, wp)
    fm = kernels.place_mask(mask, hp, wp)
    _transform_2d([fi, fm], inverse=False)
    prod = np.empty(hp * wp, dtype=np.complex128)
    cedr_zip(fi.reshape(-1), fm.reshape(-1), prod)
    prod = prod.reshape(hp, wp)
    _transform_2d([prod], inverse=True)
    output[...] = prod.real[:h, :w]
