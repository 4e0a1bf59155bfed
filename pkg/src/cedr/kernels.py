"""Portable kernel implementations and the emulated-PE execution path.

Every PE runs the same software implementation, so results are identical
bit-for-bit no matter where a task lands.  Emulated PEs differ only in the
time they are charged: after computing, a worker sleeps until the task has
taken its modeled duration.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import InvalidArgument, InvariantViolation
from .model import ChargeMode, CostModel, KernelId, KernelName, PeType, ProcessingElement, Task, is_pow2

log = logging.getLogger(__name__)

MAX_FFT_SIZE = 1 << 20


@lru_cache(maxsize=None)
def _plan(n: int):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    stages = []
    m = 1
    while m < n:
        w = np.exp(-1j * np.pi * np.arange(m) / m)
        stages.append((m, w, np.conj(w)))
        m *= 2
    return rev, tuple(stages)


def fft(x, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT.

    The inverse transform is scaled by 1/N.  The input is never modified.
    """
    x = np.asarray(x)
    if x.ndim != 1:
        raise InvalidArgument(f"fft expects a 1-D buffer, got shape {x.shape}")
    n = x.shape[0]
    if not is_pow2(n) or n > MAX_FFT_SIZE:
        raise InvalidArgument(f"fft length must be a power of two <= {MAX_FFT_SIZE}, got {n}")
    rev, stages = _plan(n)
    # fancy indexing always copies, so the caller's buffer is never touched
    a = x[rev].astype(np.complex128, copy=False)
    for m, w, wc in stages:
        b = a.reshape(n // (2 * m), 2, m)
        t = b[:, 1, :] * (wc if inverse else w)
        b[:, 1, :] = b[:, 0, :] - t
        b[:, 0, :] += t
    if inverse:
        a /= n
    return a


def ifft(x) -> np.ndarray:
    return fft(x, inverse=True)


def zip_(a, b) -> np.ndarray:
    """Element-wise complex product."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InvalidArgument(f"zip operands differ in shape: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InvalidArgument("zip of empty buffers")
    a = a.astype(np.complex128, copy=False)
    b = b.astype(np.complex128, copy=False)
    # spelled out so rounding matches the scalar (ac - bd) + (ad + bc)i on every host;
    # the vectorised complex multiply may fuse operations
    out = np.empty(a.shape, dtype=np.complex128)
    out.real = a.real * b.real - a.imag * b.imag
    out.imag = a.real * b.imag + a.imag * b.real
    return out


def gemm(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise InvalidArgument(f"gemm dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def conv_canvas(height: int, width: int) -> tuple[int, int]:
    """Power-of-two canvas the frequency-domain convolution runs on."""
    return 1 << (height - 1).bit_length(), 1 << (width - 1).bit_length()


def check_conv_args(image, mask):
    image = np.asarray(image)
    mask = np.asarray(mask)
    if image.ndim != 2 or mask.ndim != 2:
        raise InvalidArgument("conv2d expects 2-D image and mask")
    m = mask.shape[0]
    if mask.shape != (m, m) or m % 2 == 0:
        raise InvalidArgument(f"mask must be square with odd side, got {mask.shape}")
    if m > min(image.shape):
        raise InvalidArgument(f"mask side {m} exceeds image dims {image.shape}")
    return image, mask


def pad_image(image, hp: int, wp: int) -> np.ndarray:
    canvas = np.zeros((hp, wp), dtype=np.complex128)
    canvas[: image.shape[0], : image.shape[1]] = image
    return canvas


def place_mask(mask, hp: int, wp: int) -> np.ndarray:
    """Zero-pad the mask to the canvas with its centre moved to the origin."""
    c = mask.shape[0] // 2
    canvas = np.zeros((hp, wp), dtype=np.complex128)
    canvas[: mask.shape[0], : mask.shape[1]] = mask
    return np.roll(canvas, (-c, -c), axis=(0, 1))


def fft2(a, inverse: bool = False) -> np.ndarray:
    """2-D transform as independent row transforms followed by column transforms."""
    out = np.empty(a.shape, dtype=np.complex128)
    for r in range(a.shape[0]):
        out[r, :] = fft(a[r, :], inverse)
    for c in range(a.shape[1]):
        out[:, c] = fft(out[:, c], inverse)
    return out


def conv2d_freq(image, mask) -> np.ndarray:
    """Circular 2-D convolution computed as IFFT(ZIP(FFT(image), FFT(mask))).

    The image is zero-padded to a power-of-two canvas (a no-op when both
    dimensions already are), so for power-of-two images the result is the
    exact circular convolution with the mask centred on each pixel.
    """
    image, mask = check_conv_args(image, mask)
    h, w = image.shape
    hp, wp = conv_canvas(h, w)
    fi = fft2(pad_image(image, hp, wp))
    fm = fft2(place_mask(mask, hp, wp))
    prod = zip_(fi.reshape(-1), fm.reshape(-1)).reshape(hp, wp)
    return fft2(prod, inverse=True).real[:h, :w].copy()


KERNEL_ARGS = {
    KernelName.FFT: ("input", "output"),
    KernelName.IFFT: ("input", "output"),
    KernelName.ZIP: ("a", "b", "output"),
    KernelName.GEMM: ("A", "B", "C"),
    KernelName.CONV2D: ("input", "mask", "output"),
    KernelName.FUNC: ("func",),
}


def size_key(kernel: KernelName, args: dict) -> tuple[int, ...]:
    """Problem-size descriptor derived from a task's argument bundle."""
    if kernel in (KernelName.FFT, KernelName.IFFT):
        return (int(np.shape(args["input"])[0]),)
    if kernel is KernelName.ZIP:
        return (int(np.size(args["a"])),)
    if kernel is KernelName.GEMM:
        ra, ca = np.shape(args["A"])
        return (ra, ca, int(np.shape(args["B"])[1]))
    if kernel is KernelName.CONV2D:
        h, w = np.shape(args["input"])
        return (h, w, int(np.shape(args["mask"])[0]))
    return (int(args.get("size", 1)),)


def run_kernel(kernel: KernelName, args: dict):
    """Execute one kernel invocation, writing into the caller's output buffer."""
    if kernel is KernelName.FFT:
        args["output"][...] = fft(args["input"])
    elif kernel is KernelName.IFFT:
        args["output"][...] = fft(args["input"], inverse=True)
    elif kernel is KernelName.ZIP:
        args["output"][...] = zip_(args["a"], args["b"])
    elif kernel is KernelName.GEMM:
        args["C"][...] = gemm(args["A"], args["B"])
    elif kernel is KernelName.CONV2D:
        args["output"][...] = conv2d_freq(args["input"], args["mask"])
    elif kernel is KernelName.FUNC:
        args["func"](**args.get("kwargs", {}))
    else:  # pragma: no cover - enum is closed
        raise InvalidArgument(f"unknown kernel {kernel}")


@dataclass
class AcceleratorProfile:
    """How emulated PEs are charged for a task.

    ``charge_cpu`` extends latency charging to CPU PEs so that the emulated
    CPUs run on the cost model's timeline too (the host is much faster than
    the embedded cores being modeled, and may have fewer cores than the
    roster).  ``max_fft`` optionally caps the FFT size accelerators accept.
    """

    model: Optional[CostModel]
    charge_mode: ChargeMode = ChargeMode.SLEEP_REMAINDER
    charge_cpu: bool = True
    max_fft: Optional[int] = None

    def modeled_ns(self, kernel: KernelId, pe_type: PeType) -> int:
        if self.model is None or kernel.name is KernelName.FUNC:
            return 0
        if pe_type is PeType.CPU and not self.charge_cpu:
            return 0
        return self.model.estimate(kernel, pe_type) or 0

    def accepts(self, kernel: KernelId, pe_type: PeType) -> bool:
        if self.max_fft is None or not pe_type.is_accelerator:
            return True
        if kernel.name in (KernelName.FFT, KernelName.IFFT):
            return kernel.size[0] <= self.max_fft
        return True


@dataclass
class CompletionRecord:
    task_id: int
    pe_id: int
    dispatch_ts: int
    complete_ts: int
    compute_ns: int
    charged_ns: int


def execute_on_pe(task: Task, pe: ProcessingElement, profile: AcceleratorProfile) -> CompletionRecord:
    """Run ``task`` as if on ``pe``: compute in software, then charge modeled latency."""
    if pe.pe_type not in task.supported or not pe.supports(task.name):
        raise InvariantViolation(f"task {task.task_id} ({task.kernel}) routed to unsupported {pe.pe_type}")
    start = time.monotonic_ns()
    run_kernel(task.name, task.args)
    computed = time.monotonic_ns()
    compute_ns = computed - start
    modeled = profile.modeled_ns(task.kernel, pe.pe_type)
    if profile.charge_mode is ChargeMode.SLEEP_FULL:
        charge = modeled
    else:
        charge = modeled - compute_ns
    if charge > 0:
        time.sleep(charge / 1e9)
    end = time.monotonic_ns()
    return CompletionRecord(task.task_id, pe.id, start, end, compute_ns, max(charge, 0))
