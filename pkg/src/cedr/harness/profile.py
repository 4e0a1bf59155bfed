"""Cost-model profiling: time kernels on the host, derive emulated PE rows.

CPU rows are host medians multiplied by ``cpu_scale`` (the emulated cores
are slower than the host); accelerator rows divide the CPU row by a
per-accelerator speedup factor.
"""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..kernels import run_kernel
from ..model import SUPPORT, CostModel, KernelId, KernelName, PeType

log = logging.getLogger(__name__)

DEFAULT_SPEEDUPS = {PeType.FFT_ACC: 8.0, PeType.GPU_ACC: 4.0, PeType.MMULT_ACC: 8.0}
DEFAULT_CPU_SCALE = 32.0
# FUNC tasks are application code; the runtime never charges them, so the
# scheduler only needs a nominal figure.
FUNC_NOMINAL_NS = 20_000


@dataclass
class ProfileSpec:
    fft_sizes: list[int] = field(default_factory=lambda: [1 << k for k in range(3, 12)])
    zip_sizes: list[int] = field(default_factory=lambda: [1 << k for k in range(4, 21, 2)])
    gemm_sizes: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    conv_sizes: list[tuple[int, int, int]] = field(default_factory=lambda: [(16, 16, 3), (64, 64, 3)])
    runs: int = 11
    min_sample_ns: int = 50_000
    cpu_scale: float = DEFAULT_CPU_SCALE
    speedups: dict = field(default_factory=lambda: dict(DEFAULT_SPEEDUPS))


def _args(kernel: KernelName, size: tuple[int, ...], rng: np.random.Generator) -> dict:
    def cvec(n):
        return rng.standard_normal(n) + 1j * rng.standard_normal(n)

    if kernel in (KernelName.FFT, KernelName.IFFT):
        return {"input": cvec(size[0]), "output": np.empty(size[0], dtype=np.complex128)}
    if kernel is KernelName.ZIP:
        return {"a": cvec(size[0]), "b": cvec(size[0]), "output": np.empty(size[0], dtype=np.complex128)}
    if kernel is KernelName.GEMM:
        m, k, n = size
        return {"A": rng.standard_normal((m, k)), "B": rng.standard_normal((k, n)), "C": np.empty((m, n))}
    if kernel is KernelName.CONV2D:
        h, w, d = size
        return {"input": rng.standard_normal((h, w)), "mask": rng.standard_normal((d, d)), "output": np.empty((h, w))}
    raise ValueError(kernel)


class _Probe:
    """One kernel/size under measurement, with its batch size fixed up front."""

    def __init__(self, kernel: KernelName, size: tuple[int, ...], min_sample_ns: int, rng: np.random.Generator):
        self.kernel = kernel
        self.args = _args(kernel, size, rng)
        run_kernel(kernel, self.args)  # warm caches and FFT plans
        t0 = time.perf_counter_ns()
        run_kernel(kernel, self.args)
        single = max(1, time.perf_counter_ns() - t0)
        self.repeat = 1
        if single < min_sample_ns:
            self.repeat = -(-min_sample_ns // single)
            log.debug("%s%s takes %d ns; timing batches of %d calls", kernel.value, size, single, self.repeat)
        self.samples: list[float] = []

    def sample(self):
        run_kernel(self.kernel, self.args)  # rewarm caches after the previous probe
        t0 = time.perf_counter_ns()
        for _ in range(self.repeat):
            run_kernel(self.kernel, self.args)
        self.samples.append((time.perf_counter_ns() - t0) / self.repeat)

    def median(self) -> int:
        return max(1, round(statistics.median(self.samples)))


def time_kernel(kernel: KernelName, size: tuple[int, ...], runs: int = 11, min_sample_ns: int = 50_000,
                rng: Optional[np.random.Generator] = None) -> int:
    """Median host time of one call, batching calls when a single one is too short to time."""
    probe = _Probe(kernel, size, min_sample_ns, rng or np.random.default_rng(0))
    for _ in range(runs):
        probe.sample()
    return probe.median()


def host_table(spec: ProfileSpec) -> dict[tuple[KernelName, tuple[int, ...]], int]:
    """Median host time per kernel/size.

    Samples are taken in rounds over the whole plan rather than kernel by
    kernel, so a transient slowdown of the host touches a few samples of
    every entry instead of all samples of a few entries. Each round's common
    speed factor (its median sample-to-entry-median ratio) is then divided
    out before the final per-entry median.
    """
    rng = np.random.default_rng(0)
    plan = []
    for n in spec.fft_sizes:
        plan += [(KernelName.FFT, (n,)), (KernelName.IFFT, (n,))]
    plan += [(KernelName.ZIP, (n,)) for n in spec.zip_sizes]
    plan += [(KernelName.GEMM, (n, n, n)) for n in spec.gemm_sizes]
    plan += [(KernelName.CONV2D, tuple(s)) for s in spec.conv_sizes]
    probes = {(k, s): _Probe(k, s, spec.min_sample_ns, rng) for k, s in plan}
    for _ in range(spec.runs):
        for probe in probes.values():
            probe.sample()
    samples = np.array([probe.samples for probe in probes.values()])
    ratios = samples / np.median(samples, axis=1, keepdims=True)
    corrected = samples / np.median(ratios, axis=0, keepdims=True)
    return {key: max(1, round(float(m))) for key, m in zip(probes, np.median(corrected, axis=1))}


def build_cost_model(host: dict, cpu_scale: float = DEFAULT_CPU_SCALE, speedups: Optional[dict] = None) -> CostModel:
    """Turn host medians into emulated CPU rows plus derived accelerator rows."""
    speedups = DEFAULT_SPEEDUPS if speedups is None else {PeType(k): float(v) for k, v in speedups.items()}
    table = {}
    for (kernel, size), ns in host.items():
        bucket = KernelId(kernel, size).bucket
        cpu = max(1, round(ns * cpu_scale))
        table[(kernel, bucket, PeType.CPU)] = cpu
        for pe_type, factor in speedups.items():
            if kernel in SUPPORT[pe_type]:
                table[(kernel, bucket, pe_type)] = max(1, round(cpu / factor))
    table[(KernelName.FUNC, (1,), PeType.CPU)] = FUNC_NOMINAL_NS
    return CostModel(table)


def profile_cost_model(spec: Optional[ProfileSpec] = None) -> CostModel:
    spec = spec or ProfileSpec()
    t0 = time.monotonic()
    model = build_cost_model(host_table(spec), spec.cpu_scale, spec.speedups)
    log.info("profiled %d cost-model rows in %.1f s", len(model.table), time.monotonic() - t0)
    return model
