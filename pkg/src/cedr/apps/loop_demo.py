"""A loop of FFT -> ZIP -> IFFT kernels.

API mode exposes every kernel call in the loop to the scheduler.  The DAG
twin can only express the loop as one fused node, which runs on a CPU.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from .. import api, kernels
from ..model import KernelName
from .base import BITS_PER_COMPLEX, AppSpec, func_node, require_pow2, require_positive


def lowpass(size: int) -> np.ndarray:
    k = np.fft.fftfreq(size)
    return np.exp(-16.0 * k * k).astype(np.complex128)


def checksum(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x)))


def _fused(frame: dict, iterations: int):
    x = frame["signal"].copy()
    h = frame["filter"]
    for _ in range(iterations):
        x = kernels.ifft(kernels.zip_(kernels.fft(x), h))
    frame["out"][...] = x
    frame["checksum"][0] = checksum(x)


class LoopDemo(AppSpec):
    name = "loop_demo"
    aliases = ("loop",)
    defaults = {"iterations": 10, "size": 256}
    full_scale_params = {}
    funcs = {"loop_fused": _fused}

    def validate(self, p):
        require_positive(self.name, iterations=p["iterations"])
        require_pow2(self.name, size=p["size"])

    def make_frame(self, p):
        rng = self.rng(p)
        n = p["size"]
        return {"signal": rng.standard_normal(n) + 1j * rng.standard_normal(n), "filter": lowpass(n)}

    def run(self, frame, p):
        x = frame["signal"].copy()
        spec = np.empty_like(x)
        prod = np.empty_like(x)
        for _ in range(p["iterations"]):
            api.cedr_fft(x, spec)
            api.cedr_zip(spec, frame["filter"], prod)
            api.cedr_ifft(prod, x)
        return checksum(x)

    def dag_nodes(self, p):
        return [func_node("loop", "loop_fused", iterations=p["iterations"])]

    def dag_buffers(self, frame, p):
        return {**frame, "out": np.empty(p["size"], dtype=np.complex128), "checksum": np.zeros(1)}

    def dag_result(self, buffers, p):
        return float(buffers["checksum"][0])

    def frame_mb(self, p):
        return p["size"] * BITS_PER_COMPLEX / 1e6

    def task_counts(self, p, mode="API"):
        if mode == "DAG":
            return Counter({KernelName.FUNC: 1})
        n = p["iterations"]
        return Counter({KernelName.FFT: n, KernelName.ZIP: n, KernelName.IFFT: n})


APP = LoopDemo()
