"""Pulse Doppler: range FFT per pulse, then Doppler FFT per range bin."""

from __future__ import annotations

from collections import Counter

import numpy as np

from .. import api
from ..model import KernelName
from .base import BITS_PER_COMPLEX, AppSpec, func_node, node, require_pow2


def synthetic_returns(num_pulses: int, samples: int, range_bin: int, doppler_bin: int,
                      noise: float, rng: np.random.Generator) -> np.ndarray:
    """Point target: x[p, s] = exp(2j*pi*(range_bin*s/S + doppler_bin*p/P)) plus noise."""
    p = np.arange(num_pulses)[:, None]
    s = np.arange(samples)[None, :]
    x = np.exp(2j * np.pi * (range_bin * s / samples + doppler_bin * p / num_pulses))
    if noise:
        x = x + noise * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    return x.astype(np.complex128)


def corner_turn(frame: dict):
    frame["range_t"][...] = frame["range"].T


def magnitude(frame: dict):
    frame["map"][...] = np.abs(frame["doppler"]).T


class PulseDoppler(AppSpec):
    name = "pulse_doppler"
    aliases = ("pd",)
    defaults = {"num_pulses": 64, "samples": 64, "range_bin": 10, "doppler_bin": 5, "noise": 0.05}
    full_scale_params = {"num_pulses": 256, "samples": 256}
    funcs = {"pd_corner_turn": corner_turn, "pd_magnitude": magnitude}

    def validate(self, p):
        require_pow2(self.name, num_pulses=p["num_pulses"], samples=p["samples"])

    def make_frame(self, p):
        x = synthetic_returns(p["num_pulses"], p["samples"], p["range_bin"] % p["samples"],
                              p["doppler_bin"] % p["num_pulses"], p["noise"], self.rng(p))
        return {"samples": x}

    def run(self, frame, p):
        x = frame["samples"]
        n_p, n_s = x.shape
        rng = np.empty((n_p, n_s), dtype=np.complex128)
        handles = [api.cedr_fft_nb(x[i], rng[i]) for i in range(n_p)]
        api.wait_all_ok(handles)
        turned = np.ascontiguousarray(rng.T)
        doppler = np.empty((n_s, n_p), dtype=np.complex128)
        handles = [api.cedr_fft_nb(turned[j], doppler[j]) for j in range(n_s)]
        api.wait_all_ok(handles)
        return np.abs(doppler).T

    def dag_nodes(self, p):
        n_p, n_s = p["num_pulses"], p["samples"]
        nodes = [node(f"range_{i}", KernelName.FFT, [n_s], {"input": f"samples[{i}]", "output": f"range[{i}]"},
                      ["corner_turn"]) for i in range(n_p)]
        nodes.append(func_node("corner_turn", "pd_corner_turn", [f"doppler_{j}" for j in range(n_s)]))
        nodes += [node(f"doppler_{j}", KernelName.FFT, [n_p], {"input": f"range_t[{j}]", "output": f"doppler[{j}]"},
                       ["magnitude"]) for j in range(n_s)]
        nodes.append(func_node("magnitude", "pd_magnitude"))
        return nodes

    def dag_buffers(self, frame, p):
        n_p, n_s = p["num_pulses"], p["samples"]
        return {
            "samples": frame["samples"],
            "range": np.empty((n_p, n_s), dtype=np.complex128),
            "range_t": np.empty((n_s, n_p), dtype=np.complex128),
            "doppler": np.empty((n_s, n_p), dtype=np.complex128),
            "map": np.empty((n_p, n_s), dtype=np.float64),
        }

    def dag_result(self, buffers, p):
        return buffers["map"]

    def frame_mb(self, p):
        return p["num_pulses"] * p["samples"] * BITS_PER_COMPLEX / 1e6

    def task_counts(self, p, mode="API"):
        counts = Counter({KernelName.FFT: p["num_pulses"] + p["samples"]})
        if mode == "DAG":
            counts[KernelName.FUNC] = 2
        return counts


def peak(rd_map: np.ndarray) -> tuple[int, int]:
    """(doppler_bin, range_bin) of the strongest cell."""
    d, r = np.unravel_index(int(np.argmax(rd_map)), rd_map.shape)
    return int(d), int(r)


APP = PulseDoppler()
