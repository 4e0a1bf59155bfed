"""WiFi TX: scramble, convolutionally encode, BPSK map and IFFT each 64-bit packet."""

from __future__ import annotations

from collections import Counter
from functools import lru_cache

import numpy as np

from .. import api
from ..errors import InvalidArgument
from ..model import KernelName
from .base import BITS_PER_COMPLEX, AppSpec, func_node, node, require_positive

PACKET_BITS = 64
SYMBOL_LEN = 2 * PACKET_BITS
DEFAULT_SEED = 0b1011101
# Generator taps for delays 0..6, newest bit first (133 and 171 octal).
G0 = np.array([1, 0, 1, 1, 0, 1, 1], dtype=np.uint8)
G1 = np.array([1, 1, 1, 1, 0, 0, 1], dtype=np.uint8)


@lru_cache(maxsize=None)
def scrambler_sequence(seed: int, length: int) -> np.ndarray:
    """Output of the x^7 + x^4 + 1 LFSR started from the 7-bit ``seed``."""
    state = seed & 0x7F
    out = np.empty(length, dtype=np.uint8)
    for i in range(length):
        bit = ((state >> 6) ^ (state >> 3)) & 1
        out[i] = bit
        state = ((state << 1) | bit) & 0x7F
    out.setflags(write=False)
    return out


def scramble(bits, seed: int = DEFAULT_SEED) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ scrambler_sequence(seed, bits.size)


def conv_encode(bits) -> np.ndarray:
    """Rate-1/2, constraint-length-7 encoder starting from the all-zero state.

    Output bits are interleaved as a0 b0 a1 b1 ...; no tail bits are added.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    a = np.convolve(bits, G0)[:n] & 1
    b = np.convolve(bits, G1)[:n] & 1
    out = np.empty(2 * n, dtype=np.uint8)
    out[0::2] = a
    out[1::2] = b
    return out


def bpsk(bits) -> np.ndarray:
    return np.asarray(bits, dtype=np.float64) * 2.0 - 1.0 + 0j


def modulate_packet(bits, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Frequency-domain symbol for one packet (input of the per-packet IFFT)."""
    return bpsk(conv_encode(scramble(bits, seed)))


def encode_packet(frame: dict, packet: int, seed: int = DEFAULT_SEED):
    bits = frame["payload"][packet * PACKET_BITS:(packet + 1) * PACKET_BITS]
    frame["symbols_in"][packet] = modulate_packet(bits, seed)


class WifiTx(AppSpec):
    name = "wifi_tx"
    aliases = ("tx",)
    defaults = {"num_packets": 16, "scrambler_seed": DEFAULT_SEED, "zero_payload": False}
    full_scale_params = {"num_packets": 100}
    funcs = {"tx_encode": encode_packet}

    def validate(self, p):
        if p["num_packets"] == 0:
            raise InvalidArgument("wifi_tx: empty payload")
        require_positive(self.name, num_packets=p["num_packets"])
        if not 0 <= int(p["scrambler_seed"]) <= 0x7F:
            raise InvalidArgument("wifi_tx: scrambler_seed must fit in 7 bits")

    def make_frame(self, p):
        n = p["num_packets"] * PACKET_BITS
        if p["zero_payload"]:
            payload = np.zeros(n, dtype=np.uint8)
        else:
            payload = self.rng(p).integers(0, 2, n, dtype=np.uint8)
        return {"payload": payload}

    def run(self, frame, p):
        payload = frame["payload"]
        if payload.size == 0 or payload.size % PACKET_BITS:
            raise InvalidArgument(f"payload must be a non-empty multiple of {PACKET_BITS} bits")
        n = payload.size // PACKET_BITS
        out = np.empty((n, SYMBOL_LEN), dtype=np.complex128)
        for k in range(n):
            sym = modulate_packet(payload[k * PACKET_BITS:(k + 1) * PACKET_BITS], p["scrambler_seed"])
            api.cedr_ifft(sym, out[k])
        return out

    def dag_nodes(self, p):
        nodes = []
        for k in range(p["num_packets"]):
            nodes.append(func_node(f"encode_{k}", "tx_encode", [f"ifft_{k}"], packet=k, seed=p["scrambler_seed"]))
            nodes.append(node(f"ifft_{k}", KernelName.IFFT, [SYMBOL_LEN],
                              {"input": f"symbols_in[{k}]", "output": f"symbols_out[{k}]"}))
        return nodes

    def dag_buffers(self, frame, p):
        n = p["num_packets"]
        return {
            "payload": frame["payload"],
            "symbols_in": np.empty((n, SYMBOL_LEN), dtype=np.complex128),
            "symbols_out": np.empty((n, SYMBOL_LEN), dtype=np.complex128),
        }

    def dag_result(self, buffers, p):
        return buffers["symbols_out"]

    def frame_mb(self, p):
        return p["num_packets"] * SYMBOL_LEN * BITS_PER_COMPLEX / 1e6

    def task_counts(self, p, mode="API"):
        counts = Counter({KernelName.IFFT: p["num_packets"]})
        if mode == "DAG":
            counts[KernelName.FUNC] = p["num_packets"]
        return counts


APP = WifiTx()
