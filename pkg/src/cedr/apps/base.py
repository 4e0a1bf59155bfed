"""Common shape of a reference application.

An application provides an API-mode entry point written against
:mod:`cedr.api`, a DAG-mode twin (node list plus frame buffers and the
application functions its FUNC nodes call), and closed-form task counts.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..dag import dump_dag
from ..errors import InvalidArgument
from ..model import KernelName

BITS_PER_COMPLEX = 128
BITS_PER_REAL = 64


class AppSpec:
    name: str = ""
    aliases: tuple[str, ...] = ()
    defaults: dict = {}
    full_scale_params: dict = {}
    funcs: dict = {}

    def resolve_params(self, params: dict | None = None) -> dict:
        params = dict(params or {})
        if params.pop("paper_scale", False):
            params = {**self.full_scale_params, **params}
        unknown = set(params) - set(self.defaults) - {"seed"}
        if unknown:
            raise InvalidArgument(f"{self.name}: unknown parameters {sorted(unknown)}")
        p = {"seed": 0, **self.defaults, **params}
        self.validate(p)
        return p

    def validate(self, p: dict):
        pass

    def rng(self, p: dict) -> np.random.Generator:
        return np.random.default_rng(p["seed"])

    def make_frame(self, p: dict) -> dict:
        raise NotImplementedError

    def run(self, frame: dict, p: dict):
        """API-mode entry point; call outside a runtime for the standalone pipeline."""
        raise NotImplementedError

    def dag_nodes(self, p: dict) -> list[dict]:
        raise NotImplementedError

    def dag_document(self, p: dict) -> str:
        return dump_dag(self.name, self.dag_nodes(p))

    def dag_buffers(self, frame: dict, p: dict) -> dict:
        raise NotImplementedError

    def dag_result(self, buffers: dict, p: dict):
        raise NotImplementedError

    def frame_mb(self, p: dict) -> float:
        raise NotImplementedError

    def task_counts(self, p: dict, mode: str = "API") -> Counter:
        raise NotImplementedError


def node(nid: str, kernel: KernelName, size, args: dict, successors=()) -> dict:
    return {"id": nid, "kernel": kernel.value, "size": list(size), "args": args, "successors": list(successors)}


def func_node(nid: str, func: str, successors=(), **kwargs) -> dict:
    args = {"func": func}
    if kwargs:
        args["kwargs"] = kwargs
    return node(nid, KernelName.FUNC, [1], args, successors)


def require_pow2(app: str, **dims):
    for k, v in dims.items():
        if not isinstance(v, (int, np.integer)) or v < 1 or v & (v - 1):
            raise InvalidArgument(f"{app}: {k} must be a positive power of two, got {v!r}")


def require_positive(app: str, **vals):
    for k, v in vals.items():
        if not isinstance(v, (int, np.integer)) or v < 1:
            raise InvalidArgument(f"{app}: {k} must be a positive integer, got {v!r}")
