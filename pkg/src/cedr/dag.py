"""DAG-mode applications: JSON parsing, dependency counters, successor release.

Document schema::

    {
      "app_name": "pulse_doppler",
      "nodes": [
        {"id": "range_0", "kernel": "FFT", "size": [64],
         "args": {"input": "samples[0]", "output": "range[0]"},
         "successors": ["corner_turn"]},
        {"id": "corner_turn", "kernel": "FUNC", "size": [1],
         "args": {"func": "pd_corner_turn"}, "successors": []}
      ]
    }

Buffer arguments name one of the application's frame buffers, optionally
narrowed to a row (``buf[3]``) or a column (``buf[:,3]``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import DagParseError, InvariantViolation
from .kernels import KERNEL_ARGS
from .model import KernelId, KernelName

_REF = re.compile(r"^(?P<buf>[A-Za-z_][\w.]*)(?:\[(?:(?P<row>\d+)|:,\s*(?P<col>\d+))\])?$")


@dataclass(frozen=True)
class BufferRef:
    buf: str
    row: Optional[int] = None
    col: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "BufferRef":
        m = _REF.match(str(text).strip())
        if not m:
            raise ValueError(f"bad buffer reference {text!r}")
        row = m.group("row")
        col = m.group("col")
        return cls(m.group("buf"), None if row is None else int(row), None if col is None else int(col))

    def resolve(self, frame: dict[str, np.ndarray]) -> np.ndarray:
        arr = frame[self.buf]
        if self.row is not None:
            return arr[self.row]
        if self.col is not None:
            return arr[:, self.col]
        return arr

    def __str__(self):
        if self.row is not None:
            return f"{self.buf}[{self.row}]"
        if self.col is not None:
            return f"{self.buf}[:,{self.col}]"
        return self.buf


class NodeState:
    WAITING = "WAITING"
    READY = "READY"
    RUNNING = "RUNNING"
    DONE = "DONE"


@dataclass
class DagNode:
    node_id: str
    kernel: KernelId
    arg_binding: dict
    successors: list[str] = field(default_factory=list)
    predecessors: list[str] = field(default_factory=list)
    remaining_deps: int = 0
    state: str = NodeState.WAITING

    def bind(self, frame: dict[str, np.ndarray], funcs: Optional[dict] = None) -> dict:
        """Resolve the node's argument binding against concrete frame buffers."""
        if self.kernel.name is KernelName.FUNC:
            func = (funcs or {})[self.arg_binding["func"]]
            kwargs = dict(self.arg_binding.get("kwargs", {}))
            return {"func": lambda: func(frame, **kwargs), "size": self.kernel.size[0]}
        return {k: BufferRef.parse(v).resolve(frame) for k, v in self.arg_binding.items()}

    def buffer_refs(self) -> list[BufferRef]:
        if self.kernel.name is KernelName.FUNC:
            return []
        return [BufferRef.parse(v) for v in self.arg_binding.values()]


@dataclass
class AppDag:
    app_name: str
    nodes: dict[str, DagNode]
    head_ids: list[str]
    completed_count: int = 0

    @property
    def edge_count(self) -> int:
        return sum(len(n.successors) for n in self.nodes.values())

    def edges(self) -> list[tuple[str, str]]:
        return [(n.node_id, s) for n in self.nodes.values() for s in n.successors]

    @property
    def complete(self) -> bool:
        return self.completed_count == len(self.nodes)

    def heads(self) -> list[str]:
        """Mark head nodes READY and return them in document order."""
        for h in self.head_ids:
            self.nodes[h].state = NodeState.READY
        return list(self.head_ids)

    def start(self, node_id: str):
        node = self.nodes[node_id]
        if node.state != NodeState.READY:
            raise InvariantViolation(f"node {node_id} started from state {node.state}")
        node.state = NodeState.RUNNING

    def release_ready(self, completed: str) -> list[str]:
        return release_ready(self, completed)

    def topological_order(self) -> list[str]:
        indeg = {nid: len(n.predecessors) for nid, n in self.nodes.items()}
        order = [nid for nid in self.nodes if indeg[nid] == 0]
        i = 0
        while i < len(order):
            for s in self.nodes[order[i]].successors:
                indeg[s] -= 1
                if indeg[s] == 0:
                    order.append(s)
            i += 1
        return order

    def upward_ranks(self, cost: Callable[[DagNode], float]) -> dict[str, float]:
        """rank(v) = cost(v) + max over successors s of rank(s)."""
        ranks: dict[str, float] = {}
        for nid in reversed(self.topological_order()):
            node = self.nodes[nid]
            ranks[nid] = cost(node) + max((ranks[s] for s in node.successors), default=0)
        return ranks


def release_ready(dag: AppDag, completed: str) -> list[str]:
    """Record completion of ``completed`` and return successors that became ready."""
    node = dag.nodes.get(completed)
    if node is None:
        raise InvariantViolation(f"unknown node {completed}")
    if node.state != NodeState.RUNNING:
        raise InvariantViolation(f"node {completed} completed from state {node.state}")
    node.state = NodeState.DONE
    dag.completed_count += 1
    newly = []
    for sid in node.successors:
        succ = dag.nodes[sid]
        succ.remaining_deps -= 1
        if succ.remaining_deps < 0:
            raise InvariantViolation(f"node {sid} released more than once")
        if succ.remaining_deps == 0:
            succ.state = NodeState.READY
            newly.append(sid)
    return newly


def _find_back_edge(nodes: dict[str, DagNode]) -> Optional[tuple[str, str]]:
    white, grey, black = 0, 1, 2
    color = dict.fromkeys(nodes, white)
    for root in nodes:
        if color[root] != white:
            continue
        color[root] = grey
        stack = [(root, iter(nodes[root].successors))]
        while stack:
            nid, it = stack[-1]
            for s in it:
                if color[s] == grey:
                    return nid, s
                if color[s] == white:
                    color[s] = grey
                    stack.append((s, iter(nodes[s].successors)))
                    break
            else:
                color[nid] = black
                stack.pop()
    return None


def parse_dag(text, funcs: Optional[Iterable[str]] = None) -> AppDag:
    """Parse and validate a DAG document (JSON text or an already-decoded dict).

    ``funcs`` names the application functions FUNC nodes may reference; when
    omitted, FUNC names are not checked.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DagParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    else:
        doc = text
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise DagParseError("document must be an object with a 'nodes' array")
    app_name = doc.get("app_name")
    if not isinstance(app_name, str) or not app_name:
        raise DagParseError("missing 'app_name'")
    if not doc["nodes"]:
        raise DagParseError("DAG has no nodes")
    known_funcs = None if funcs is None else set(funcs)

    nodes: dict[str, DagNode] = {}
    for i, raw in enumerate(doc["nodes"]):
        if not isinstance(raw, dict) or "id" not in raw:
            raise DagParseError(f"node #{i} is not an object with an 'id'")
        nid = str(raw["id"])
        if nid in nodes:
            raise DagParseError(f"duplicate node id {nid!r}")
        try:
            name = KernelName(raw.get("kernel"))
        except ValueError:
            raise DagParseError(f"node {nid!r}: unknown kernel {raw.get('kernel')!r}") from None
        try:
            kid = KernelId(name, tuple(raw.get("size", [1])))
        except (ValueError, TypeError) as exc:
            raise DagParseError(f"node {nid!r}: bad size: {exc}") from None
        args = raw.get("args", {})
        if not isinstance(args, dict):
            raise DagParseError(f"node {nid!r}: 'args' must be an object")
        missing = [a for a in KERNEL_ARGS[name] if a not in args]
        if missing:
            raise DagParseError(f"node {nid!r}: missing args {missing}")
        if name is KernelName.FUNC:
            if known_funcs is not None and args["func"] not in known_funcs:
                raise DagParseError(f"node {nid!r}: unknown function {args['func']!r}")
        else:
            for key in KERNEL_ARGS[name]:
                try:
                    BufferRef.parse(args[key])
                except ValueError as exc:
                    raise DagParseError(f"node {nid!r}: {exc}") from None
        succ = raw.get("successors", [])
        if not isinstance(succ, list):
            raise DagParseError(f"node {nid!r}: 'successors' must be a list")
        if len(set(map(str, succ))) != len(succ):
            raise DagParseError(f"node {nid!r}: duplicate successor")
        nodes[nid] = DagNode(nid, kid, args, [str(s) for s in succ])

    for node in nodes.values():
        for s in node.successors:
            if s not in nodes:
                raise DagParseError(f"node {node.node_id!r}: dangling successor {s!r}")
            nodes[s].predecessors.append(node.node_id)

    back = _find_back_edge(nodes)
    if back is not None:
        raise DagParseError(f"cycle detected: back edge {back[0]!r} -> {back[1]!r}")

    for node in nodes.values():
        node.remaining_deps = len(node.predecessors)
    heads = [nid for nid, n in nodes.items() if n.remaining_deps == 0]
    dag = AppDag(app_name, nodes, heads)
    if len(dag.topological_order()) != len(nodes):  # pragma: no cover - implied by acyclicity
        raise DagParseError("nodes unreachable from heads")
    return dag


def dump_dag(app_name: str, nodes: list[dict]) -> str:
    return json.dumps({"app_name": app_name, "nodes": nodes}, indent=1)
