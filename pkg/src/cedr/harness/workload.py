"""Workload injection: periodic per-application arrival streams against a daemon."""

from __future__ import annotations

import json
import logging
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..apps import export_dag, get_app
from ..errors import CedrError, ConfigError
from ..model import RuntimeConfig
from ..runtime.ipc import IpcClient, endpoint_in_use

log = logging.getLogger(__name__)

DESK_RATES = [float(r) for r in np.round(np.geomspace(10, 2000, 10), 1)]
PAPER_RATES = [float(r) for r in np.round(np.geomspace(10, 2000, 29), 1)]


@dataclass
class WorkloadEntry:
    app: str
    mode: str = "API"
    instances: int = 1
    params: dict = field(default_factory=dict)


@dataclass
class WorkloadSpec:
    entries: list[WorkloadEntry]
    rates_mbps: list[float] = field(default_factory=lambda: list(DESK_RATES))
    trials: int = 5
    seed: int = 0

    def __post_init__(self):
        self.entries = [e if isinstance(e, WorkloadEntry) else WorkloadEntry(**e) for e in self.entries]
        self.validate()

    def validate(self):
        if not self.entries:
            raise ConfigError("workload has no entries")
        if not self.rates_mbps or any(r <= 0 for r in self.rates_mbps):
            raise ConfigError("injection rates must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for e in self.entries:
            get_app(e.app).resolve_params(e.params)
            if e.instances < 1:
                raise ConfigError(f"{e.app}: instances must be >= 1")
            if e.mode.upper() not in ("API", "DAG"):
                raise ConfigError(f"{e.app}: unknown mode {e.mode!r}")

    def with_mode(self, mode: str) -> "WorkloadSpec":
        return WorkloadSpec([WorkloadEntry(e.app, mode, e.instances, dict(e.params)) for e in self.entries],
                            list(self.rates_mbps), self.trials, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WorkloadSpec":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad workload: {exc}") from None

    @classmethod
    def load(cls, path) -> "WorkloadSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read workload {path}: {exc}") from None

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def injection_period(frame_mb: float, rate_mbps: float) -> float:
    """Seconds between consecutive frames of one stream."""
    if frame_mb <= 0 or rate_mbps <= 0:
        raise ValueError("frame size and rate must be positive")
    return frame_mb / rate_mbps


def arrival_schedule(spec: WorkloadSpec, rate_mbps: float) -> list[tuple[float, int, int]]:
    """(offset_s, entry index, instance index) for every submission, in time order.

    Each entry is an independent periodic stream starting at t=0.
    """
    out = []
    for idx, e in enumerate(spec.entries):
        app = get_app(e.app)
        period = injection_period(app.frame_mb(app.resolve_params(e.params)), rate_mbps)
        out += [(i * period, idx, i) for i in range(e.instances)]
    out.sort()
    return out


@dataclass
class TrialResult:
    rate_mbps: float
    trial: int
    scheduler: str
    mode: str
    log_dir: str
    ok: bool
    error: str = ""
    wall_s: float = 0.0


def _daemon_cmd(config_path: Path) -> list[str]:
    return [sys.executable, "-m", "cedr", "daemon", "--config", str(config_path)]


def _wait_for_daemon(proc: subprocess.Popen, endpoint: str, timeout: float):
    deadline = time.monotonic() + timeout
    while not endpoint_in_use(endpoint):
        if proc.poll() is not None:
            raise CedrError(f"daemon exited with status {proc.returncode} before listening")
        if time.monotonic() > deadline:
            raise CedrError(f"daemon did not come up within {timeout}s")
        time.sleep(0.01)


def run_trial(spec: WorkloadSpec, config: RuntimeConfig, rate_mbps: float, trial: int, out_dir,
              dag_dir: Optional[Path] = None, drain_timeout_s: Optional[float] = None,
              timeout_s: float = 600.0) -> TrialResult:
    """One daemon lifetime: inject every arrival at ``rate_mbps``, drain, collect logs."""
    out_dir = Path(out_dir)
    mode = "+".join(sorted({e.mode.upper() for e in spec.entries}))
    log_dir = out_dir / f"{config.scheduler.value}_{mode}_r{rate_mbps:g}_t{trial}"
    result = TrialResult(rate_mbps, trial, config.scheduler.value, mode, str(log_dir), False)
    with tempfile.TemporaryDirectory(prefix="cedr-") as tmp:
        endpoint = os.path.join(tmp, "cedr.sock")
        cfg = RuntimeConfig.from_dict({**config.to_dict(), "ipc_endpoint": endpoint, "log_path": str(log_dir)})
        cfg_path = cfg.save(Path(tmp) / "config.json")
        stderr_path = Path(tmp) / "daemon.err"
        t_start = time.monotonic()
        with open(stderr_path, "w") as err:
            proc = subprocess.Popen(_daemon_cmd(cfg_path), stdout=subprocess.DEVNULL, stderr=err)
        client = IpcClient(endpoint, timeout=timeout_s)
        try:
            _wait_for_daemon(proc, endpoint, 30.0)
            arrivals = arrival_schedule(spec, rate_mbps)
            t0 = time.monotonic()
            for offset, idx, inst in arrivals:
                delay = t0 + offset - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                e = spec.entries[idx]
                params = {**e.params, "seed": spec.seed + 1000 * trial + inst}
                if e.mode.upper() == "DAG" and dag_dir is not None:
                    params["dag"] = str(Path(dag_dir) / f"{get_app(e.app).name}.json")
                client.submit(e.app, e.mode.upper(), params)
            reply = client.shutdown(drain_timeout_s, timeout=timeout_s)
            proc.wait(timeout=60)
            if proc.returncode != 0:
                raise CedrError(f"daemon exited with status {proc.returncode}")
            result.ok = True
            if reply.get("incomplete"):
                result.error = f"incomplete apps: {reply['incomplete']}"
        except (CedrError, OSError, subprocess.TimeoutExpired, TimeoutError) as exc:
            proc.kill()
            proc.wait()
            tail = stderr_path.read_text()[-2000:]
            result.error = f"{type(exc).__name__}: {exc}; daemon stderr: {tail}"
            log.error("trial rate=%g #%d failed: %s", rate_mbps, trial, result.error)
        result.wall_s = time.monotonic() - t_start
    return result


def export_dags(spec: WorkloadSpec, directory) -> Path:
    directory = Path(directory)
    for e in spec.entries:
        if e.mode.upper() == "DAG":
            export_dag(e.app, directory, e.params)
    return directory


def run_workload(spec: WorkloadSpec, config: RuntimeConfig, out_dir, schedulers=None,
                 drain_timeout_s: Optional[float] = None) -> list[TrialResult]:
    """Sweep every (scheduler, rate, trial); failed trials are recorded and the sweep continues."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dag_dir = export_dags(spec, out_dir / "dags")
    results = []
    for sched in schedulers or [config.scheduler]:
        cfg = RuntimeConfig.from_dict({**config.to_dict(), "scheduler": str(sched)})
        for rate in spec.rates_mbps:
            for trial in range(spec.trials):
                res = run_trial(spec, cfg, rate, trial, out_dir, dag_dir, drain_timeout_s)
                log.info("%s rate=%g trial=%d ok=%s %.1fs", cfg.scheduler.value, rate, trial, res.ok, res.wall_s)
                results.append(res)
    manifest = {"workload": spec.to_dict(), "config": config.to_dict(),
                "trials": [asdict(r) for r in results]}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return results
