"""Reference applications and the name -> application registry."""

from __future__ import annotations

from pathlib import Path

from ..errors import InvalidArgument
from .base import AppSpec
from .lane_detection import APP as LANE_DETECTION
from .loop_demo import APP as LOOP_DEMO
from .pulse_doppler import APP as PULSE_DOPPLER
from .wifi_tx import APP as WIFI_TX


class Registry(dict):
    """Maps application names (and short aliases) to their specs."""

    def register(self, spec: AppSpec):
        for key in (spec.name, *spec.aliases):
            self[key] = spec
        return spec

    def names(self) -> list[str]:
        return sorted({spec.name for spec in self.values()})


REGISTRY = Registry()
for _spec in (PULSE_DOPPLER, WIFI_TX, LANE_DETECTION, LOOP_DEMO):
    REGISTRY.register(_spec)


def get_app(name: str) -> AppSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise InvalidArgument(f"unknown application {name!r}; registered: {REGISTRY.names()}") from None


def export_dag(name: str, directory, params: dict | None = None) -> Path:
    """Write the DAG-mode twin of an application to ``directory/<name>.json``."""
    spec = get_app(name)
    p = spec.resolve_params(params)
    path = Path(directory) / f"{spec.name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(spec.dag_document(p))
    return path


__all__ = ["AppSpec", "REGISTRY", "Registry", "export_dag", "get_app"]
