import math

import pytest

from cedr.harness.profile import build_cost_model, profile_cost_model
from cedr.model import KernelName, RuntimeConfig
from cedr.runtime import Runtime

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

ACCEPTANCE_TITLES = {
    1: "kernel oracles",
    2: "scheduler oracles",
    3: "task-count fidelity",
    4: "API-vs-DAG overhead direction",
    5: "saturation trend",
    6: "ETF queue sensitivity",
    7: "heterogeneity exploitation",
    8: "loop demo task granularity",
    9: "log soundness soak",
    10: "non-blocking speedup",
}


def synthetic_host_table() -> dict:
    """Deterministic stand-in for host profiling: 10 ns per unit of work."""
    host = {}
    for k in range(3, 12):
        n = 1 << k
        host[(KernelName.FFT, (n,))] = 10 * n * k
        host[(KernelName.IFFT, (n,))] = 10 * n * k
    for k in range(4, 21, 2):
        host[(KernelName.ZIP, (1 << k,))] = 2 * (1 << k)
    for n in (8, 16, 32, 64):
        host[(KernelName.GEMM, (n, n, n))] = n ** 3
    for h in (16, 64):
        host[(KernelName.CONV2D, (h, h, 3))] = int(30 * h * h * math.log2(h * h))
    return host


@pytest.fixture(scope="session")
def synthetic_model():
    return build_cost_model(synthetic_host_table(), cpu_scale=1.0)


@pytest.fixture(scope="session")
def host_model(tmp_path_factory):
    """Cost model profiled on this machine (shared by every timing-sensitive test)."""
    model = profile_cost_model()
    model.save(tmp_path_factory.mktemp("cost") / "cost_model.csv")
    return model


@pytest.fixture(scope="session")
def host_model_path(host_model, tmp_path_factory):
    return str(host_model.save(tmp_path_factory.mktemp("cost_saved") / "cost_model.csv"))


@pytest.fixture
def make_runtime(synthetic_model):
    """Factory for started runtimes; anything still running is shut down at teardown."""
    started = []

    def make(model=None, registry=None, **overrides):
        overrides.setdefault("emulate_timing", False)
        cfg = RuntimeConfig(**overrides)
        rt = Runtime(cfg, model or synthetic_model, registry).start()
        started.append(rt)
        return rt

    yield make
    for rt in started:
        rt.shutdown(drain_timeout=5, timeout=30)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_TITLES):
        if num not in ACCEPTANCE:
            terminalreporter.write_line(f"C{num:<2} NOT RUN  {ACCEPTANCE_TITLES[num]}")
            continue
        passed, detail = ACCEPTANCE[num]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"C{num:<2} {verdict:<7} {ACCEPTANCE_TITLES[num]}: {detail}")
