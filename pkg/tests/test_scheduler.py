import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import decisions_of, eft_oracle, etf_oracle, random_snapshot

from cedr.dag import parse_dag
from cedr.errors import ConfigError
from cedr.model import SUPPORT, CostModel, KernelId, KernelName, PeType, Task
from cedr.scheduler import (
    PeSlot,
    RoundRobin,
    ScheduleSnapshot,
    make_scheduler,
    mean_cost,
    schedule_eft,
    schedule_etf,
    schedule_heft_rt,
    schedule_rr,
)

US = 1000


def model_of(**entries):
    """entries: 'FFT_CPU'=180 (µs); unspecified CPU rows default to 100 µs."""
    table = {(k, (256,), PeType.CPU): 100 * US for k in KernelName}
    for key, us in entries.items():
        kernel, pe = key.split("_", 1)
        table[(KernelName(kernel), (256,), PeType(pe))] = us * US
    return CostModel(table)


def ready(*kernels, start_id=1):
    tasks = []
    for i, k in enumerate(kernels):
        t = Task(start_id + i, 1, KernelId(KernelName(k), (256,)), {})
        t.mark_ready(i)
        tasks.append(t)
    return tasks


def slots(*types, busy=None):
    busy = busy or {}
    return [PeSlot(i, PeType(t), busy.get(i, 0)) for i, t in enumerate(types)]


def test_rr_cycles_over_pes():
    snap = ScheduleSnapshot(ready("FFT", "FFT", "FFT", "FFT"), slots("CPU", "CPU", "FFT_ACC"), 0,
                            model_of(FFT_FFT_ACC=20))
    assert [a.pe_id for a in schedule_rr(snap)] == [0, 1, 2, 0]


def test_rr_skips_unsupporting_pes():
    snap = ScheduleSnapshot(ready("GEMM", "GEMM"), slots("CPU", "FFT_ACC"), 0, model_of())
    assert [a.pe_id for a in schedule_rr(snap)] == [0, 0]


def test_rr_cursor_persists_across_invocations():
    rr = RoundRobin()
    model = model_of()
    first = rr(ScheduleSnapshot(ready("ZIP"), slots("CPU", "CPU", "CPU"), 0, model))
    second = rr(ScheduleSnapshot(ready("ZIP", start_id=5), slots("CPU", "CPU", "CPU"), 0, model))
    assert (first[0].pe_id, second[0].pe_id) == (0, 1)


def test_rr_balances_full_support_pes_over_long_stream():
    rng = random.Random(0)
    pes = slots("CPU", "FFT_ACC", "CPU", "GPU_ACC", "CPU", "MMULT_ACC")
    model = model_of(FFT_FFT_ACC=20, FFT_GPU_ACC=30, IFFT_FFT_ACC=20, IFFT_GPU_ACC=30, ZIP_GPU_ACC=30,
                     GEMM_MMULT_ACC=20)
    rr = RoundRobin()
    counts = Counter()
    kernels = ["FFT", "IFFT", "ZIP", "GEMM", "CONV2D"]
    for batch in range(20):
        tasks = ready(*[rng.choice(kernels) for _ in range(50)], start_id=batch * 50)
        for a in rr(ScheduleSnapshot(tasks, pes, 0, model)):
            counts[a.pe_id] += 1
    assert sum(counts.values()) == 1000
    full = [pe.id for pe in pes if SUPPORT[pe.pe_type] == frozenset(KernelName)]
    cpu_counts = [counts[i] for i in full]
    assert max(cpu_counts) - min(cpu_counts) <= 1


def test_eft_prefers_idle_cpu_over_busy_accelerator():
    pes = slots("CPU", "FFT_ACC", busy={1: 200 * US})
    snap = ScheduleSnapshot(ready("FFT"), pes, 0, model_of(FFT_CPU=180, FFT_FFT_ACC=40))
    (a,) = schedule_eft(snap)
    assert (a.pe_id, a.predicted_finish) == (0, 180 * US)


def test_eft_prefers_faster_idle_accelerator():
    snap = ScheduleSnapshot(ready("FFT"), slots("CPU", "FFT_ACC"), 0, model_of(FFT_CPU=160, FFT_FFT_ACC=20))
    assert schedule_eft(snap)[0].pe_id == 1


def test_eft_breaks_ties_on_lowest_pe_id():
    snap = ScheduleSnapshot(ready("ZIP"), slots("CPU", "CPU", "CPU"), 0, model_of())
    assert schedule_eft(snap)[0].pe_id == 0


def test_etf_commits_globally_earliest_pair_first():
    snap = ScheduleSnapshot(ready("GEMM", "FFT"), slots("CPU", "FFT_ACC"), 0,
                            model_of(GEMM_CPU=300, FFT_CPU=320, FFT_FFT_ACC=40))
    out = schedule_etf(snap)
    assert [(a.task_id, a.pe_id) for a in out] == [(2, 1), (1, 0)]
    assert out[0].predicted_finish == 40 * US


def test_etf_single_task_matches_eft():
    snap = ScheduleSnapshot(ready("FFT"), slots("CPU", "FFT_ACC", busy={1: 500 * US}), 0,
                            model_of(FFT_CPU=160, FFT_FFT_ACC=20))
    assert decisions_of(schedule_etf(snap)) == decisions_of(schedule_eft(snap))


def test_heft_ranks_by_mean_estimate():
    model = model_of(FFT_CPU=100, FFT_FFT_ACC=20, GEMM_CPU=400)
    snap = ScheduleSnapshot(ready("FFT", "GEMM"), slots("CPU", "FFT_ACC"), 0, model)
    assert mean_cost(snap.ready[0], snap) == 60 * US
    assert mean_cost(snap.ready[1], snap) == 400 * US
    assert [a.task_id for a in schedule_heft_rt(snap)] == [2, 1]


def test_heft_identical_tasks_degenerate_to_eft():
    snap = ScheduleSnapshot(ready("ZIP", "ZIP", "ZIP", "ZIP"), slots("CPU", "CPU", "GPU_ACC"), 0,
                            model_of(ZIP_GPU_ACC=50))
    assert decisions_of(schedule_heft_rt(snap)) == decisions_of(schedule_eft(snap))


DIAMOND_HEAVY_D = {
    "app_name": "diamond",
    "nodes": [
        {"id": "A", "kernel": "ZIP", "size": [256], "args": {"a": "x", "b": "x", "output": "y"}, "successors": ["B", "C"]},
        {"id": "B", "kernel": "ZIP", "size": [256], "args": {"a": "x", "b": "x", "output": "y"}, "successors": ["D"]},
        {"id": "C", "kernel": "ZIP", "size": [256], "args": {"a": "x", "b": "x", "output": "y"}, "successors": ["D"]},
        {"id": "D", "kernel": "GEMM", "size": [256], "args": {"A": "m", "B": "m", "C": "m"}, "successors": []},
    ],
}


def test_heft_upward_rank_lifts_diamond_branches_over_light_tasks():
    model = model_of(ZIP_CPU=50, GEMM_CPU=1000, FFT_CPU=200)
    dag = parse_dag(DIAMOND_HEAVY_D)
    ranks = dag.upward_ranks(lambda node: model.estimate(node.kernel, PeType.CPU))
    # hand-computed: D = 1000, B = C = 50 + 1000, A = 50 + 1050
    assert ranks == {"D": 1000 * US, "B": 1050 * US, "C": 1050 * US, "A": 1100 * US}
    light = ready("FFT", "FFT", start_id=1)
    branches = ready("ZIP", "ZIP", start_id=10)
    for t, nid in zip(branches, "BC"):
        t.rank_hint = ranks[nid]
        t.enqueue_ts += 10
    snap = ScheduleSnapshot(light + branches, slots("CPU", "CPU"), 0, model)
    assert [a.task_id for a in schedule_heft_rt(snap)] == [10, 11, 1, 2]


def test_missing_cost_entry_is_a_configuration_error():
    model = CostModel({(k, (256,), PeType.CPU): 1000 for k in KernelName})
    snap = ScheduleSnapshot(ready("FFT"), slots("CPU", "FFT_ACC"), 0, model)
    with pytest.raises(ConfigError):
        schedule_eft(snap)


def test_make_scheduler_rejects_unknown_names():
    with pytest.raises(ConfigError):
        make_scheduler("FIFO")


@pytest.mark.parametrize("seed", range(60))
def test_eft_matches_exhaustive_oracle(seed):
    snap = random_snapshot(random.Random(seed))
    assert decisions_of(schedule_eft(snap)) == eft_oracle(snap)


@pytest.mark.parametrize("seed", range(60))
def test_etf_matches_exhaustive_oracle(seed):
    snap = random_snapshot(random.Random(1000 + seed))
    assert decisions_of(schedule_etf(snap)) == etf_oracle(snap)


@pytest.mark.parametrize("name", ["RR", "EFT", "ETF", "HEFT_RT"])
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_assignments_are_complete_safe_and_consistent(name, seed):
    snap = random_snapshot(random.Random(seed))
    out = make_scheduler(name)(snap)
    assert sorted(a.task_id for a in out) == sorted(t.task_id for t in snap.ready)
    pe_type = {pe.id: pe.pe_type for pe in snap.pes}
    busy = {pe.id: pe.busy_until for pe in snap.pes}
    for a in out:
        task = a.task
        assert pe_type[a.pe_id] in task.supported
        assert a.predicted_start >= max(snap.now, busy[a.pe_id])
        assert a.predicted_finish == a.predicted_start + snap.model.estimate(task.kernel, pe_type[a.pe_id])
        busy[a.pe_id] = a.predicted_finish


@pytest.mark.parametrize("name", ["EFT", "ETF", "HEFT_RT"])
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), factor=st.integers(1, 1000))
def test_scaling_all_costs_leaves_idle_decisions_unchanged(name, seed, factor):
    snap = random_snapshot(random.Random(seed))
    for pe in snap.pes:
        pe.busy_until = 0
    snap.now = 0
    scaled = ScheduleSnapshot(snap.ready, snap.pes, 0, snap.model.scaled(factor))
    base = [(a.task_id, a.pe_id) for a in make_scheduler(name)(snap)]
    assert [(a.task_id, a.pe_id) for a in make_scheduler(name)(scaled)] == base
