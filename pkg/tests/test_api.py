import threading
import time

import numpy as np
import pytest

from cedr import api
from cedr.errors import InvalidArgument, RuntimeNotRunning, RuntimeTerminated, UsageError
from cedr.harness.logcheck import check_log
from cedr.kernels import conv2d_freq, fft, gemm, ifft, zip_
from cedr.model import KernelName

IMPULSE = np.array([1, 0, 0, 0], dtype=complex)

ROSTERS = [
    [("CPU", 1)],
    [("CPU", 3), ("FFT_ACC", 1)],
    [("CPU", 2), ("GPU_ACC", 1), ("MMULT_ACC", 1)],
]


def signal(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_standalone_calls_run_inline():
    assert api.current() is None
    out = np.empty(4, dtype=complex)
    api.cedr_fft(IMPULSE, out)
    np.testing.assert_array_equal(out, np.ones(4))
    h = api.cedr_ifft_nb(out, np.empty(4, dtype=complex))
    assert h.status is api.Status.OK and api.wait(h) is api.Status.OK


@pytest.mark.parametrize("scheduler", ["RR", "EFT", "ETF", "HEFT_RT"])
@pytest.mark.parametrize("roster", ROSTERS, ids=["1cpu", "3cpu+fft", "2cpu+gpu+mmult"])
def test_blocking_calls_match_direct_kernels(make_runtime, scheduler, roster):
    rt = make_runtime(scheduler=scheduler, pe_roster=roster)
    x, y = signal(64, 1), signal(64, 2)
    a, b = np.random.default_rng(3).random((8, 5)), np.random.default_rng(4).random((5, 6))
    img, mask = np.random.default_rng(5).random((16, 16)), np.random.default_rng(6).random((3, 3))
    outs = {k: None for k in ("fft", "ifft", "zip", "gemm", "conv")}
    with rt.session():
        out = np.empty(4, dtype=complex)
        api.cedr_fft(IMPULSE, out)
        np.testing.assert_array_equal(out, np.ones(4))
        outs["fft"], outs["ifft"], outs["zip"] = (np.empty(64, dtype=complex) for _ in range(3))
        api.cedr_fft(x, outs["fft"])
        api.cedr_ifft(x, outs["ifft"])
        api.cedr_zip(x, y, outs["zip"])
        outs["gemm"] = np.empty((8, 6))
        api.cedr_gemm(a, b, outs["gemm"])
        outs["conv"] = np.empty((16, 16))
        api.cedr_conv2d(img, mask, outs["conv"])
        conv_task = np.empty((16, 16))
        api.wait(api.cedr_conv2d_nb(img, mask, conv_task))
    np.testing.assert_array_equal(outs["fft"], fft(x))
    np.testing.assert_array_equal(outs["ifft"], ifft(x))
    np.testing.assert_array_equal(outs["zip"], zip_(x, y))
    np.testing.assert_array_equal(outs["gemm"], gemm(a, b))
    np.testing.assert_array_equal(outs["conv"], conv2d_freq(img, mask))
    np.testing.assert_array_equal(conv_task, conv2d_freq(img, mask))
    assert check_log(rt.shutdown()) == []


def test_wait_all_over_independent_ffts(make_runtime):
    rt = make_runtime()
    xs = [signal(256, s) for s in range(8)]
    outs = [np.empty(256, dtype=complex) for _ in xs]
    with rt.session():
        handles = [api.cedr_fft_nb(x, o) for x, o in zip(xs, outs)]
        assert api.wait_all(handles) == [api.Status.OK] * 8
    for x, o in zip(xs, outs):
        np.testing.assert_array_equal(o, fft(x))


def test_wait_on_completed_task_returns_immediately(make_runtime):
    rt = make_runtime()
    with rt.session():
        h = api.cedr_fft_nb(IMPULSE, np.empty(4, dtype=complex))
        h.task.completion.wait(5)
        t0 = time.perf_counter()
        assert api.wait(h) is api.Status.OK
        assert time.perf_counter() - t0 < 0.01


def test_double_wait_is_a_usage_error(make_runtime):
    rt = make_runtime()
    with rt.session():
        h = api.cedr_fft_nb(IMPULSE, np.empty(4, dtype=complex))
        api.wait(h)
        with pytest.raises(UsageError):
            api.wait(h)


def test_one_failed_task_does_not_disturb_the_others(make_runtime):
    rt = make_runtime()
    frozen = np.empty(4, dtype=complex)
    frozen.flags.writeable = False
    with rt.session() as ctx:
        hs = [api.cedr_fft_nb(IMPULSE, np.empty(4, dtype=complex)),
              api.cedr_fft_nb(IMPULSE, frozen),
              api.cedr_fft_nb(IMPULSE, np.empty(4, dtype=complex))]
        assert api.wait_all(hs) == [api.Status.OK, api.Status.ERROR, api.Status.OK]
        assert "read-only" in hs[1].error
        app_id = ctx.app_id
    log = rt.shutdown()
    assert [t.status for t in log.tasks_of(app_id)] == ["OK", "ERROR", "OK"]
    assert check_log(log) == []


def test_blocking_call_raises_for_failed_task(make_runtime):
    rt = make_runtime()
    frozen = np.empty(4, dtype=complex)
    frozen.flags.writeable = False
    with rt.session():
        with pytest.raises(api.TaskFailed):
            api.cedr_fft(IMPULSE, frozen)


@pytest.mark.parametrize("kernel,args", [
    ("DCT", {}),
    (KernelName.FFT, {"input": np.zeros(6), "output": np.zeros(6)}),
    (KernelName.FFT, {"input": np.zeros(8), "output": np.zeros(4)}),
    (KernelName.ZIP, {"a": np.zeros(4), "b": np.zeros(4)}),
    (KernelName.GEMM, {"A": np.zeros((2, 3)), "B": np.zeros((3, 2)), "C": np.zeros((3, 3))}),
    (KernelName.CONV2D, {"input": np.zeros((8, 8)), "mask": np.zeros((2, 2)), "output": np.zeros((8, 8))}),
])
def test_invalid_arguments_are_rejected_before_enqueue(make_runtime, kernel, args):
    rt = make_runtime()
    with rt.session():
        with pytest.raises(InvalidArgument):
            api.enqueue_kernel(kernel, args)


def test_enqueue_after_shutdown_is_a_connection_error(make_runtime):
    rt = make_runtime()
    with rt.session():
        rt.shutdown(drain_timeout=0)
        with pytest.raises(ConnectionError):
            api.cedr_fft_nb(IMPULSE, np.empty(4, dtype=complex))
    with pytest.raises(RuntimeNotRunning):
        with rt.session():
            pass


def test_shutdown_mid_call_reports_termination(make_runtime, synthetic_model):
    slow = synthetic_model.scaled(2000)  # FFT-256 modeled at ~40 ms on a CPU
    rt = make_runtime(model=slow, emulate_timing=True, pe_roster=[("CPU", 1)])
    caught = []
    started = threading.Event()

    def app():
        with rt.session():
            hs = [api.cedr_fft_nb(signal(256, i), np.empty(256, dtype=complex)) for i in range(6)]
            started.set()
            try:
                api.wait_all_ok(hs)
            except RuntimeTerminated as exc:
                caught.append(exc)

    th = threading.Thread(target=app)
    th.start()
    started.wait(5)
    time.sleep(0.01)
    log = rt.shutdown(drain_timeout=0)
    th.join(10)
    assert len(caught) == 1
    assert any(t.status == "INCOMPLETE" for t in log.tasks)
    assert check_log(log) == []


def test_concurrent_blocking_calls_from_many_threads(make_runtime):
    rt = make_runtime(pe_roster=[("CPU", 3), ("FFT_ACC", 1)], scheduler="ETF")
    results = {}
    errors = []

    def app(tid):
        try:
            with rt.session(f"t{tid}"):
                for i in range(10):
                    x = signal(64, tid * 100 + i)
                    out = np.empty(64, dtype=complex)
                    api.cedr_fft(x, out)
                    results[(tid, i)] = np.array_equal(out, fft(x))
        except Exception as exc:  # surfaced by the assertion below
            errors.append(exc)

    threads = [threading.Thread(target=app, args=(t,)) for t in range(10)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(60)
    log = rt.shutdown()
    assert errors == []
    assert len(results) == 100 and all(results.values())
    assert len(log.tasks) == 100 and {t.status for t in log.tasks} == {"OK"}
    assert len(log.apps) == 10 and all(a.state == "DONE" for a in log.apps)
    assert check_log(log) == []


def test_unwaited_handles_flag_the_application(make_runtime):
    rt = make_runtime()
    with rt.session() as ctx:
        out = np.empty(4, dtype=complex)
        h = api.cedr_fft_nb(IMPULSE, out)
        assert ctx.orphans() == [h]
        app_id = ctx.app_id
    app = rt.wait_app(app_id, timeout=10)
    assert "never waited" in app.error
    np.testing.assert_array_equal(out, np.ones(4))


def test_debug_leases_catch_output_buffer_reuse(make_runtime, synthetic_model):
    rt = make_runtime(model=synthetic_model.scaled(500), emulate_timing=True, debug_leases=True,
                      pe_roster=[("CPU", 1)])
    with rt.session():
        buf = np.empty((2, 256), dtype=complex)
        h = api.cedr_fft_nb(signal(256), buf[0])
        with pytest.raises(UsageError, match="in-flight"):
            api.cedr_fft_nb(signal(256), buf[0])
        # a disjoint row of the same array is fine
        h2 = api.cedr_fft_nb(signal(256), buf[1])
        api.wait_all_ok([h, h2])
        api.wait(api.cedr_fft_nb(signal(256), buf[0]))


def test_thousand_enqueue_wait_pairs_under_etf(make_runtime):
    rt = make_runtime(scheduler="ETF")
    t0 = time.monotonic()
    with rt.session() as ctx:
        x = signal(64)
        out = np.empty(64, dtype=complex)
        for _ in range(1000):
            assert api.enqueue_kernel(KernelName.FFT, {"input": x, "output": out}).wait(timeout=60) is api.Status.OK
        app_id = ctx.app_id
    assert time.monotonic() - t0 < 60
    log = rt.shutdown()
    assert len(log.tasks_of(app_id)) == 1000
