import json
import threading
import time

import numpy as np
import pytest
from testapps import extended_registry

from cedr import api
from cedr.errors import ConfigError, InvalidArgument, DagParseError, RuntimeNotRunning
from cedr.harness.logcheck import check_log
from cedr.model import RuntimeConfig
from cedr.runtime import Runtime
from cedr.runtime.log import ExecutionLog


def diamond_doc():
    def zn(nid, row, succ):
        return {"id": nid, "kernel": "ZIP", "size": [64], "args": {"a": "x", "b": "x", "output": f"out[{row}]"},
                "successors": succ}

    return {"app_name": "random_dag", "nodes": [zn("A", 0, ["B", "C"]), zn("B", 1, ["D"]), zn("C", 2, ["D"]), zn("D", 3, [])]}


def test_default_roster_starts_four_workers_and_a_main_loop(make_runtime):
    before = threading.active_count()
    rt = make_runtime()
    assert rt.thread_count == 5
    assert threading.active_count() - before == 5
    names = sorted(t.name for t in threading.enumerate() if t.name.startswith("cedr-"))
    assert names == ["cedr-main", "cedr-pe0-CPU", "cedr-pe1-CPU", "cedr-pe2-CPU", "cedr-pe3-FFT_ACC"]


def test_roster_without_cpu_is_rejected(synthetic_model):
    with pytest.raises(ConfigError):
        Runtime(RuntimeConfig(pe_roster=[("CPU", 0), ("FFT_ACC", 1)]), synthetic_model)


def test_cost_model_must_cover_the_roster(synthetic_model):
    partial = synthetic_model.__class__({k: v for k, v in synthetic_model.table.items() if k[2].value != "GPU_ACC"})
    with pytest.raises(ConfigError, match="GPU_ACC"):
        Runtime(RuntimeConfig(pe_roster=[("CPU", 1), ("GPU_ACC", 1)]), partial)


def test_oversized_roster_falls_back_to_unpinned(make_runtime, caplog):
    rt = make_runtime(pe_roster=[("CPU", 64)], pin_threads=True)
    assert not rt.pinned and "unpinned" in caplog.text


def test_runtime_starts_once(make_runtime):
    rt = make_runtime()
    with pytest.raises(RuntimeNotRunning):
        rt.start()


def test_rapid_submissions_complete_with_distinct_ids(make_runtime):
    rt = make_runtime()
    ids = [rt.submit("wifi_tx", "API", {"num_packets": 4, "seed": i}) for i in range(10)]
    assert len(set(ids)) == 10
    for i in ids:
        assert rt.wait_app(i, timeout=30).state.value == "DONE"
    log = rt.shutdown()
    assert sorted(a.app_id for a in log.apps) == sorted(ids)
    assert all(a.state == "DONE" and a.task_count == 4 for a in log.apps)
    assert check_log(log) == []


def test_submit_starts_an_application_thread(make_runtime, synthetic_model):
    rt = make_runtime(model=synthetic_model.scaled(200), emulate_timing=True, pe_roster=[("CPU", 1)])
    app_id = rt.submit("wifi_tx", "API", {"num_packets": 20})
    app = rt.app(app_id)
    assert app.state.value == "RUNNING" and app.thread.is_alive()
    st = rt.status(fresh=True)
    assert st["running_api_apps"] == 1 and st["live_app_threads"] == 1 and st["apps"]["RUNNING"] == 1
    rt.wait_app(app_id, timeout=30)
    st = rt.status(fresh=True)
    assert st["live_app_threads"] == 0 and st["apps"]["DONE"] == 1 and st["in_flight_tasks"] == 0


def test_periodic_status_snapshot_tracks_running_totals(make_runtime):
    rt = make_runtime(poll_interval_us=1000)
    app_id = rt.submit("pulse_doppler", "API")
    rt.wait_app(app_id, timeout=30)
    deadline = time.monotonic() + 5
    while rt.status()["apps"]["DONE"] != 1 and time.monotonic() < deadline:
        time.sleep(0.005)
    st = rt.status()
    assert st["apps"]["DONE"] == 1 and st["apps"]["RUNNING"] == 0 and st["in_flight_tasks"] == 0


@pytest.mark.parametrize("payload,error", [
    (("nonexistent", "API", {}), InvalidArgument),
    (("wifi_tx", "BATCH", {}), InvalidArgument),
    (("wifi_tx", "API", {"bogus": 1}), InvalidArgument),
    (("wifi_tx", "DAG", {"dag": "/nonexistent/dag.json"}), InvalidArgument),
])
def test_submit_errors_are_replied(make_runtime, payload, error):
    rt = make_runtime()
    with pytest.raises(error):
        rt.submit(*payload)
    assert rt.status(fresh=True)["state"] == "RUNNING"


def test_malformed_dag_file_is_a_parse_error(make_runtime, tmp_path):
    rt = make_runtime()
    bad = tmp_path / "bad.json"
    bad.write_text('{"app_name": "wifi_tx", "nodes": [}')
    with pytest.raises(DagParseError):
        rt.submit("wifi_tx", "DAG", {"dag": str(bad)})
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"app_name": "wifi_tx", "nodes": [
        {"id": "a", "kernel": "IFFT", "size": [128], "args": {"input": "nope", "output": "nope"}}]}))
    with pytest.raises(DagParseError, match="unknown buffers"):
        rt.submit("wifi_tx", "DAG", {"dag": str(unknown)})


def test_dag_diamond_runs_head_first_and_releases_in_order(make_runtime, tmp_path):
    path = tmp_path / "diamond.json"
    path.write_text(json.dumps(diamond_doc()))
    rt = make_runtime(registry=extended_registry())
    app_id = rt.submit("random_dag", "DAG", {"dag": str(path), "nodes": 4})
    assert rt.wait_app(app_id, timeout=30).state.value == "DONE"
    log = rt.shutdown()
    by_node = {t.node_id: t for t in log.tasks}
    a, b, c, d = (by_node[n] for n in "ABCD")
    assert log.sched[0].queue_len == 1 and log.sched[0].app_tasks == f"{app_id}:1"
    assert a.task_id < b.task_id < c.task_id < d.task_id
    assert a.complete_ts <= b.enqueue_ts <= c.enqueue_ts
    assert max(b.complete_ts, c.complete_ts) <= d.dispatch_ts
    assert log.app(app_id).end_ts == d.complete_ts
    assert check_log(log) == []


def test_idle_runtime_never_invokes_the_scheduler(make_runtime):
    rt = make_runtime()
    time.sleep(0.05)
    log = rt.shutdown()
    assert log.sched == [] and log.tasks == [] and log.apps == []


def test_single_ready_task_is_dispatched_in_one_step(make_runtime):
    rt = make_runtime(pe_roster=[("CPU", 1)])
    with rt.session():
        api.cedr_fft(np.ones(8, dtype=complex), np.empty(8, dtype=complex))
    log = rt.shutdown()
    assert [(s.queue_len, s.assigned) for s in log.sched] == [(1, 1)]


def test_idle_shutdown_is_immediate(make_runtime):
    rt = make_runtime()
    reply = {}
    t0 = time.monotonic()
    rt.post(("shutdown", {"drain_timeout_s": 10}, reply.update, 0))
    assert rt.wait_stopped(5)
    assert time.monotonic() - t0 < 1
    assert reply["ok"] and reply["incomplete"] == []


def test_generous_drain_lets_every_app_finish(make_runtime):
    rt = make_runtime()
    ids = [rt.submit(name, mode) for name in ("pulse_doppler", "wifi_tx", "loop_demo") for mode in ("API", "DAG")]
    log = rt.shutdown(drain_timeout=60)
    assert {a.app_id for a in log.apps} == set(ids)
    assert all(a.state == "DONE" for a in log.apps)
    assert check_log(log) == []


def test_zero_drain_marks_running_apps_incomplete(make_runtime, synthetic_model):
    rt = make_runtime(model=synthetic_model.scaled(200), emulate_timing=True, pe_roster=[("CPU", 1)])
    api_app = rt.submit("wifi_tx", "API", {"num_packets": 50})
    dag_app = rt.submit("pulse_doppler", "DAG")
    time.sleep(0.05)
    log = rt.shutdown(drain_timeout=0)
    states = {a.app_id: (a.state, a.end_ts) for a in log.apps}
    assert states[api_app] == ("INCOMPLETE", -1) and states[dag_app] == ("INCOMPLETE", -1)
    assert any(t.status == "INCOMPLETE" for t in log.tasks)
    assert check_log(log) == []


def test_log_round_trips_through_files(make_runtime, tmp_path):
    rt = make_runtime(log_path=str(tmp_path / "run"))
    rt.submit("pulse_doppler", "DAG")
    rt.submit("wifi_tx", "API")
    log = rt.shutdown(drain_timeout=30)
    again = ExecutionLog.read(tmp_path / "run")
    assert again.tasks == log.tasks and again.apps == log.apps
    assert again.sched == log.sched and again.edges == log.edges
    assert again.header["cost_model_digest"] == rt.model.digest()
    assert set(again.header["mgmt_breakdown"]) and again.header["pes"][3]["type"] == "FFT_ACC"


def test_management_time_is_attributed_to_apps(make_runtime):
    rt = make_runtime()
    ids = [rt.submit("pulse_doppler", mode) for mode in ("API", "DAG")]
    log = rt.shutdown(drain_timeout=30)
    assert all(log.app(i).mgmt_ns > 0 for i in ids)


def test_results_do_not_depend_on_scheduler_or_roster(synthetic_model):
    results = []
    for scheduler, roster in [("RR", [("CPU", 1)]), ("ETF", [("CPU", 3), ("FFT_ACC", 1)]),
                              ("HEFT_RT", [("CPU", 2), ("GPU_ACC", 2)])]:
        rt = Runtime(RuntimeConfig(scheduler=scheduler, pe_roster=roster, emulate_timing=False),
                     synthetic_model).start()
        ids = [rt.submit("pulse_doppler", mode, {"seed": 4}) for mode in ("API", "DAG")]
        apps = [rt.wait_app(i, timeout=30) for i in ids]
        rt.shutdown()
        np.testing.assert_array_equal(apps[0].result, apps[1].result)
        results.append(apps[0].result)
    for r in results[1:]:
        np.testing.assert_array_equal(r, results[0])
