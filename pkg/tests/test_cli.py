import json
import os
import subprocess
import sys
import tempfile

import pytest

from cedr.cli import main
from cedr.dag import parse_dag
from cedr.apps import get_app
from cedr.model import CostModel, RuntimeConfig
from cedr.runtime.ipc import IpcClient
from cedr.runtime.log import ExecutionLog


def cli(*argv):
    return main([str(a) for a in argv])


def test_list_apps(capsys):
    assert cli("--list-apps") == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["lane_detection", "loop_demo", "pulse_doppler", "wifi_tx"]


def test_no_command_prints_help(capsys):
    assert cli() == 2
    assert "usage" in capsys.readouterr().out


def test_profile_writes_a_loadable_cost_model(tmp_path, capsys):
    out = tmp_path / "cost_model.csv"
    assert cli("profile", "--out", out, "--runs", 3) == 0
    model = CostModel.load(out)
    assert "wrote" in capsys.readouterr().out and len(model.table) > 20


def test_export_dag_with_params(tmp_path, capsys):
    assert cli("export-dag", "tx", "--out", tmp_path, "--param", "num_packets=3") == 0
    path = capsys.readouterr().out.strip()
    dag = parse_dag(open(path).read(), funcs=get_app("wifi_tx").funcs)
    assert len(dag.nodes) > 0


def test_bad_param_syntax_exits():
    with pytest.raises(SystemExit):
        cli("export-dag", "tx", "--out", "/tmp", "--param", "num_packets")


def test_unknown_app_is_reported(tmp_path, capsys):
    assert cli("export-dag", "sonar", "--out", tmp_path) == 1
    assert "sonar" in capsys.readouterr().err


def test_daemon_process_submit_status_shutdown(synthetic_model, tmp_path, capsys):
    with tempfile.TemporaryDirectory(prefix="cedr-") as d:
        endpoint = os.path.join(d, "cedr.sock")
        cfg = RuntimeConfig(ipc_endpoint=endpoint, log_path=str(tmp_path / "log"), emulate_timing=False,
                            cost_model_path=str(synthetic_model.save(tmp_path / "cm.csv")))
        cfg_path = cfg.save(tmp_path / "config.json")
        proc = subprocess.Popen([sys.executable, "-m", "cedr", "daemon", "--config", str(cfg_path),
                                 "--scheduler", "ETF"], stdout=subprocess.PIPE, text=True)
        try:
            IpcClient(endpoint).wait_ready(30)
            dag = tmp_path / "dags"
            cli("export-dag", "wifi_tx", "--out", dag)
            capsys.readouterr()
            assert cli("submit", "pd", "--endpoint", endpoint, "--param", "num_pulses=8") == 0
            assert cli("submit", "wifi_tx", "--endpoint", endpoint, "--mode", "DAG",
                       "--dag", dag / "wifi_tx.json") == 0
            assert cli("status", "--endpoint", endpoint) == 0
            assert cli("shutdown", "--endpoint", endpoint, "--drain-timeout", 30) == 0
            assert proc.wait(30) == 0
        finally:
            proc.kill()
        lines = capsys.readouterr().out.split("\n", 3)
        assert lines[:2] == ["1", "2"]
        assert "listening" in proc.stdout.read()
    log = ExecutionLog.read(tmp_path / "log")
    assert [a.state for a in log.apps] == ["DONE", "DONE"]
    assert log.header["config"]["scheduler"] == "ETF"


def test_bench_run_and_report(synthetic_model, tmp_path, capsys):
    wl = tmp_path / "wl.json"
    wl.write_text(json.dumps({"entries": [{"app": "wifi_tx", "instances": 2}], "rates_mbps": [50, 500],
                              "trials": 1}))
    cfg = RuntimeConfig(emulate_timing=False, cost_model_path=str(synthetic_model.save(tmp_path / "cm.csv")))
    cfg_path = cfg.save(tmp_path / "config.json")
    runs = tmp_path / "runs"
    assert cli("bench", "run", "--workload", wl, "--config", cfg_path, "--out", runs,
               "--schedulers", "RR,EFT") == 0
    assert "4 trials, 0 failed" in capsys.readouterr().out
    assert cli("bench", "report", "--logs", runs) == 0
    rows = (runs / "metrics.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 3
    assert set(json.loads((runs / "plot_data.json").read_text())["exec_time"]) == {"EFT/API", "RR/API"}
