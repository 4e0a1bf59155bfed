"""Command-line entry points.

    cedr daemon --config cfg.json
    cedr submit --endpoint /tmp/cedr.sock pulse_doppler [--mode DAG --dag pd.json] [--param k=v ...]
    cedr status --endpoint ... | cedr shutdown --endpoint ...
    cedr profile --out cost_model.csv
    cedr export-dag lane_detection --out dags/
    cedr bench run --workload wl.json --config cfg.json --out runs/
    cedr bench report --logs runs/
    cedr --list-apps
"""

from __future__ import annotations

import argparse
import gc
import json
import logging
import signal
import sys
from pathlib import Path

from .apps import REGISTRY, export_dag
from .errors import CedrError
from .model import CostModel, RuntimeConfig, SchedulerName

log = logging.getLogger("cedr")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"--param expects key=value, got {pair!r}")
        out[key] = _parse_value(value)
    return out


def _load_config(args) -> RuntimeConfig:
    cfg = RuntimeConfig.load(args.config)
    overrides = {}
    if getattr(args, "scheduler", None):
        overrides["scheduler"] = args.scheduler
    if overrides:
        cfg = RuntimeConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def _ensure_cost_model(cfg: RuntimeConfig) -> CostModel:
    path = cfg.cost_model_path
    if path and Path(path).exists():
        return CostModel.load(path)
    from .harness.profile import profile_cost_model

    log.warning("cost model %s not found; profiling this host", path)
    model = profile_cost_model()
    if path:
        model.save(path)
    return model


def cmd_daemon(args) -> int:
    from .runtime import Runtime

    cfg = _load_config(args)
    if not cfg.ipc_endpoint:
        raise SystemExit("daemon needs ipc_endpoint in its config")
    model = _ensure_cost_model(cfg)
    # collector pauses land on whichever thread allocates; keep them rare
    gc.collect()
    gc.freeze()
    gc.set_threshold(50_000, 50, 100)
    rt = Runtime(cfg, model).start()

    def _stop(signum, frame):
        rt.post(("shutdown", {"drain_timeout_s": None}, lambda reply: None, 0))

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    print(f"cedr daemon listening on {cfg.ipc_endpoint}", flush=True)
    while not rt.wait_stopped(0.2):
        pass
    rt.shutdown()
    return 0


def cmd_submit(args) -> int:
    from .runtime.ipc import IpcClient

    params = _params(args.param)
    if args.dag:
        params["dag"] = str(Path(args.dag).resolve())
    app_id = IpcClient(args.endpoint).submit(args.app, args.mode, params)
    print(app_id)
    return 0


def cmd_status(args) -> int:
    from .runtime.ipc import IpcClient

    print(json.dumps(IpcClient(args.endpoint).status(), indent=2))
    return 0


def cmd_shutdown(args) -> int:
    from .runtime.ipc import IpcClient

    print(json.dumps(IpcClient(args.endpoint, timeout=None).shutdown(args.drain_timeout), indent=2))
    return 0


def cmd_profile(args) -> int:
    from .harness.profile import ProfileSpec, profile_cost_model

    spec = ProfileSpec(runs=args.runs, cpu_scale=args.cpu_scale)
    model = profile_cost_model(spec)
    model.save(args.out)
    print(f"wrote {len(model.table)} rows to {args.out}")
    return 0


def cmd_export_dag(args) -> int:
    print(export_dag(args.app, args.out, _params(args.param)))
    return 0


def cmd_bench_run(args) -> int:
    from .harness.workload import PAPER_RATES, WorkloadSpec, run_workload

    spec = WorkloadSpec.load(args.workload)
    if args.paper_scale:
        spec.rates_mbps, spec.trials = list(PAPER_RATES), 25
    if args.trials:
        spec.trials = args.trials
    cfg = _load_config(args)
    if cfg.cost_model_path:
        cfg.cost_model_path = str(Path(cfg.cost_model_path).resolve())
        _ensure_cost_model(cfg)
    schedulers = args.schedulers.split(",") if args.schedulers else None
    results = run_workload(spec, cfg, args.out, schedulers)
    failed = sum(not r.ok for r in results)
    print(f"{len(results)} trials, {failed} failed; logs in {args.out}")
    return 1 if failed == len(results) else 0


def cmd_bench_report(args) -> int:
    from .harness.metrics import compute_metrics, load_sweep
    from .harness.report import emit_report

    trials, failed = load_sweep(args.logs)
    report = compute_metrics(trials, failed)
    csv_path, plot_path = emit_report(report, args.out or args.logs)
    print(f"wrote {csv_path} and {plot_path} ({len(report.rows)} rows, {failed} failed trials)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cedr", description="Heterogeneous task runtime with API-based programming")
    parser.add_argument("--list-apps", action="store_true", help="list registered applications and exit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("daemon", help="run the runtime daemon")
    p.add_argument("--config", required=True)
    p.add_argument("--scheduler", choices=[s.value for s in SchedulerName])
    p.set_defaults(func=cmd_daemon)

    p = sub.add_parser("submit", help="submit an application to a running daemon")
    p.add_argument("app")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--mode", default="API", choices=["API", "DAG"])
    p.add_argument("--dag", help="DAG file for DAG mode")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("status", help="query a running daemon")
    p.add_argument("--endpoint", required=True)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("shutdown", help="drain and stop a running daemon")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--drain-timeout", type=float)
    p.set_defaults(func=cmd_shutdown)

    p = sub.add_parser("profile", help="profile kernels and write a cost model")
    p.add_argument("--out", required=True)
    p.add_argument("--runs", type=int, default=11)
    p.add_argument("--cpu-scale", type=float, default=32.0)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("export-dag", help="write an application's DAG-mode twin as JSON")
    p.add_argument("app")
    p.add_argument("--out", required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_export_dag)

    bench = sub.add_parser("bench", help="workload sweeps and reports")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    p = bsub.add_parser("run")
    p.add_argument("--workload", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheduler", choices=[s.value for s in SchedulerName])
    p.add_argument("--schedulers", help="comma-separated list to sweep")
    p.add_argument("--trials", type=int)
    p.add_argument("--paper-scale", action="store_true", help="29 rates x 25 trials")
    p.set_defaults(func=cmd_bench_run)
    p = bsub.add_parser("report")
    p.add_argument("--logs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.list_apps:
        for name in REGISTRY.names():
            spec = REGISTRY[name]
            print(f"{name:16s} aliases={','.join(spec.aliases)} defaults={spec.defaults}")
        return 0
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except CedrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
