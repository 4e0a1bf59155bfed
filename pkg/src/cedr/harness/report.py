"""Report emission: a long-format CSV plus JSON plot data (x = rate, one series per scheduler)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .metrics import METRICS, MetricsReport

CSV_FIELDS = ("rate_mbps", "scheduler", "mode", "metric", "mean_ms", "std_ms", "trials", "incomplete")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def report_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in sorted(report.rows, key=lambda r: (r.scheduler, r.mode, METRICS.index(r.metric), r.rate_mbps)):
        writer.writerow([f"{r.rate_mbps:g}", r.scheduler, r.mode, r.metric, _fmt(r.mean_ms), _fmt(r.std_ms),
                         r.trials, r.incomplete])
    return buf.getvalue()


def plot_data(report: MetricsReport) -> dict:
    out = {}
    for metric in METRICS:
        series = {}
        for r in report.rows:
            if r.metric == metric:
                key = f"{r.scheduler}/{r.mode}"
                series.setdefault(key, []).append((r.rate_mbps, round(r.mean_ms, 6), round(r.std_ms, 6)))
        out[metric] = {
            key: {"x": [p[0] for p in sorted(pts)], "y": [p[1] for p in sorted(pts)],
                  "std": [p[2] for p in sorted(pts)]}
            for key, pts in sorted(series.items())
        }
    return out


def emit_report(report: MetricsReport, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "metrics.csv"
    csv_path.write_text(report_csv(report))
    plot_path = out_dir / "plot_data.json"
    plot_path.write_text(json.dumps(plot_data(report), indent=1, sort_keys=True) + "\n")
    return csv_path, plot_path
