"""Report serialisation and figure rendering.

Every command that produces a report writes three things next to each other:
a flat ``key = value`` text file, a JSON twin for machines, and tab-separated
tables where there is per-row data. The same paths get a rendered PNG figure
(headless Agg backend) so a run can be eyeballed without loading anything.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import MetricReport, SmoothnessReport


def write_kv(path, items) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in items:
            f.write(f"{key} = {value}\n")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def write_tsv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(columns) + "\n")
        for row in rows:
            f.write("\t".join(str(v) for v in row) + "\n")


def write_metric_report(out_dir, report: MetricReport, stem: str = "metrics") -> None:
    write_kv(out_dir / f"{stem}.txt", report.flat_items())
    write_json(out_dir / f"{stem}.json", report.to_dict())
    rows = [(hour, "NA" if v is None else repr(v))
            for hour, v in enumerate(report.per_hour_auc)]
    write_tsv(out_dir / "per_hour_auc.tsv", ("hour", "auc"), rows)
    per_hour_auc_figure(report, out_dir / "per_hour_auc.png")


def per_hour_auc_figure(report: MetricReport, path) -> None:
    hours = np.arange(24)
    values = np.array([np.nan if v is None else v for v in report.per_hour_auc])
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(hours, values, color="#4878a8", width=0.8)
    ax.axhline(report.auc, color="#b04030", lw=1.2, ls="--",
               label=f"overall AUC = {report.auc:.4f}")
    ax.set_xlabel("hour of day")
    ax.set_ylabel("AUC")
    ax.set_xticks(hours[::2])
    lo = np.nanmin(values) if np.isfinite(values).any() else 0.4
    ax.set_ylim(min(0.45, lo - 0.02), 1.0)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_probe_report(out_dir, report: SmoothnessReport, label: str = "probe") -> None:
    items = [
        ("max_adjacent_jump", repr(report.max_adjacent_jump)),
        ("hour_boundary_jump", repr(report.hour_boundary_jump)),
        ("argmax_minute", str(report.argmax_minute)),
        ("n_points", str(len(report.trace))),
    ]
    write_kv(out_dir / f"{label}.txt", items)
    write_json(out_dir / f"{label}.json", {
        "max_adjacent_jump": report.max_adjacent_jump,
        "hour_boundary_jump": report.hour_boundary_jump,
        "argmax_minute": report.argmax_minute,
        "n_points": len(report.trace),
    })
    write_tsv(out_dir / f"{label}_trace.tsv", ("minute", "prediction"),
              [(m, repr(v)) for m, v in enumerate(report.trace)])
    probe_trace_figure(report, out_dir / f"{label}_trace.png")


def probe_trace_figure(report: SmoothnessReport, path) -> None:
    minutes = np.arange(len(report.trace))
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(minutes / 60.0, report.trace, lw=1.0, color="#305080")
    for hour in range(1, 24):
        ax.axvline(hour, color="0.85", lw=0.5, zorder=0)
    ax.set_xlabel("hour of day")
    ax.set_ylabel("predicted probability")
    ax.set_xlim(0, 24)
    ax.set_title(f"max 1-min jump {report.max_adjacent_jump:.2e}, "
                 f"hour-boundary jump {report.hour_boundary_jump:.2e}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_bench_report(out_dir, rows, selection_stats: dict) -> None:
    """Throughput table rows: (M, K, queries_per_sec)."""
    write_tsv(out_dir / "bench.tsv",
              ("history_len", "top_k", "queries_per_sec"),
              [(m, k, f"{qps:.1f}") for m, k, qps in rows])
    write_json(out_dir / "bench.json", {
        "throughput": [{"history_len": m, "top_k": k, "queries_per_sec": qps}
                       for m, k, qps in rows],
        "selection": selection_stats,
    })
    items = [(key, repr(value)) for key, value in sorted(selection_stats.items())]
    write_kv(out_dir / "bench.txt", items)
    bench_figure(rows, out_dir / "bench.png")


def bench_figure(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ks = sorted({k for _, k, _ in rows})
    for k in ks:
        ms = [m for m, kk, _ in rows if kk == k]
        qps = [q for _, kk, q in rows if kk == k]
        ax.plot(ms, qps, marker="o", label=f"K = {k}")
    ax.set_xlabel("history length M")
    ax.set_ylabel("queries / s")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    ax.set_title("retrieval throughput")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curve_figure(log, path, mode: str) -> None:
    if not log:
        return
    steps = [s for s, _ in log]
    losses = [v for _, v in log]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, lw=1.2, color="#406040")
    ax.set_xlabel("step")
    ax.set_ylabel("mean loss")
    ax.set_title(f"training loss ({mode})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
