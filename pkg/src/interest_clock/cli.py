"""Command-line pipeline: generate, train, evaluate, probe, bench.

Every subcommand validates its inputs before doing work and writes both
machine-readable and human-readable outputs (plus figures) into ``--out``.
Exit codes: 0 on success, 1 on validation failures (bad flags, bad config,
malformed files), 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import dataio, reporting
from .behavior_store import BehaviorStore
from .clock_gsu import select_top_k, select_top_k_full_sort, top_k
from .config import RunConfig, default_config_text, load_config
from .errors import ValidationError
from .evaluation import smoothness_probe, streaming_eval
from .params import LicParams, load_checkpoint, save_checkpoint
from .projection_cache import ProjectionCache, Query
from .ranker import Ranker, train_streaming
from .simgen import generate, oracle_auc

logger = logging.getLogger("interest_clock")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse problems through exit code 1
        raise ValidationError(message)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def _build_model(checkpoint_path, data_dir, top_k_override=None):
    params, mode, meta = load_checkpoint(checkpoint_path)
    data_dir = Path(data_dir)
    catalog = dataio.read_items(data_dir / "items.tsv")
    if catalog.embeddings.shape[1] != params.dims.behavior_dim:
        raise ValidationError("catalog embedding width does not match checkpoint")
    histories = dataio.read_history(data_dir / "histories.tsv")
    store = BehaviorStore(params.dims.behavior_dim,
                          capacity=int(meta.get("capacity", 20_000)),
                          catalog=catalog.embeddings)
    for user, (ids, ts) in histories.items():
        store.load_user(user, ids, ts)
    k = top_k_override or int(meta.get("top_k", 100))
    model = Ranker(params, store, mode, top_k=k)
    model.cache = ProjectionCache(store, params)
    return model, catalog, meta


def cmd_generate(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    data = generate(cfg.stream_config())
    dataio.write_items(out / "items.tsv", data.catalog)
    dataio.write_history(out / "histories.tsv", data.histories, data.catalog.genres)
    dataio.write_stream(out / "train.tsv", data.train)
    dataio.write_stream(out / "test.tsv", data.test)
    n_history = sum(len(ids) for ids, _ in data.histories.values())
    summary = {
        "n_users": cfg.n_users,
        "n_items": cfg.n_items,
        "n_history_events": n_history,
        "n_train": len(data.train),
        "n_test": len(data.test),
        "oracle_auc_train": oracle_auc(data.train_true_p, data.train),
        "oracle_auc_test": oracle_auc(data.test_true_p, data.test),
        "seconds": round(time.perf_counter() - t0, 2),
    }
    reporting.write_json(out / "generate_summary.json", summary)
    reporting.write_kv(out / "generate_summary.txt",
                       [(k, repr(v)) for k, v in summary.items()])
    logger.info("generated %d train / %d test samples", len(data.train), len(data.test))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    data_dir = Path(args.data)
    catalog = dataio.read_items(data_dir / "items.tsv")
    if catalog.embeddings.shape[1] != cfg.behavior_dim:
        raise ValidationError("catalog embedding width does not match config")
    histories = dataio.read_history(data_dir / "histories.tsv")
    train = dataio.read_stream(data_dir / "train.tsv")

    store = BehaviorStore(cfg.behavior_dim, capacity=cfg.capacity,
                          catalog=catalog.embeddings)
    for user, (ids, ts) in histories.items():
        store.load_user(user, ids, ts)
    item_init = catalog.embeddings if cfg.query_dim == cfg.behavior_dim else None
    params = LicParams.init(cfg.model_dims(), seed=cfg.seed, item_init=item_init)
    model = Ranker(params, store, args.mode, top_k=cfg.top_k)

    t0 = time.perf_counter()
    log = train_streaming(model, train, lr=cfg.learning_rate)
    elapsed = time.perf_counter() - t0

    ckpt = out / f"model_{args.mode}.ckpt"
    save_checkpoint(ckpt, params, args.mode,
                    meta={"top_k": cfg.top_k, "capacity": cfg.capacity,
                          "seed": cfg.seed, "learning_rate": cfg.learning_rate})
    reporting.write_tsv(out / f"train_log_{args.mode}.tsv",
                        ("step", "mean_loss"),
                        [(s, repr(v)) for s, v in log])
    reporting.loss_curve_figure(log, out / f"train_loss_{args.mode}.png", args.mode)
    logger.info("trained %s on %d samples in %.1fs (rejected steps: %d)",
                args.mode, len(train), elapsed, model.rejected_steps)
    print(f"checkpoint written: {ckpt}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    model, _, _ = _build_model(args.checkpoint, args.data)
    test = dataio.read_stream(Path(args.data) / "test.tsv")
    baseline = None
    if args.baseline:
        with open(args.baseline, "r", encoding="utf-8") as f:
            base = json.load(f)
        baseline = (float(base["auc"]), float(base["uauc"]))
    report = streaming_eval(test, model, protocol="frozen", baseline=baseline)
    reporting.write_metric_report(out, report)
    print(f"auc = {report.auc:.6f}  uauc = {report.uauc:.6f}  "
          f"n = {report.n_samples}")
    return EXIT_OK


def cmd_probe(args) -> int:
    out = _out_dir(args)
    model, catalog, _ = _build_model(args.checkpoint, args.data)
    if not 0 <= args.item < len(catalog.genres):
        raise ValidationError(f"item {args.item} not in catalog")
    try:
        day = datetime.strptime(args.date, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    except ValueError:
        raise ValidationError(f"bad --date {args.date!r}, expected YYYY-MM-DD") from None
    report = smoothness_probe(model, args.user, args.item,
                              int(catalog.genres[args.item]),
                              int(day.timestamp()))
    reporting.write_probe_report(out, report)
    print(f"max_adjacent_jump = {report.max_adjacent_jump:.3e}  "
          f"hour_boundary_jump = {report.hour_boundary_jump:.3e}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    rng = np.random.default_rng(cfg.seed)
    dims = cfg.model_dims()
    dims.n_users = 4
    dims.n_items = max(dims.n_items, 1)
    params = LicParams.init(dims, seed=cfg.seed)

    rows = []
    for m in (1_000, 5_000, 10_000, 20_000):
        emb = rng.standard_normal((m, cfg.behavior_dim))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        ts = np.sort(rng.integers(0, 365 * 86_400, size=m))
        store = BehaviorStore(cfg.behavior_dim, capacity=max(cfg.capacity, m),
                              catalog=emb)
        store.load_user(0, np.arange(m), ts)
        cache = ProjectionCache(store, params)
        cache.sequence_matrix(0)  # warm the projections
        seq = store.snapshot(0)
        for k in (50, 100, 200):
            queries = [Query(vector=rng.standard_normal(cfg.query_dim),
                             clock_time=int(rng.integers(0, 86_400)))
                       for _ in range(32)]
            t0 = time.perf_counter()
            for q in queries:
                top_k(seq, q, params, k=k, cache=cache)
            dt = time.perf_counter() - t0
            rows.append((m, k, len(queries) / dt))

    # selection stage alone: shipped partial selection vs the full-sort oracle
    m, k = 10_000, 100
    scores = rng.standard_normal(m)
    ts = rng.integers(0, 10**9, size=m)
    reps = 30
    t0 = time.perf_counter()
    for _ in range(reps):
        select_top_k(scores, ts, k)
    fast = (time.perf_counter() - t0) / reps
    t0 = time.perf_counter()
    for _ in range(reps):
        select_top_k_full_sort(scores, ts, k)
    slow = (time.perf_counter() - t0) / reps
    stats = {
        "selection_m": m,
        "selection_k": k,
        "partial_selection_sec": fast,
        "full_sort_sec": slow,
        "speedup": slow / fast,
    }
    reporting.write_bench_report(out, rows, stats)
    for m, k, qps in rows:
        print(f"M={m:>6d}  K={k:>4d}  {qps:>10.1f} queries/s")
    print(f"selection speedup over full sort at M={stats['selection_m']}: "
          f"{stats['speedup']:.1f}x")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="interest-clock",
                     description="time-aware streaming recommendation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode_flag=False):
        p.add_argument("--config", help="flat key=value run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", required=True, help="output directory")
        if mode_flag:
            p.add_argument("--mode", required=True,
                           choices=("no_time", "hour_embedding", "lic"))

    p = sub.add_parser("generate", help="write a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="single streaming pass over the train file")
    common(p, mode_flag=True)
    p.add_argument("--data", required=True, help="directory with generated dataset")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="frozen-model metrics on the test file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", help="metrics.json of a baseline run for RelaImpr")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("probe", help="1-minute prediction sweep over one day")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--user", type=int, required=True)
    p.add_argument("--item", type=int, required=True)
    p.add_argument("--date", required=True, help="YYYY-MM-DD (UTC)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("bench", help="retrieval throughput table")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("print-config", help="print the default configuration")
    p.set_defaults(func=lambda args: (print(default_config_text(), end=""), EXIT_OK)[1])
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("INTEREST_CLOCK_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001  (runtime failures map to exit 2)
        logger.exception("runtime failure")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
