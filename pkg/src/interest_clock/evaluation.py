"""Offline ranking metrics and the prediction-smoothness probe.

AUC is computed by rank summation with average ranks on ties, which matches
pairwise counting (ties worth half) exactly. UAUC is the impression-weighted
mean of per-user AUCs over users that have both classes. RelaImpr is the
plain percentage ratio of a metric against a baseline value.

The smoothness probe sweeps a frozen model over one day in one-minute steps
for a fixed user and item, recording the prediction trace and its largest
adjacent jump, plus the largest jump across an hour boundary, which is where
discrete hour features snap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .ranker import Sample
from .temporal import clock_of_day

MINUTES_PER_DAY = 1440


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    n = len(scores)
    order = np.argsort(scores, kind="mergesort")
    sorted_s = scores[order]
    boundary = np.flatnonzero(np.diff(sorted_s) != 0) + 1
    starts = np.concatenate([[0], boundary])
    ends = np.concatenate([boundary, [n]])
    group_rank = (starts + ends + 1) / 2.0  # mean of 1-based positions
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be equal-length vectors")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = _average_ranks(scores)
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def uauc(user_ids, scores, labels) -> tuple[float, int]:
    """Impression-weighted mean per-user AUC; returns (uauc, users counted).

    Users with a single class contribute neither value nor weight.
    """
    user_ids = np.asarray(user_ids)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    weight = 0
    n_scored = 0
    for user in np.unique(user_ids):
        mask = user_ids == user
        user_labels = labels[mask]
        if user_labels.min() == user_labels.max():
            continue
        w = int(mask.sum())
        total += w * auc(scores[mask], user_labels)
        weight += w
        n_scored += 1
    if weight == 0:
        raise UndefinedMetricError("no user has both classes")
    return total / weight, n_scored


def rela_impr(metric_new: float, metric_base: float) -> float:
    """Relative improvement in percent: 100 * (new / base - 1)."""
    if metric_base <= 0:
        raise UndefinedMetricError("baseline metric must be positive")
    return 100.0 * (metric_new / metric_base - 1.0)


@dataclass
class MetricReport:
    auc: float
    uauc: float
    n_samples: int
    n_users_scored: int
    per_hour_auc: list                  # 24 entries, None where undefined
    rela_impr_auc: float | None = None
    rela_impr_uauc: float | None = None

    def flat_items(self) -> list[tuple[str, str]]:
        """Key-value pairs for the plain-text report."""
        def fmt(v):
            return "NA" if v is None else repr(float(v))
        items = [
            ("auc", fmt(self.auc)),
            ("uauc", fmt(self.uauc)),
            ("rela_impr_auc_pct", fmt(self.rela_impr_auc)),
            ("rela_impr_uauc_pct", fmt(self.rela_impr_uauc)),
            ("n_samples", str(self.n_samples)),
            ("n_users_scored", str(self.n_users_scored)),
        ]
        for hour, value in enumerate(self.per_hour_auc):
            items.append((f"per_hour_auc_{hour:02d}", fmt(value)))
        return items

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "uauc": self.uauc,
            "rela_impr_auc_pct": self.rela_impr_auc,
            "rela_impr_uauc_pct": self.rela_impr_uauc,
            "n_samples": self.n_samples,
            "n_users_scored": self.n_users_scored,
            "per_hour_auc": self.per_hour_auc,
        }


def build_report(user_ids, scores, labels, timestamps,
                 baseline: tuple[float, float] | None = None) -> MetricReport:
    """Full metric report from raw score/label arrays."""
    user_ids = np.asarray(user_ids)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    timestamps = np.asarray(timestamps, dtype=np.int64)

    overall = auc(scores, labels)
    per_user, n_scored = uauc(user_ids, scores, labels)

    hours = (timestamps % 86_400) // 3600
    per_hour = []
    for hour in range(24):
        mask = hours == hour
        if not mask.any():
            per_hour.append(None)  # absent bucket, not zero
            continue
        try:
            per_hour.append(auc(scores[mask], labels[mask]))
        except UndefinedMetricError:
            per_hour.append(None)

    report = MetricReport(
        auc=overall,
        uauc=per_user,
        n_samples=len(labels),
        n_users_scored=n_scored,
        per_hour_auc=per_hour,
    )
    if baseline is not None:
        base_auc, base_uauc = baseline
        report.rela_impr_auc = rela_impr(overall, base_auc)
        report.rela_impr_uauc = rela_impr(per_user, base_uauc)
    return report


def streaming_eval(samples, model, protocol: str = "frozen", lr: float = 0.01,
                   baseline: tuple[float, float] | None = None) -> MetricReport:
    """Score a time-ordered stream with a model.

    ``frozen`` keeps parameters fixed; ``progressive`` predicts each sample
    first and then takes a training step on it, mutating the model.
    """
    if protocol not in ("frozen", "progressive"):
        raise ValidationError(f"unknown protocol {protocol!r}")
    scores = np.empty(len(samples))
    for i, sample in enumerate(samples):
        if protocol == "frozen":
            scores[i] = model.forward(sample)
        else:
            result = model.backward(sample)
            scores[i] = result.y_hat
            model.sgd_step(result.grads, lr)
    user_ids = np.fromiter((s.user_id for s in samples), dtype=np.int64,
                           count=len(samples))
    labels = np.fromiter((s.label for s in samples), dtype=np.int64,
                         count=len(samples))
    ts = np.fromiter((s.timestamp for s in samples), dtype=np.int64,
                     count=len(samples))
    return build_report(user_ids, scores, labels, ts, baseline=baseline)


@dataclass
class SmoothnessReport:
    max_adjacent_jump: float
    hour_boundary_jump: float
    argmax_minute: int
    trace: np.ndarray                   # 1441 predictions, minute steps


def smoothness_probe(model, user_id: int, item_id: int, genre_id: int,
                     day_start_epoch: int) -> SmoothnessReport:
    """Sweep one (user, item) over a day in 1-minute steps, frozen params."""
    if clock_of_day(day_start_epoch) != 0:
        raise ValidationError("day_start_epoch must be a midnight timestamp")
    trace = np.empty(MINUTES_PER_DAY + 1)
    for minute in range(MINUTES_PER_DAY + 1):
        sample = Sample(user_id=user_id, item_id=item_id, genre_id=genre_id,
                        timestamp=day_start_epoch + 60 * minute, label=0)
        trace[minute] = model.forward(sample)
    jumps = np.abs(np.diff(trace))
    boundary = np.arange(59, MINUTES_PER_DAY, 60)  # hh:59 -> hh+1:00 steps
    return SmoothnessReport(
        max_adjacent_jump=float(jumps.max()),
        hour_boundary_jump=float(jumps[boundary].max()),
        argmax_minute=int(jumps.argmax()),
        trace=trace,
    )
