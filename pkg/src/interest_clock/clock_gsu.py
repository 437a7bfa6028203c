"""Stage-1 retrieval: score a whole history, keep the best K events.

Each behavior gets an item-similarity term (dot product of the concatenated
per-head projections, scaled by the square root of the concatenated width)
plus a learned score of its clock-time gap to the request. Selection keeps
the K highest-scoring events; exact ties prefer the more recent timestamp,
then the lower behavior index.

The shipped selector is a vectorised partial selection (``np.argpartition``
with exact handling of score ties at the cut), which is an order of magnitude
faster than fully sorting a ten-thousand-event history. A plain full-sort
selector is kept alongside it as the correctness oracle and benchmark
baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .behavior_store import BehaviorSequence
from .errors import StalenessError
from .params import LicParams, TimeScoreNet
from .projection_cache import (
    ProjectedBehavior,
    ProjectedQuery,
    ProjectionCache,
    Query,
    behavior_projection_matrix,
    project_query,
)
from .temporal import circular_gap, circular_gap_array, time_features, time_features_array

DEFAULT_TOP_K = 100


def time_score(tf: np.ndarray, net: TimeScoreNet) -> float:
    """Scalar output of the two-layer gap-score network."""
    hidden = np.maximum(net.w1 @ tf + net.b1, 0.0)
    return float(net.w2 @ hidden + net.b2)


def time_score_array(tf_matrix: np.ndarray, net: TimeScoreNet) -> np.ndarray:
    """Gap-score network over a (M, 4) feature matrix; returns (M,)."""
    hidden = np.maximum(tf_matrix @ net.w1.T + net.b1, 0.0)
    return hidden @ net.w2 + net.b2


def gsu_score(pb: ProjectedBehavior, pq: ProjectedQuery, t_cur: int,
              net: TimeScoreNet) -> float:
    """Relevance of one projected behavior to one projected query."""
    if pb.params_version != pq.params_version:
        raise StalenessError(
            f"behavior projections are version {pb.params_version}, "
            f"query projections are version {pq.params_version}")
    b_cat = pb.concat
    q_cat = pq.concat
    item_term = float(b_cat @ q_cat) / np.sqrt(len(b_cat))
    gap = circular_gap(pb.clock_time, t_cur)
    return item_term + time_score(time_features(gap), net)


def score_sequence(proj_matrix: np.ndarray, q_cat: np.ndarray,
                   clock_seconds: np.ndarray, t_cur: int,
                   net: TimeScoreNet) -> np.ndarray:
    """Vectorised relevance scores for a whole projected history."""
    item_term = proj_matrix @ (q_cat / np.sqrt(len(q_cat)))
    gaps = circular_gap_array(clock_seconds, t_cur)
    return item_term + time_score_array(time_features_array(gaps), net)


def score_sequence_lowrank(embeddings: np.ndarray, proj_stack: np.ndarray,
                           q_cat: np.ndarray, clock_seconds: np.ndarray,
                           t_cur: int, net: TimeScoreNet) -> np.ndarray:
    """Same scores computed as ``B @ (W^T q)`` instead of ``(B @ W^T) @ q``.

    Used on the training path, where projections would be recomputed every
    step anyway; identical up to float reassociation. Selection is treated as
    a constant during differentiation, so the reassociation is harmless.
    """
    folded = proj_stack.T @ (q_cat / np.sqrt(len(q_cat)))
    item_term = embeddings @ folded
    gaps = circular_gap_array(clock_seconds, t_cur)
    return item_term + time_score_array(time_features_array(gaps), net)


def select_top_k(scores: np.ndarray, timestamps: np.ndarray, k: int) -> np.ndarray:
    """Indices of the K best entries, ranked best-first.

    Ordering: score descending, then timestamp descending, then index
    ascending. Runs a partial selection, then resolves exact score ties at
    the cut explicitly.
    """
    m = len(scores)
    if k <= 0:
        raise ValueError("k must be >= 1")
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if m <= k:
        chosen = np.arange(m)
    else:
        part = np.argpartition(scores, m - k)[m - k:]
        threshold = scores[part].min()
        above = np.flatnonzero(scores > threshold)
        if len(above) == k:
            chosen = above
        else:
            at = np.flatnonzero(scores == threshold)
            need = k - len(above)
            # tie block: more recent timestamp first, then lower index
            order = np.lexsort((at, -timestamps[at]))
            chosen = np.concatenate([above, at[order[:need]]])
    rank = np.lexsort((chosen, -timestamps[chosen], -scores[chosen]))
    return chosen[rank].astype(np.int64)


def select_top_k_full_sort(scores: np.ndarray, timestamps: np.ndarray, k: int) -> np.ndarray:
    """Brute-force selector: sort everything, take the first K."""
    order = sorted(range(len(scores)),
                   key=lambda i: (-scores[i], -timestamps[i], i))
    return np.asarray(order[:k], dtype=np.int64)


@dataclass
class ScoredBehavior:
    behavior_index: int
    score: float
    gap_minutes: float


class SubSequence:
    """Top-K retrieval result, ranked best-first, with embeddings attached."""

    def __init__(self, indices, scores, gaps_minutes, timestamps, clock_seconds,
                 embeddings):
        self.indices = indices              # (K',) positions within the history
        self.scores = scores                # (K',)
        self.gaps_minutes = gaps_minutes    # (K',) relative to the query clock
        self.timestamps = timestamps        # (K',)
        self.clock_seconds = clock_seconds  # (K',)
        self.embeddings = embeddings        # (K', L)

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def empty(cls, behavior_dim: int) -> "SubSequence":
        z = np.empty(0, dtype=np.int64)
        f = np.empty(0, dtype=np.float64)
        return cls(z, f.copy(), f.copy(), z.copy(), z.copy(),
                   np.empty((0, behavior_dim), dtype=np.float64))

    def entries(self) -> list[ScoredBehavior]:
        return [ScoredBehavior(int(i), float(s), float(g))
                for i, s, g in zip(self.indices, self.scores, self.gaps_minutes)]


def build_subsequence(seq: BehaviorSequence, scores: np.ndarray, t_cur: int,
                       k: int) -> SubSequence:
    chosen = select_top_k(scores, seq.timestamps, k)
    clocks = seq.clock_seconds[chosen]
    return SubSequence(
        indices=chosen,
        scores=scores[chosen],
        gaps_minutes=circular_gap_array(clocks, t_cur),
        timestamps=seq.timestamps[chosen],
        clock_seconds=clocks,
        embeddings=seq.embeddings[chosen],
    )


def top_k(seq: BehaviorSequence, q: Query, params: LicParams,
          k: int = DEFAULT_TOP_K, cache: ProjectionCache | None = None) -> SubSequence:
    """Retrieve the K most relevant behaviors for a query.

    With a cache, behavior projections come from it; otherwise they are
    computed on the spot. The query projection is always fresh.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(seq) == 0:
        return SubSequence.empty(params.dims.behavior_dim)
    if cache is not None:
        seq_cached, proj = cache.sequence_matrix(seq.user_id)
        if len(seq_cached) == len(seq):
            seq = seq_cached
        else:
            proj = seq.embeddings @ behavior_projection_matrix(params).T
    else:
        proj = seq.embeddings @ behavior_projection_matrix(params).T
    pq = project_query(q, params)
    scores = score_sequence(proj, pq.concat, seq.clock_seconds, q.clock_time,
                            params.time_net)
    return build_subsequence(seq, scores, q.clock_time, k)
