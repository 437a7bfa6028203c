"""Stage-2 attention over the retrieved sub-sequence.

Retrieved behaviors are augmented with their four gap features, scored per
head (item similarity against the head's projected query plus the shared gap
score), pooled with a numerically stable softmax, and the four head outputs
are fused by a two-layer network into the current-interest vector. A user
with nothing retrieved falls back to a dedicated learnable vector.

``esu_forward_traced`` returns every intermediate needed to backpropagate
through the stack exactly; the plain ``esu_forward`` just discards the trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clock_gsu import SubSequence
from .params import FusionNet, LicParams, TimeScoreNet
from .projection_cache import ProjectedQuery, Query, project_query
from .temporal import circular_gap_array, time_features_array


def stable_softmax(x: np.ndarray) -> np.ndarray:
    """Softmax with max subtraction; sums to 1 for any finite input."""
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


def augment(sub: SubSequence, t_cur: int) -> np.ndarray:
    """Sub-sequence rows with gap features appended, shape (K', L+4)."""
    gaps = circular_gap_array(sub.clock_seconds, t_cur)
    return np.concatenate([sub.embeddings, time_features_array(gaps)], axis=1)


def head_attention(z_aug: np.ndarray, sub: SubSequence, pq: ProjectedQuery,
                   t_cur: int, head_index: int, params: LicParams) -> np.ndarray:
    """Pooled output of one head, shape (d,)."""
    head = params.heads[head_index]
    e = pq.per_head[head_index]
    d = params.dims.head_dim
    gaps = circular_gap_array(sub.clock_seconds, t_cur)
    time_term = _time_scores(gaps, params.time_net)
    alpha = (sub.embeddings @ head.behavior_proj.T) @ e / np.sqrt(d) + time_term
    weights = stable_softmax(alpha)
    return (weights @ z_aug) @ head.value_proj


def _time_scores(gaps: np.ndarray, net: TimeScoreNet) -> np.ndarray:
    feats = time_features_array(gaps)
    hidden = np.maximum(feats @ net.w1.T + net.b1, 0.0)
    return hidden @ net.w2 + net.b2


def fuse(head_outputs, net: FusionNet) -> np.ndarray:
    """Two-layer fusion of the concatenated head outputs."""
    cat = np.concatenate(head_outputs)
    hidden = np.maximum(net.w1 @ cat + net.b1, 0.0)
    return net.w2 @ hidden + net.b2


@dataclass
class EsuTrace:
    """Intermediates of one forward pass, consumed by the backward pass."""

    empty: bool
    z_aug: np.ndarray | None = None          # (K', L+4)
    gap_features: np.ndarray | None = None   # (K', 4)
    time_hidden_pre: np.ndarray | None = None  # (K', hidden) before rectifier
    time_scores: np.ndarray | None = None    # (K',)
    query_proj: list | None = None           # per head, (d,)
    behavior_proj: list | None = None        # per head, (K', d)
    alphas: list | None = None               # per head, (K',)
    weights: list | None = None              # per head, softmax(alpha)
    pooled_aug: list | None = None           # per head, weights @ z_aug, (L+4,)
    head_outputs: list | None = None         # per head, (d,)
    fusion_input: np.ndarray | None = None   # (4d,)
    fusion_hidden_pre: np.ndarray | None = None  # (2d,)
    v_cur: np.ndarray | None = None          # (d,)


def esu_forward_traced(sub: SubSequence, q: Query, params: LicParams,
                       pq: ProjectedQuery | None = None) -> tuple[np.ndarray, EsuTrace]:
    """Full attention stack with every intermediate recorded."""
    if len(sub) == 0:
        v = params.default_interest.copy()
        return v, EsuTrace(empty=True, v_cur=v)
    if pq is None:
        pq = project_query(q, params)
    d = params.dims.head_dim
    net = params.time_net

    gaps = circular_gap_array(sub.clock_seconds, q.clock_time)
    feats = time_features_array(gaps)
    z_aug = np.concatenate([sub.embeddings, feats], axis=1)

    time_pre = feats @ net.w1.T + net.b1
    time_scores = np.maximum(time_pre, 0.0) @ net.w2 + net.b2

    behavior_proj, alphas, weights, pooled, head_outputs = [], [], [], [], []
    for i, head in enumerate(params.heads):
        bp = sub.embeddings @ head.behavior_proj.T        # (K', d)
        alpha = bp @ pq.per_head[i] / np.sqrt(d) + time_scores
        w = stable_softmax(alpha)
        pooled_aug = w @ z_aug                            # (L+4,)
        behavior_proj.append(bp)
        alphas.append(alpha)
        weights.append(w)
        pooled.append(pooled_aug)
        head_outputs.append(pooled_aug @ head.value_proj)

    cat = np.concatenate(head_outputs)
    hidden_pre = params.fusion.w1 @ cat + params.fusion.b1
    v_cur = params.fusion.w2 @ np.maximum(hidden_pre, 0.0) + params.fusion.b2

    trace = EsuTrace(
        empty=False,
        z_aug=z_aug,
        gap_features=feats,
        time_hidden_pre=time_pre,
        time_scores=time_scores,
        query_proj=pq.per_head,
        behavior_proj=behavior_proj,
        alphas=alphas,
        weights=weights,
        pooled_aug=pooled,
        head_outputs=head_outputs,
        fusion_input=cat,
        fusion_hidden_pre=hidden_pre,
        v_cur=v_cur,
    )
    return v_cur, trace


def esu_forward(sub: SubSequence, q: Query, params: LicParams) -> np.ndarray:
    """Current-interest vector for a retrieved sub-sequence."""
    v_cur, _ = esu_forward_traced(sub, q, params)
    return v_cur
