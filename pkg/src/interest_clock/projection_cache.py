"""Precomputed per-head projections, standing in for an online parameter server.

Retrieval scores only ever need ``behavior_proj @ b`` and ``query_proj @ q``.
Both are precomputed here: behavior projections once per user history, query
projections once per candidate, so scoring a ten-thousand-event history is a
single matrix-vector product. Entries are tagged with the parameter version;
anything computed under an older version is recomputed on access, and
training code additionally invalidates touched users after each step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .behavior_store import BehaviorSequence, BehaviorStore
from .errors import DimensionError
from .params import LicParams


@dataclass
class Query:
    """Candidate item embedding plus the clock time of the request."""

    vector: np.ndarray      # (H,)
    clock_time: int         # seconds into the day


@dataclass
class ProjectedBehavior:
    per_head: list          # n_heads arrays of shape (d,)
    behavior_index: int
    clock_time: int
    params_version: int

    @property
    def concat(self) -> np.ndarray:
        return np.concatenate(self.per_head)


@dataclass
class ProjectedQuery:
    per_head: list          # n_heads arrays of shape (d,)
    clock_time: int
    params_version: int

    @property
    def concat(self) -> np.ndarray:
        return np.concatenate(self.per_head)


def behavior_projection_matrix(params: LicParams) -> np.ndarray:
    """Stacked per-head behavior projections, shape (n_heads*d, L)."""
    return np.concatenate([h.behavior_proj for h in params.heads], axis=0)


def query_projection_matrix(params: LicParams) -> np.ndarray:
    """Stacked per-head query projections, shape (n_heads*d, H)."""
    return np.concatenate([h.query_proj for h in params.heads], axis=0)


def precompute_sequence(seq: BehaviorSequence, params: LicParams) -> list[ProjectedBehavior]:
    """Project every behavior of a sequence with each head, in order."""
    if len(seq) == 0:
        return []
    emb = seq.embeddings
    if emb.shape[1] != params.dims.behavior_dim:
        raise DimensionError(
            f"behavior embeddings have width {emb.shape[1]}, "
            f"params expect {params.dims.behavior_dim}")
    per_head = [emb @ h.behavior_proj.T for h in params.heads]  # each (M, d)
    clocks = seq.clock_seconds
    return [
        ProjectedBehavior(
            per_head=[ph[m] for ph in per_head],
            behavior_index=m,
            clock_time=int(clocks[m]),
            params_version=params.version,
        )
        for m in range(len(seq))
    ]


def project_query(q: Query, params: LicParams) -> ProjectedQuery:
    """Project a candidate query with each head."""
    vec = np.asarray(q.vector, dtype=np.float64)
    if vec.shape != (params.dims.query_dim,):
        raise DimensionError(
            f"query has shape {vec.shape}, params expect ({params.dims.query_dim},)")
    return ProjectedQuery(
        per_head=[h.query_proj @ vec for h in params.heads],
        clock_time=q.clock_time,
        params_version=params.version,
    )


class ProjectionCache:
    """Per-user cache of concatenated behavior projections.

    ``sequence_matrix`` returns the (M, n_heads*d) projection matrix for a
    user's current snapshot, recomputing when the cached entry was built under
    a different parameter version or history length.
    """

    def __init__(self, store: BehaviorStore, params: LicParams):
        self.store = store
        self.params = params
        self._entries: dict[int, tuple[int, int, np.ndarray]] = {}

    def sequence_matrix(self, user_id: int) -> tuple[BehaviorSequence, np.ndarray]:
        seq = self.store.snapshot(user_id)
        entry = self._entries.get(user_id)
        if entry is not None:
            version, length, mat = entry
            if version == self.params.version and length == len(seq):
                return seq, mat
        if len(seq) == 0:
            mat = np.empty((0, self.params.dims.concat_dim), dtype=np.float64)
        else:
            mat = seq.embeddings @ behavior_projection_matrix(self.params).T
        self._entries[user_id] = (self.params.version, len(seq), mat)
        return seq, mat

    def invalidate(self, user_id: int) -> None:
        """Drop one user's entry; unknown users are a no-op."""
        self._entries.pop(user_id, None)

    def invalidate_all(self) -> None:
        self._entries.clear()
