"""Per-user long-term behavior sequences with immutable snapshots.

A store holds up to ``capacity`` events per user (default 20,000, covering
histories well past the ten-thousand mark) in a circular buffer: appends must
arrive in timestamp order, and once a user is at capacity the oldest event is
dropped. Snapshots copy the index arrays, so they stay valid while the store
keeps moving.

Behavior embeddings are not duplicated per event. Events store item ids; an
``ItemVectors`` lookup (usually a dense catalog matrix) materialises the
embedding rows on demand, and a snapshot caches the materialised matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OrderingError, ValidationError
from .temporal import clock_of_day_array

DEFAULT_CAPACITY = 20_000


class ItemVectors:
    """Maps item ids to embedding rows.

    Either wraps a dense ``(n_items, dim)`` catalog matrix, or grows an
    id -> row mapping from individually registered behaviors.
    """

    def __init__(self, dim: int, matrix: np.ndarray | None = None):
        self.dim = dim
        self._matrix = None
        self._by_id: dict[int, np.ndarray] = {}
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.ndim != 2 or matrix.shape[1] != dim:
                raise ValidationError(f"catalog matrix must be (n, {dim})")
            self._matrix = matrix

    def register(self, item_id: int, row: np.ndarray) -> None:
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.dim,):
            raise ValidationError(f"embedding must have shape ({self.dim},)")
        if self._matrix is not None and 0 <= item_id < self._matrix.shape[0]:
            return  # already resolvable through the catalog
        self._by_id.setdefault(int(item_id), row.copy())

    def rows(self, item_ids: np.ndarray) -> np.ndarray:
        if self._matrix is not None and not self._by_id:
            return self._matrix[item_ids]
        out = np.empty((len(item_ids), self.dim), dtype=np.float64)
        for k, iid in enumerate(item_ids):
            iid = int(iid)
            if self._matrix is not None and 0 <= iid < self._matrix.shape[0]:
                out[k] = self._matrix[iid]
            else:
                try:
                    out[k] = self._by_id[iid]
                except KeyError:
                    raise ValidationError(f"no embedding known for item {iid}") from None
        return out


@dataclass
class Behavior:
    """One historical interaction."""

    item_id: int
    timestamp: int
    embedding: np.ndarray


class BehaviorSequence:
    """Immutable, timestamp-sorted view of one user's events."""

    def __init__(self, user_id: int, item_ids: np.ndarray, timestamps: np.ndarray,
                 vectors: ItemVectors):
        self.user_id = user_id
        self.item_ids = item_ids
        self.timestamps = timestamps
        self._vectors = vectors
        self._embeddings = None
        self._clock = None
        for arr in (self.item_ids, self.timestamps):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.item_ids)

    @property
    def embeddings(self) -> np.ndarray:
        """Event embedding matrix, shape (M, L); materialised once."""
        if self._embeddings is None:
            emb = self._vectors.rows(self.item_ids)
            emb.setflags(write=False)
            self._embeddings = emb
        return self._embeddings

    @property
    def clock_seconds(self) -> np.ndarray:
        if self._clock is None:
            c = clock_of_day_array(self.timestamps)
            c.setflags(write=False)
            self._clock = c
        return self._clock

    def behaviors(self) -> list[Behavior]:
        emb = self.embeddings
        return [Behavior(int(i), int(t), emb[k])
                for k, (i, t) in enumerate(zip(self.item_ids, self.timestamps))]


class _UserLog:
    """Circular per-user buffer of (item_id, timestamp) pairs."""

    __slots__ = ("ids", "ts", "start", "count")

    def __init__(self):
        self.ids = np.empty(16, dtype=np.int64)
        self.ts = np.empty(16, dtype=np.int64)
        self.start = 0
        self.count = 0

    def last_timestamp(self) -> int:
        pos = (self.start + self.count - 1) % len(self.ids)
        return int(self.ts[pos])

    def append(self, item_id: int, timestamp: int, capacity: int) -> None:
        if self.count >= capacity:  # full: overwrite the oldest slot
            if len(self.ids) != capacity:
                # First eviction: no wraparound has happened yet (start is
                # only advanced here), so the live region is [0, capacity).
                self.ids = self.ids[:capacity].copy()
                self.ts = self.ts[:capacity].copy()
            self.ids[self.start] = item_id
            self.ts[self.start] = timestamp
            self.start = (self.start + 1) % capacity
            return
        size = len(self.ids)
        if self.count == size:
            grown = min(capacity, 2 * size)
            self.ids = np.concatenate([self.ids[self.start:], self.ids[:self.start],
                                       np.empty(grown - size, dtype=np.int64)])
            self.ts = np.concatenate([self.ts[self.start:], self.ts[:self.start],
                                      np.empty(grown - size, dtype=np.int64)])
            self.start = 0
            size = grown
        pos = (self.start + self.count) % size
        self.ids[pos] = item_id
        self.ts[pos] = timestamp
        self.count += 1

    def ordered(self) -> tuple[np.ndarray, np.ndarray]:
        size = len(self.ids)
        idx = (self.start + np.arange(self.count)) % size
        return self.ids[idx], self.ts[idx]


class BehaviorStore:
    """Holds every user's event log and hands out immutable snapshots."""

    def __init__(self, embedding_dim: int, capacity: int = DEFAULT_CAPACITY,
                 catalog: np.ndarray | None = None):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = capacity
        self.vectors = ItemVectors(embedding_dim, matrix=catalog)
        self._logs: dict[int, _UserLog] = {}
        self._snapshots: dict[int, BehaviorSequence] = {}

    def __contains__(self, user_id: int) -> bool:
        return user_id in self._logs

    def append(self, user_id: int, behavior: Behavior) -> None:
        """Add one event; rejects timestamps older than the stored tail."""
        log = self._logs.get(user_id)
        if log is None:
            log = self._logs[user_id] = _UserLog()
        elif log.count and behavior.timestamp < log.last_timestamp():
            raise OrderingError(
                f"user {user_id}: timestamp {behavior.timestamp} precedes "
                f"stored tail {log.last_timestamp()}")
        self.vectors.register(behavior.item_id, behavior.embedding)
        log.append(behavior.item_id, behavior.timestamp, self.capacity)
        self._snapshots.pop(user_id, None)

    def load_user(self, user_id: int, item_ids: np.ndarray, timestamps: np.ndarray) -> None:
        """Bulk-load a whole history (catalog-backed ids, sorted timestamps)."""
        item_ids = np.asarray(item_ids, dtype=np.int64)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        if len(item_ids) != len(timestamps):
            raise ValidationError("item_ids and timestamps must have equal length")
        if len(timestamps) > 1 and np.any(np.diff(timestamps) < 0):
            raise OrderingError(f"user {user_id}: bulk history is not timestamp-sorted")
        if user_id in self._logs:
            raise ValidationError(f"user {user_id} already loaded")
        if len(item_ids) > self.capacity:  # keep the most recent events only
            item_ids = item_ids[-self.capacity:]
            timestamps = timestamps[-self.capacity:]
        log = self._logs[user_id] = _UserLog()
        log.ids = item_ids.copy()
        log.ts = timestamps.copy()
        log.count = len(item_ids)

    def snapshot(self, user_id: int) -> BehaviorSequence:
        """Immutable view of one user's history; unknown users come back empty."""
        cached = self._snapshots.get(user_id)
        if cached is not None:
            return cached
        log = self._logs.get(user_id)
        if log is None:
            ids = np.empty(0, dtype=np.int64)
            ts = np.empty(0, dtype=np.int64)
        else:
            ids, ts = log.ordered()
            ids, ts = ids.copy(), ts.copy()
        snap = BehaviorSequence(user_id, ids, ts, self.vectors)
        self._snapshots[user_id] = snap
        return snap

    def user_ids(self) -> list[int]:
        return sorted(self._logs)
