"""Dataset files: tab-separated streams plus a sidecar item-embedding table.

Stream files carry one impression or consumption event per line,
``user_id item_id genre_id epoch_seconds label``, time-sorted, behind a
versioned header line. The sidecar item file carries each item's genre and
its embedding row. Floats are written with ``repr`` so files round-trip
bit-exactly and identical seeds give byte-identical output.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .ranker import Sample
from .simgen import ItemCatalog

STREAM_HEADER = "#interest-clock-stream\tv1"
ITEMS_HEADER = "#interest-clock-items\tv1"


def write_stream(path, samples) -> None:
    """Write samples (already time-ordered) as a stream file."""
    last_ts = None
    with open(path, "w", encoding="utf-8") as f:
        f.write(STREAM_HEADER + "\n")
        for s in samples:
            if last_ts is not None and s.timestamp < last_ts:
                raise ValidationError("samples must be time-sorted")
            last_ts = s.timestamp
            f.write(f"{s.user_id}\t{s.item_id}\t{s.genre_id}\t{s.timestamp}\t{s.label}\n")


def read_stream(path) -> list[Sample]:
    samples: list[Sample] = []
    last_ts = None
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != STREAM_HEADER:
            raise ValidationError(f"{path}: bad or missing stream header")
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ValidationError(f"{path}:{lineno}: expected 5 fields")
            try:
                user, item, genre, ts, label = (int(p) for p in parts)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-integer field") from None
            if label not in (0, 1):
                raise ValidationError(f"{path}:{lineno}: label must be 0 or 1")
            if last_ts is not None and ts < last_ts:
                raise ValidationError(f"{path}:{lineno}: records not time-sorted")
            last_ts = ts
            samples.append(Sample(user, item, genre, ts, label))
    return samples


def write_history(path, histories: dict, genres: np.ndarray) -> None:
    """Write per-user histories as one merged, time-sorted stream file.

    History events have no outcome; the label column is written as 1.
    """
    users, items, ts = [], [], []
    for user_id in sorted(histories):
        ids, stamps = histories[user_id]
        users.append(np.full(len(ids), user_id, dtype=np.int64))
        items.append(np.asarray(ids, dtype=np.int64))
        ts.append(np.asarray(stamps, dtype=np.int64))
    if users:
        users = np.concatenate(users)
        items = np.concatenate(items)
        ts = np.concatenate(ts)
        order = np.lexsort((items, users, ts))
        users, items, ts = users[order], items[order], ts[order]
    with open(path, "w", encoding="utf-8") as f:
        f.write(STREAM_HEADER + "\n")
        if len(users):
            rows = (f"{u}\t{i}\t{genres[i]}\t{t}\t1"
                    for u, i, t in zip(users, items, ts))
            f.write("\n".join(rows) + "\n")


def read_history(path) -> dict:
    """Read a history stream back into user -> (item_ids, timestamps)."""
    per_user: dict[int, tuple[list, list]] = {}
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != STREAM_HEADER:
            raise ValidationError(f"{path}: bad or missing stream header")
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ValidationError(f"{path}:{lineno}: expected 5 fields")
            user, item, _, ts = (int(p) for p in parts[:4])
            bucket = per_user.setdefault(user, ([], []))
            bucket[0].append(item)
            bucket[1].append(ts)
    return {user: (np.asarray(ids, dtype=np.int64), np.asarray(ts, dtype=np.int64))
            for user, (ids, ts) in per_user.items()}


def write_items(path, catalog: ItemCatalog) -> None:
    dim = catalog.embeddings.shape[1]
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{ITEMS_HEADER}\tdim={dim}\n")
        for item_id in range(len(catalog.genres)):
            emb = "\t".join(repr(x) for x in catalog.embeddings[item_id])
            f.write(f"{item_id}\t{catalog.genres[item_id]}\t{emb}\n")


def read_items(path) -> ItemCatalog:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header[:2] != ITEMS_HEADER.split("\t") or not header[2].startswith("dim="):
            raise ValidationError(f"{path}: bad or missing items header")
        dim = int(header[2][4:])
        genres, rows = [], []
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 + dim:
                raise ValidationError(f"{path}:{lineno}: expected {2 + dim} fields")
            item_id = int(parts[0])
            if item_id != lineno - 2:
                raise ValidationError(f"{path}:{lineno}: item ids must be dense")
            genres.append(int(parts[1]))
            rows.append([float(x) for x in parts[2:]])
    return ItemCatalog(
        embeddings=np.asarray(rows, dtype=np.float64).reshape(len(rows), dim),
        genres=np.asarray(genres, dtype=np.int64),
    )
