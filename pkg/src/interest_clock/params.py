"""Learnable parameters of the full ranking stack, and checkpoint IO.

One ``LicParams`` object owns every trainable array: the per-head projection
matrices for retrieval and attention, the small gap-score network shared by
both search stages, the head-fusion network, the base feedforward ranker,
the categorical feature tables, the hour table used by the hour-embedding
baseline, and the fallback interest vector for users with no history.

Gradients mirror the same layout (`LicGrads`); table gradients are kept
sparse as per-row dictionaries because a single sample touches at most a
handful of rows.

Checkpoints use a versioned binary layout: magic bytes, a JSON header that
records dimensions and the tensor manifest, then the raw row-major float64
buffers in manifest order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError

CHECKPOINT_MAGIC = b"ICLKCKPT"
CHECKPOINT_FORMAT = 1

MODES = ("no_time", "hour_embedding", "lic")


@dataclass
class Dims:
    """Widths of every tensor in the stack."""

    behavior_dim: int = 32      # stored behavior embedding width (L)
    query_dim: int = 32         # candidate query embedding width (H)
    head_dim: int = 16          # per-head latent width (d)
    n_heads: int = 4
    feat_dim: int = 16          # user and genre feature embedding width
    time_hidden: int = 8        # hidden width of the gap-score network
    base_hidden: tuple[int, int] = (64, 32)
    n_users: int = 0
    n_items: int = 0
    n_genres: int = 0

    @property
    def aug_dim(self) -> int:
        """Behavior row width after the 4 gap features are appended."""
        return self.behavior_dim + 4

    @property
    def concat_dim(self) -> int:
        return self.n_heads * self.head_dim

    @property
    def base_input_dim(self) -> int:
        # user + item + genre embeddings, then the time slot (interest vector,
        # hour row, or zeros depending on mode), all concatenated.
        return self.feat_dim + self.query_dim + self.feat_dim + self.head_dim

    def validate(self) -> None:
        for name in ("behavior_dim", "query_dim", "head_dim", "n_heads",
                     "feat_dim", "time_hidden"):
            if getattr(self, name) < 1:
                raise DimensionError(f"{name} must be >= 1")
        if len(self.base_hidden) != 2:
            raise DimensionError("base_hidden must have exactly two widths")


def _he_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class HeadParams:
    """Projection matrices of one attention head."""

    __slots__ = ("behavior_proj", "query_proj", "value_proj")

    def __init__(self, behavior_proj, query_proj, value_proj):
        self.behavior_proj = behavior_proj  # (d, L)
        self.query_proj = query_proj        # (d, H)
        self.value_proj = value_proj        # (L+4, d)

    @classmethod
    def init(cls, dims: Dims, rng: np.random.Generator) -> "HeadParams":
        behavior_proj = _he_uniform(rng, dims.behavior_dim,
                                    (dims.head_dim, dims.behavior_dim))
        if dims.query_dim == dims.behavior_dim:
            # Aligned start: the initial score between a behavior and a query
            # is then approximately proportional to their raw dot product,
            # so retrieval is meaningful before any training has happened.
            query_proj = behavior_proj.copy()
        else:
            query_proj = _he_uniform(rng, dims.query_dim,
                                     (dims.head_dim, dims.query_dim))
        return cls(
            behavior_proj=behavior_proj,
            query_proj=query_proj,
            value_proj=_he_uniform(rng, dims.aug_dim, (dims.aug_dim, dims.head_dim)),
        )


class TimeScoreNet:
    """Two-layer network scoring the 4-vector of gap features."""

    __slots__ = ("w1", "b1", "w2", "b2")

    def __init__(self, w1, b1, w2, b2):
        self.w1 = w1  # (hidden, 4)
        self.b1 = b1  # (hidden,)
        self.w2 = w2  # (hidden,)
        self.b2 = b2  # scalar, stored as shape-() array

    @classmethod
    def init(cls, dims: Dims, rng: np.random.Generator) -> "TimeScoreNet":
        h = dims.time_hidden
        return cls(
            w1=_he_uniform(rng, 4, (h, 4)),
            b1=np.zeros(h),
            w2=_he_uniform(rng, h, (h,)),
            b2=np.zeros(()),
        )

    @classmethod
    def zeros(cls, hidden: int = 8) -> "TimeScoreNet":
        return cls(np.zeros((hidden, 4)), np.zeros(hidden), np.zeros(hidden), np.zeros(()))


class FusionNet:
    """Two-layer network combining the concatenated head outputs."""

    __slots__ = ("w1", "b1", "w2", "b2")

    def __init__(self, w1, b1, w2, b2):
        self.w1 = w1  # (2d, 4d)
        self.b1 = b1  # (2d,)
        self.w2 = w2  # (d, 2d)
        self.b2 = b2  # (d,)

    @classmethod
    def init(cls, dims: Dims, rng: np.random.Generator) -> "FusionNet":
        cat, hid, out = dims.concat_dim, 2 * dims.head_dim, dims.head_dim
        return cls(
            w1=_he_uniform(rng, cat, (hid, cat)),
            b1=np.zeros(hid),
            w2=_he_uniform(rng, hid, (out, hid)),
            b2=np.zeros(out),
        )


class BaseNet:
    """Feedforward ranker body: two rectified hidden layers, scalar logit out."""

    __slots__ = ("w1", "b1", "w2", "b2", "w3", "b3")

    def __init__(self, w1, b1, w2, b2, w3, b3):
        self.w1 = w1
        self.b1 = b1
        self.w2 = w2
        self.b2 = b2
        self.w3 = w3  # (hidden2,)
        self.b3 = b3  # scalar, shape-() array

    @classmethod
    def init(cls, dims: Dims, rng: np.random.Generator) -> "BaseNet":
        d_in = dims.base_input_dim
        h1, h2 = dims.base_hidden
        return cls(
            w1=_he_uniform(rng, d_in, (h1, d_in)),
            b1=np.zeros(h1),
            w2=_he_uniform(rng, h1, (h2, h1)),
            b2=np.zeros(h2),
            w3=_he_uniform(rng, h2, (h2,)),
            b3=np.zeros(()),
        )


# Table name -> (vocab attribute, row-width attribute). Every table carries one
# extra trailing row shared by all out-of-vocabulary ids.
TABLE_SPECS = {
    "user": ("n_users", "feat_dim"),
    "item": ("n_items", "query_dim"),
    "genre": ("n_genres", "feat_dim"),
}
HOURS_PER_DAY = 24


class LicParams:
    """Every learnable array of the stack, with a version counter.

    The version is bumped by each optimizer step; projection caches compare
    it to detect staleness.
    """

    def __init__(self, dims: Dims, heads, time_net, fusion, base, tables,
                 hour_table, default_interest, version: int = 0):
        dims.validate()
        self.dims = dims
        self.heads = heads                      # list[HeadParams], length n_heads
        self.time_net = time_net
        self.fusion = fusion
        self.base = base
        self.tables = tables                    # {"user"|"item"|"genre": (vocab+1, width)}
        self.hour_table = hour_table            # (24, d)
        self.default_interest = default_interest  # (d,)
        self.version = version
        self._check_dims()

    @classmethod
    def init(cls, dims: Dims, seed: int = 0,
             item_init: np.ndarray | None = None) -> "LicParams":
        """Fresh parameters. ``item_init`` seeds the item table rows with the
        catalog content vectors, giving the query side a meaningful scale from
        the first step (the OOV row stays near zero)."""
        rng = np.random.default_rng(seed)
        heads = [HeadParams.init(dims, rng) for _ in range(dims.n_heads)]
        tables = {}
        for name, (vocab_attr, width_attr) in TABLE_SPECS.items():
            vocab = getattr(dims, vocab_attr)
            width = getattr(dims, width_attr)
            tables[name] = rng.uniform(-0.05, 0.05, size=(vocab + 1, width))
        if item_init is not None:
            item_init = np.asarray(item_init, dtype=np.float64)
            if item_init.shape != (dims.n_items, dims.query_dim):
                raise DimensionError(
                    f"item_init shape {item_init.shape} != "
                    f"{(dims.n_items, dims.query_dim)}")
            tables["item"][:dims.n_items] = item_init
        hour_table = rng.uniform(-0.05, 0.05, size=(HOURS_PER_DAY, dims.head_dim))
        return cls(
            dims=dims,
            heads=heads,
            time_net=TimeScoreNet.init(dims, rng),
            fusion=FusionNet.init(dims, rng),
            base=BaseNet.init(dims, rng),
            tables=tables,
            hour_table=hour_table,
            default_interest=np.zeros(dims.head_dim),
        )

    def _check_dims(self) -> None:
        d, L, H = self.dims.head_dim, self.dims.behavior_dim, self.dims.query_dim
        if len(self.heads) != self.dims.n_heads:
            raise DimensionError("wrong number of heads")
        for h in self.heads:
            if h.behavior_proj.shape != (d, L):
                raise DimensionError(f"behavior_proj shape {h.behavior_proj.shape} != {(d, L)}")
            if h.query_proj.shape != (d, H):
                raise DimensionError(f"query_proj shape {h.query_proj.shape} != {(d, H)}")
            if h.value_proj.shape != (self.dims.aug_dim, d):
                raise DimensionError(f"value_proj shape {h.value_proj.shape} != {(self.dims.aug_dim, d)}")
        if self.time_net.w1.shape[1] != 4:
            raise DimensionError("gap-score network input width must be 4")
        if self.default_interest.shape != (d,):
            raise DimensionError("default interest vector width must match head_dim")

    # ---- lookup ------------------------------------------------------------

    def table_row(self, table: str, row_id: int) -> int:
        """Row index for an id, mapping unknown ids to the shared OOV row."""
        t = self.tables[table]
        if 0 <= row_id < t.shape[0] - 1:
            return int(row_id)
        return t.shape[0] - 1

    def embed(self, table: str, row_id: int) -> np.ndarray:
        return self.tables[table][self.table_row(table, row_id)]

    # ---- enumeration (checkpointing, grad checks, finiteness) ---------------

    def named_arrays(self):
        """Yield (name, array) for every dense parameter group, fixed order."""
        for i, h in enumerate(self.heads):
            yield f"head{i}.behavior_proj", h.behavior_proj
            yield f"head{i}.query_proj", h.query_proj
            yield f"head{i}.value_proj", h.value_proj
        for part in ("w1", "b1", "w2", "b2"):
            yield f"time_net.{part}", getattr(self.time_net, part)
        for part in ("w1", "b1", "w2", "b2"):
            yield f"fusion.{part}", getattr(self.fusion, part)
        for part in ("w1", "b1", "w2", "b2", "w3", "b3"):
            yield f"base.{part}", getattr(self.base, part)
        yield "default_interest", self.default_interest
        for name in TABLE_SPECS:
            yield f"table.{name}", self.tables[name]
        yield "table.hour", self.hour_table

    def array_by_name(self, name: str) -> np.ndarray:
        for n, a in self.named_arrays():
            if n == name:
                return a
        raise KeyError(name)

    def copy(self) -> "LicParams":
        return LicParams(
            dims=self.dims,
            heads=[HeadParams(h.behavior_proj.copy(), h.query_proj.copy(), h.value_proj.copy())
                   for h in self.heads],
            time_net=TimeScoreNet(*(getattr(self.time_net, p).copy() for p in ("w1", "b1", "w2", "b2"))),
            fusion=FusionNet(*(getattr(self.fusion, p).copy() for p in ("w1", "b1", "w2", "b2"))),
            base=BaseNet(*(getattr(self.base, p).copy() for p in ("w1", "b1", "w2", "b2", "w3", "b3"))),
            tables={k: v.copy() for k, v in self.tables.items()},
            hour_table=self.hour_table.copy(),
            default_interest=self.default_interest.copy(),
            version=self.version,
        )


@dataclass
class LicGrads:
    """Gradient accumulator mirroring ``LicParams``.

    Dense arrays for the network groups; table gradients live in
    ``table_rows[table][row] -> vector`` because each sample touches only a
    few rows.
    """

    dense: dict = field(default_factory=dict)            # name -> array
    table_rows: dict = field(default_factory=dict)       # table -> {row: vec}

    @classmethod
    def zeros_like(cls, params: LicParams) -> "LicGrads":
        dense = {}
        for name, arr in params.named_arrays():
            if name.startswith("table."):
                continue
            dense[name] = np.zeros_like(arr)
        table_rows = {name: {} for name in list(TABLE_SPECS) + ["hour"]}
        return cls(dense=dense, table_rows=table_rows)

    def add_row(self, table: str, row: int, vec: np.ndarray) -> None:
        rows = self.table_rows[table]
        if row in rows:
            rows[row] = rows[row] + vec
        else:
            rows[row] = vec.copy()

    def all_finite(self) -> bool:
        for arr in self.dense.values():
            if not np.all(np.isfinite(arr)):
                return False
        for rows in self.table_rows.values():
            for vec in rows.values():
                if not np.all(np.isfinite(vec)):
                    return False
        return True

    def scaled(self, factor: float) -> "LicGrads":
        out = LicGrads(
            dense={k: v * factor for k, v in self.dense.items()},
            table_rows={t: {r: v * factor for r, v in rows.items()}
                        for t, rows in self.table_rows.items()},
        )
        return out

    def add_(self, other: "LicGrads") -> None:
        for k, v in other.dense.items():
            self.dense[k] += v
        for t, rows in other.table_rows.items():
            for r, v in rows.items():
                self.add_row(t, r, v)


# ---- checkpoint IO ----------------------------------------------------------

def _dims_to_header(dims: Dims) -> dict:
    return {
        "behavior_dim": dims.behavior_dim,
        "query_dim": dims.query_dim,
        "head_dim": dims.head_dim,
        "n_heads": dims.n_heads,
        "feat_dim": dims.feat_dim,
        "time_hidden": dims.time_hidden,
        "base_hidden": list(dims.base_hidden),
        "n_users": dims.n_users,
        "n_items": dims.n_items,
        "n_genres": dims.n_genres,
    }


def _dims_from_header(h: dict) -> Dims:
    return Dims(
        behavior_dim=h["behavior_dim"],
        query_dim=h["query_dim"],
        head_dim=h["head_dim"],
        n_heads=h["n_heads"],
        feat_dim=h["feat_dim"],
        time_hidden=h["time_hidden"],
        base_hidden=tuple(h["base_hidden"]),
        n_users=h["n_users"],
        n_items=h["n_items"],
        n_genres=h["n_genres"],
    )


def save_checkpoint(path, params: LicParams, mode: str, meta: dict | None = None) -> None:
    """Write params to a versioned binary file."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    manifest = [{"name": n, "shape": list(a.shape)} for n, a in params.named_arrays()]
    header = {
        "format": CHECKPOINT_FORMAT,
        "mode": mode,
        "dims": _dims_to_header(params.dims),
        "version": params.version,
        "meta": meta or {},
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_FORMAT, len(blob)))
        f.write(blob)
        for _, arr in params.named_arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[LicParams, str, dict]:
    """Read a checkpoint; returns (params, mode, meta)."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValidationError(f"not a checkpoint file: {path}")
        fmt, hlen = struct.unpack("<II", f.read(8))
        if fmt != CHECKPOINT_FORMAT:
            raise ValidationError(f"unsupported checkpoint format {fmt}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        dims = _dims_from_header(header["dims"])
        params = LicParams.init(dims, seed=0)
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            n_elem = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n_elem)
            if len(buf) != 8 * n_elem:
                raise ValidationError("truncated checkpoint")
            arr = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
            target = params.array_by_name(entry["name"])
            if target.shape != arr.shape:
                raise ValidationError(f"tensor {entry['name']} shape mismatch")
            target[...] = arr
        params.version = header.get("version", 0)
    return params, header["mode"], header.get("meta", {})
