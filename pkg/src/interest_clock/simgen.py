"""Synthetic streaming data with ground-truth circadian interest structure.

Each user has, per genre, a base affinity plus a daily preference curve built
from two raised-cosine bumps on the 24-hour circle (so midnight wraps
cleanly). The label probability of an impression is a logistic function of
``base + amplitude * (curve(clock) - daily mean)``; labels are flipped with
probability ``label_noise``. Histories are generated from the same truth:
at each consumption event the genre is drawn proportionally to the user's
preference at that clock time, which is what gives clock-aware retrieval its
measurable headroom over time-blind models.

Everything is derived from one seed through spawned generator streams, so a
config reproduces its dataset bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .behavior_store import BehaviorStore
from .errors import ValidationError
from .evaluation import auc
from .ranker import Sample

HOURS = 24.0
DEFAULT_STREAM_START = 1_704_067_200  # a fixed midnight, UTC


@dataclass
class StreamConfig:
    n_users: int = 2000
    n_items: int = 5000
    n_genres: int = 12
    embedding_dim: int = 32
    history_span_days: int = 365
    history_events_per_day: float = 12.0
    impressions_per_user_day: int = 2
    train_days: int = 14
    test_days: int = 1
    label_noise: float = 0.1
    circadian_amplitude: float = 4.0
    stream_start: int = DEFAULT_STREAM_START
    seed: int = 0

    def validate(self) -> None:
        positive = ("n_users", "n_items", "n_genres", "embedding_dim",
                    "history_span_days", "history_events_per_day",
                    "impressions_per_user_day", "train_days", "test_days")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValidationError("label_noise must be in [0, 0.5)")
        if self.n_items < self.n_genres:
            raise ValidationError("need at least one item per genre")
        if self.circadian_amplitude < 0:
            raise ValidationError("circadian_amplitude must be >= 0")
        if self.stream_start % 86_400 != 0:
            raise ValidationError("stream_start must fall on a day boundary")


@dataclass
class ItemCatalog:
    embeddings: np.ndarray   # (n_items, embedding_dim), unit rows
    genres: np.ndarray       # (n_items,) int64

    def items_of_genre(self, genre: int) -> np.ndarray:
        return np.flatnonzero(self.genres == genre)


@dataclass
class UserProfiles:
    """Per-user, per-genre circadian preference parameters."""

    base_affinity: np.ndarray    # (U, G)
    bump_center: np.ndarray      # (U, G, 2) hours in [0, 24)
    bump_width: np.ndarray       # (U, G, 2) hours
    bump_amp: np.ndarray         # (U, G, 2), per-genre amplitudes sum <= 1
    amplitude: float             # global scale of the circadian term

    def curve(self, users, genres, clock_hours) -> np.ndarray:
        """Preference curve value in [0, 1] for aligned index arrays."""
        c = self.bump_center[users, genres]          # (..., 2)
        w = self.bump_width[users, genres]
        a = self.bump_amp[users, genres]
        tau = np.asarray(clock_hours, dtype=np.float64)[..., None]
        dist = np.abs(tau - c)
        dist = np.minimum(dist, HOURS - dist)
        x = dist / w
        bump = np.where(x < 1.0, 0.5 * (1.0 + np.cos(np.pi * x)), 0.0)
        return (a * bump).sum(axis=-1)

    def curve_daily_mean(self, users, genres) -> np.ndarray:
        # the integral of one raised-cosine bump over the day equals its
        # width, so the mean is sum(amp * width) / 24
        w = self.bump_width[users, genres]
        a = self.bump_amp[users, genres]
        return (a * w).sum(axis=-1) / HOURS

    def label_logit(self, users, genres, clock_hours) -> np.ndarray:
        centered = (self.curve(users, genres, clock_hours)
                    - self.curve_daily_mean(users, genres))
        return self.base_affinity[users, genres] + self.amplitude * centered

    def true_probability(self, users, genres, clock_hours) -> np.ndarray:
        return _sigmoid(self.label_logit(users, genres, clock_hours))


@dataclass
class GeneratedData:
    config: StreamConfig
    catalog: ItemCatalog
    profiles: UserProfiles
    histories: dict                      # user -> (item_ids, timestamps)
    train: list = field(default_factory=list)   # list[Sample], time-ordered
    test: list = field(default_factory=list)
    train_true_p: np.ndarray | None = None
    test_true_p: np.ndarray | None = None

    def make_store(self, capacity: int = 20_000) -> BehaviorStore:
        store = BehaviorStore(self.config.embedding_dim, capacity=capacity,
                              catalog=self.catalog.embeddings)
        for user_id, (ids, ts) in self.histories.items():
            store.load_user(user_id, ids, ts)
        return store


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _build_catalog(cfg: StreamConfig, rng: np.random.Generator) -> ItemCatalog:
    dim = cfg.embedding_dim
    centroids = rng.normal(size=(cfg.n_genres, dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    genres = np.arange(cfg.n_items, dtype=np.int64) % cfg.n_genres
    noise = rng.normal(size=(cfg.n_items, dim))
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    emb = centroids[genres] + 0.5 * noise
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return ItemCatalog(embeddings=emb, genres=genres)


def _build_profiles(cfg: StreamConfig, rng: np.random.Generator) -> UserProfiles:
    u, g = cfg.n_users, cfg.n_genres
    return UserProfiles(
        base_affinity=rng.normal(-0.3, 1.0, size=(u, g)),
        bump_center=rng.uniform(0.0, HOURS, size=(u, g, 2)),
        bump_width=rng.uniform(1.5, 4.0, size=(u, g, 2)),
        bump_amp=rng.uniform(0.35, 0.5, size=(u, g, 2)),
        amplitude=cfg.circadian_amplitude,
    )


def _user_history(cfg: StreamConfig, profiles: UserProfiles,
                  catalog: ItemCatalog, user: int, genre_items: list,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    rate = cfg.history_events_per_day * rng.uniform(0.6, 1.6)
    n_events = max(1, int(round(rate * cfg.history_span_days)))
    start = cfg.stream_start - cfg.history_span_days * 86_400
    ts = np.sort(rng.integers(start, cfg.stream_start, size=n_events))
    clock_hours = (ts % 86_400) / 3600.0

    users = np.full(n_events, user)
    all_genres = np.arange(cfg.n_genres)
    logits = profiles.label_logit(users[:, None], all_genres[None, :],
                                  clock_hours[:, None])
    weights = _sigmoid(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    cum = np.cumsum(weights, axis=1)
    draws = rng.random(n_events)
    chosen_genre = (cum < draws[:, None]).sum(axis=1)

    item_ids = np.empty(n_events, dtype=np.int64)
    for g in range(cfg.n_genres):
        mask = chosen_genre == g
        if mask.any():
            pool = genre_items[g]
            item_ids[mask] = pool[rng.integers(0, len(pool), size=int(mask.sum()))]
    return item_ids, ts


def _impressions(cfg: StreamConfig, profiles: UserProfiles, catalog: ItemCatalog,
                 window_start: int, n_days: int,
                 rng: np.random.Generator) -> tuple[list, np.ndarray]:
    per_user = cfg.impressions_per_user_day * n_days
    total = cfg.n_users * per_user
    users = np.repeat(np.arange(cfg.n_users, dtype=np.int64), per_user)
    ts = window_start + rng.integers(0, n_days * 86_400, size=total)
    items = rng.integers(0, cfg.n_items, size=total).astype(np.int64)
    order = np.lexsort((items, users, ts))
    users, ts, items = users[order], ts[order], items[order]
    genres = catalog.genres[items]
    clock_hours = (ts % 86_400) / 3600.0
    p = profiles.true_probability(users, genres, clock_hours)
    flip_rate = (1.0 - cfg.label_noise) * p + cfg.label_noise * (1.0 - p)
    labels = (rng.random(total) < flip_rate).astype(np.int64)
    samples = [Sample(int(u), int(i), int(g), int(t), int(y))
               for u, i, g, t, y in zip(users, items, genres, ts, labels)]
    return samples, p


def generate(cfg: StreamConfig) -> GeneratedData:
    """Histories plus time-ordered train and test streams from one seed."""
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    catalog_ss, profile_ss, train_ss, test_ss, hist_root = root.spawn(5)

    catalog = _build_catalog(cfg, np.random.default_rng(catalog_ss))
    profiles = _build_profiles(cfg, np.random.default_rng(profile_ss))

    genre_items = [catalog.items_of_genre(g) for g in range(cfg.n_genres)]
    histories = {}
    for user, child in enumerate(hist_root.spawn(cfg.n_users)):
        histories[user] = _user_history(cfg, profiles, catalog, user,
                                        genre_items, np.random.default_rng(child))

    train, train_p = _impressions(cfg, profiles, catalog, cfg.stream_start,
                                  cfg.train_days, np.random.default_rng(train_ss))
    test_start = cfg.stream_start + cfg.train_days * 86_400
    test, test_p = _impressions(cfg, profiles, catalog, test_start,
                                cfg.test_days, np.random.default_rng(test_ss))
    return GeneratedData(
        config=replace(cfg),
        catalog=catalog,
        profiles=profiles,
        histories=histories,
        train=train,
        test=test,
        train_true_p=train_p,
        test_true_p=test_p,
    )


def oracle_auc(true_p: np.ndarray, samples: list) -> float:
    """AUC of the generating probabilities themselves: the model ceiling."""
    labels = np.fromiter((s.label for s in samples), dtype=np.int64,
                         count=len(samples))
    return auc(true_p, labels)


def time_blind_auc(data: GeneratedData, samples: list) -> float:
    """AUC of the best clock-free predictor (the true base affinities)."""
    users = np.fromiter((s.user_id for s in samples), dtype=np.int64,
                        count=len(samples))
    genres = np.fromiter((s.genre_id for s in samples), dtype=np.int64,
                         count=len(samples))
    labels = np.fromiter((s.label for s in samples), dtype=np.int64,
                         count=len(samples))
    scores = data.profiles.base_affinity[users, genres]
    return auc(scores, labels)
