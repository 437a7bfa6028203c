"""Run configuration: a flat key-value file with a strict schema.

The format is one ``key = value`` pair per line, ``#`` comments, nothing
nested. Unknown keys are rejected rather than ignored, so typos fail loudly
before any compute starts.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ValidationError
from .params import MODES, Dims
from .simgen import DEFAULT_STREAM_START, StreamConfig


@dataclass
class RunConfig:
    # model dimensions
    behavior_dim: int = 32
    query_dim: int = 32
    head_dim: int = 16
    n_heads: int = 4
    feat_dim: int = 16
    time_hidden: int = 8
    # retrieval and training
    top_k: int = 100
    capacity: int = 20_000
    learning_rate: float = 0.01
    seed: int = 0
    modes: tuple = ("no_time", "hour_embedding", "lic")
    # generator
    n_users: int = 2000
    n_items: int = 5000
    n_genres: int = 12
    history_span_days: int = 365
    history_events_per_day: float = 12.0
    impressions_per_user_day: int = 2
    train_days: int = 14
    test_days: int = 1
    label_noise: float = 0.1
    circadian_amplitude: float = 4.0
    stream_start: int = DEFAULT_STREAM_START

    def validate(self) -> None:
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if self.capacity < 1:
            raise ValidationError("capacity must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        for mode in self.modes:
            if mode not in MODES:
                raise ValidationError(f"unknown mode {mode!r} in modes")
        if not self.modes:
            raise ValidationError("modes must not be empty")
        self.stream_config().validate()

    def stream_config(self) -> StreamConfig:
        return StreamConfig(
            n_users=self.n_users,
            n_items=self.n_items,
            n_genres=self.n_genres,
            embedding_dim=self.behavior_dim,
            history_span_days=self.history_span_days,
            history_events_per_day=self.history_events_per_day,
            impressions_per_user_day=self.impressions_per_user_day,
            train_days=self.train_days,
            test_days=self.test_days,
            label_noise=self.label_noise,
            circadian_amplitude=self.circadian_amplitude,
            stream_start=self.stream_start,
            seed=self.seed,
        )

    def model_dims(self) -> Dims:
        return Dims(
            behavior_dim=self.behavior_dim,
            query_dim=self.query_dim,
            head_dim=self.head_dim,
            n_heads=self.n_heads,
            feat_dim=self.feat_dim,
            time_hidden=self.time_hidden,
            n_users=self.n_users,
            n_items=self.n_items,
            n_genres=self.n_genres,
        )


def _parse_modes(raw: str) -> tuple:
    modes = tuple(m.strip() for m in raw.split(",") if m.strip())
    return modes


_PARSERS = {int: int, float: float}


def parse_config_text(text: str, path: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key == "modes":
                setattr(cfg, key, _parse_modes(value))
            elif known[key] in ("int", int):
                setattr(cfg, key, int(value))
            else:
                setattr(cfg, key, float(value))
        except ValueError:
            raise ValidationError(
                f"{path}:{lineno}: bad value {value!r} for {key}") from None
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path=str(path))


def default_config_text() -> str:
    """A commented config with every key at its default."""
    cfg = RunConfig()
    lines = ["# interest-clock run configuration (flat key = value)"]
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "modes":
            value = ",".join(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
