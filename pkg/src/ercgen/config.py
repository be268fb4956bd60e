"""Run configuration: one self-describing JSON file plus flag overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .backend import BackendConfig
from .mixing import DEFAULT_FRACTIONS
from .prompt import DEFAULT_WINDOW, WINDOW_GRID
from .retrieval import ALL_LABELS, DEFAULT_DIM, PAIRINGS, SAME_LABEL
from .training import ALPHA_GRID, DEFAULT_ALPHA


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSource:
    corpus: str
    manifest: str


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hashed-ngram"
    dim: int = DEFAULT_DIM
    path: str | None = None
    endpoint: str | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    # dataset paths are relative to the workspace; "fixture:<ID>" / "fixture:mini:<ID>" name bundled fixtures
    datasets: dict[str, DatasetSource] = field(default_factory=dict)
    window: int = DEFAULT_WINDOW
    alpha: float = DEFAULT_ALPHA
    train_pairing: str = SAME_LABEL
    infer_pairing: str = ALL_LABELS
    demonstrations: bool = True
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    # scale experiment
    fractions: tuple[str, ...] = tuple(str(f) for f in DEFAULT_FRACTIONS)
    strategies: tuple[str, ...] = ("total", "ratio")
    # sweeps
    windows: tuple[int, ...] = WINDOW_GRID
    alphas: tuple[float, ...] = ALPHA_GRID
    unparseable_threshold: float = 0.5

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        for p in (self.train_pairing, self.infer_pairing):
            if p not in PAIRINGS:
                raise ConfigError(f"unknown pairing {p!r}")
        if not 0 <= self.unparseable_threshold <= 1:
            raise ConfigError("unparseable_threshold must lie in [0, 1]")

    def to_json(self) -> dict:
        out = asdict(self)
        out["fractions"] = list(self.fractions)
        out["strategies"] = list(self.strategies)
        out["windows"] = list(self.windows)
        out["alphas"] = list(self.alphas)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> RunConfig:
        if "seed" not in obj:
            raise ConfigError("config must set 'seed' explicitly")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(obj)
        try:
            kw["datasets"] = {k: DatasetSource(**v) for k, v in obj.get("datasets", {}).items()}
            kw["embedder"] = EmbedderConfig(**obj.get("embedder", {}))
            kw["backend"] = BackendConfig(**obj.get("backend", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        for key in ("fractions", "strategies", "windows", "alphas"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "fractions" in kw:
            kw["fractions"] = tuple(str(f) for f in kw["fractions"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(obj)

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]

    def override(self, **changes) -> RunConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            if isinstance(changes.get("backend"), dict):
                changes["backend"] = replace(self.backend, **changes["backend"])
            if isinstance(changes.get("embedder"), dict):
                changes["embedder"] = replace(self.embedder, **changes["embedder"])
            return replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
