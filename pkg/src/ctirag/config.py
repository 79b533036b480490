"""Application configuration loaded from a TOML file.

Every section maps onto one component dataclass; unknown sections or keys
are rejected so a typo in ``alpha`` cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ctirag.corpus import ChunkerConfig
from ctirag.dense import EmbedderSpec
from ctirag.errors import ContractError
from ctirag.evaluation import MOCK_RULES, SETTINGS
from ctirag.fusion import FusionConfig
from ctirag.generation import GenerationParams, PromptTemplate
from ctirag.sparse import BM25Params


@dataclass(frozen=True)
class PathsConfig:
    chunks: str = "data/chunks.jsonl"
    sparse_index: str = "data/sparse_index.json"
    dense_index: str = "data/dense_index.json"
    benchmark: str = ""
    preformatted: str = ""
    reports: str = "reports"


@dataclass(frozen=True)
class QueryOptions:
    show_scores: bool = False
    ask: bool = False


@dataclass(frozen=True)
class EvalOptions:
    settings: tuple[str, ...] = ("hybrid_regex",)
    iterations: int = 10
    mock_rule: str = "evidence_oracle"
    parallelism: int = 1

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        for s in self.settings:
            if s not in SETTINGS:
                raise ContractError(f"unknown setting {s!r}; expected one of {SETTINGS}")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if self.mock_rule not in MOCK_RULES:
            raise ContractError(f"unknown mock rule {self.mock_rule!r}")
        if self.parallelism < 1:
            raise ContractError("parallelism must be >= 1")


@dataclass(frozen=True)
class AppConfig:
    chunker: ChunkerConfig = field(default_factory=ChunkerConfig)
    bm25: BM25Params = field(default_factory=BM25Params)
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    template: PromptTemplate = field(default_factory=PromptTemplate)
    paths: PathsConfig = field(default_factory=PathsConfig)
    query: QueryOptions = field(default_factory=QueryOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def override(self, section: str, **changes) -> "AppConfig":
        """Copy with ``changes`` applied to one section; ``None`` values are ignored."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


_SECTIONS = {f.name: f for f in fields(AppConfig) if f.name != "seed"}


def _build_section(name: str, cls, raw: Any):
    if not isinstance(raw, dict):
        raise ContractError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ContractError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    defaults = cls()
    kwargs = {}
    for key, value in raw.items():
        kwargs[key] = _check_type(f"{name}.{key}", getattr(defaults, key), value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ContractError(f"[{name}]: {exc}") from exc


def _check_type(key: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, tuple):
        ok = isinstance(value, list)
        value = tuple(value) if ok else value
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ContractError(f"{key}: expected {type(default).__name__}, got {value!r}")
    return value


def config_from_dict(data: dict, base_dir: Path | None = None) -> AppConfig:
    unknown = sorted(set(data) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ContractError(f"unknown config section(s): {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, f in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(name, f.default_factory().__class__, data[name])
    if "seed" in data:
        if not isinstance(data["seed"], int):
            raise ContractError("seed must be an integer")
        kwargs["seed"] = data["seed"]
    cfg = AppConfig(**kwargs)
    if base_dir is not None:
        cfg = dataclasses.replace(cfg, paths=_resolve_paths(cfg.paths, base_dir))
    return cfg


def _resolve_paths(paths: PathsConfig, base_dir: Path) -> PathsConfig:
    resolved = {}
    for f in fields(paths):
        value = getattr(paths, f.name)
        if value and not Path(value).is_absolute():
            value = os.path.normpath(base_dir / value)
        resolved[f.name] = value
    return PathsConfig(**resolved)


def load_config(path=None) -> AppConfig:
    """Load ``path``; with no path, return defaults. Relative paths resolve against the file."""
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ContractError(f"{path}: invalid TOML: {exc}") from exc
    return config_from_dict(data, path.resolve().parent)
