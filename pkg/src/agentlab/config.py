"""Operator configuration: one YAML file, every field optional.

Missing sections and keys fall back to the defaults below, which are the
standard experimental setup (20 days, 10 kWh battery starting at 5 kWh,
prices $5/$10 with even odds, 40 agent repetitions, 2000 benchmark
repetitions, blackout on days 8 and 9, five clusters).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .env import BatteryConfig, InterventionSchedule, PriceModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackendSettings:
    chat_base_url: str | None = None  # falls back to AGENTLAB_BASE_URL
    chat_model: str = "gpt-4o-mini"
    embed_base_url: str | None = None
    embed_model: str = "text-embedding-3-small"
    temperature: float = 0.0
    max_tokens: int = 800
    timeout: float = 60.0
    max_retries: int = 3


@dataclass(frozen=True)
class RunDefaults:
    repetitions: int = 40
    benchmark_repetitions: int = 2000
    base_seed: int = 0
    workers: int = 4
    blackout_days: tuple[int, ...] = (8, 9)


@dataclass(frozen=True)
class AnalysisDefaults:
    k: int = 5
    perplexity: float = 30.0
    iterations: int = 1000
    pca_dims: int = 50
    top_m: int = 9
    cluster_space: str = "embedding"


@dataclass(frozen=True)
class CliConfig:
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    prices: PriceModel = field(default_factory=PriceModel)
    backend: BackendSettings = field(default_factory=BackendSettings)
    runs: RunDefaults = field(default_factory=RunDefaults)
    analysis: AnalysisDefaults = field(default_factory=AnalysisDefaults)
    output_dir: str = "runs"

    def treatment(self) -> InterventionSchedule:
        return InterventionSchedule.treatment(self.runs.blackout_days)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["runs"]["blackout_days"] = list(self.runs.blackout_days)
        return d


_SECTIONS = {
    "battery": BatteryConfig,
    "prices": PriceModel,
    "backend": BackendSettings,
    "runs": RunDefaults,
    "analysis": AnalysisDefaults,
}


def _section(name: str, cls, raw: Any):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    if "blackout_days" in raw:
        raw = {**raw, "blackout_days": tuple(raw["blackout_days"] or ())}
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{name}': {exc}") from None


def config_from_dict(doc: dict[str, Any]) -> CliConfig:
    unknown = sorted(set(doc) - set(_SECTIONS) - {"output_dir"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    parts = {name: _section(name, cls, doc.get(name)) for name, cls in _SECTIONS.items()}
    cfg = CliConfig(**parts, output_dir=str(doc.get("output_dir", "runs")))
    validate(cfg)
    return cfg


def validate(cfg: CliConfig) -> None:
    r, a = cfg.runs, cfg.analysis
    if r.repetitions < 1 or r.benchmark_repetitions < 1:
        raise ConfigError("repetition counts must be >= 1")
    if r.workers < 1:
        raise ConfigError("workers must be >= 1")
    try:
        cfg.treatment().validate(cfg.battery)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if a.k < 1 or a.pca_dims < 1 or a.top_m < 1 or a.iterations < 1 or a.perplexity <= 0:
        raise ConfigError("analysis settings must be positive")
    if a.cluster_space not in ("embedding", "tsne"):
        raise ConfigError("analysis.cluster_space must be 'embedding' or 'tsne'")


def load_config(path: str | Path | None = None) -> CliConfig:
    if path is None:
        return CliConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return config_from_dict(doc)


def dump_config(cfg: CliConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
