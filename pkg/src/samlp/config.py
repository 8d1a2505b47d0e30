"""Pipeline configuration: defaults, YAML file loading and flag overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import FAMILIES


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    holdout_ratio: float = 0.7
    k: int = 5
    repetitions: int = 10
    configs_per_family: int = 50
    families: tuple[str, ...] = FAMILIES
    alpha_min: float = 1e-4
    alpha_max: float = 1e1
    alpha_points: int = 50
    max_expansions: int = 5
    shap_mode: str = "auto"
    shap_background: int = 100
    shap_samples: int = 2048
    top_k: int = 20
    jobs: int = 1

    def __post_init__(self):
        if not 0 < self.holdout_ratio < 1:
            raise ConfigError("holdout_ratio must be in (0, 1)")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.repetitions < 1 or self.configs_per_family < 1:
            raise ConfigError("repetitions and configs_per_family must be positive")
        if not 0 < self.alpha_min < self.alpha_max or self.alpha_points < 1:
            raise ConfigError("alpha grid needs 0 < alpha_min < alpha_max and alpha_points >= 1")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ConfigError(f"unknown or empty model families {bad}")
        if self.shap_mode not in ("auto", "exact", "sampled"):
            raise ConfigError("shap_mode must be auto, exact or sampled")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = list(self.families)
        return d

    def replace(self, **overrides) -> "PipelineConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = asdict(self)
        d.update({k: v for k, v in overrides.items() if v is not None})
        if isinstance(d["families"], (list, str)):
            d["families"] = tuple([d["families"]] if isinstance(d["families"], str) else d["families"])
        try:
            return PipelineConfig(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Defaults, then the YAML mapping in ``path``, then non-None ``overrides``."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a key/value mapping")
        cfg = cfg.replace(**data)
    return cfg.replace(**overrides)
