"""Runtime configuration with flags > environment > file > defaults."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .concepts import Category
from .errors import InputError
from .retrieval import (
    DEFAULT_ALPHA,
    DEFAULT_CATEGORY_WEIGHTS,
    DEFAULT_LAMBDA,
    HybridWeights,
    SaliencyThresholds,
)

ENV_PREFIX = "CASEGUIDE_"


@dataclass(frozen=True)
class EngineConfig:
    lambda_: float = DEFAULT_LAMBDA
    alpha: float = DEFAULT_ALPHA
    category_weights: tuple[tuple[str, float], ...] = tuple(
        sorted((c.value, w) for c, w in DEFAULT_CATEGORY_WEIGHTS.items())
    )
    theta_low: float = 0.5
    theta_high: float = 0.75
    k_patients: int = 5
    k_communities: int = 3
    max_unit_chars: int = 1200
    min_unit_chars: int = 200
    summary_char_budget: int = 1500
    session_ttl_seconds: float = 3600.0
    max_concurrent_llm_calls: int = 8
    cors_origins: tuple[str, ...] = ("*",)
    index_dir: str | None = None
    embedding_endpoint: str | None = None
    embedding_dim: int = 256
    llm_endpoint: str | None = None
    api_key_env: str = "CASEGUIDE_API_KEY"

    def weights(self) -> HybridWeights:
        return HybridWeights.from_mapping(
            lambda_=self.lambda_,
            category_weights={
                Category(name): value for name, value in self.category_weights
            },
        )

    def thresholds(self) -> SaliencyThresholds:
        return SaliencyThresholds(low=self.theta_low, high=self.theta_high)


_FLOAT_KEYS = {
    "lambda_", "alpha", "theta_low", "theta_high", "session_ttl_seconds",
}
_INT_KEYS = {
    "k_patients", "k_communities", "max_unit_chars", "min_unit_chars",
    "summary_char_budget", "max_concurrent_llm_calls", "embedding_dim",
}
_FILE_KEY_ALIASES = {"lambda": "lambda_"}


def _coerce(key: str, value: Any) -> Any:
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _INT_KEYS:
        return int(value)
    if key == "category_weights" and isinstance(value, Mapping):
        merged = {c.value: w for c, w in DEFAULT_CATEGORY_WEIGHTS.items()}
        for name, weight in value.items():
            merged[Category(name).value] = float(weight)
        return tuple(sorted(merged.items()))
    if key == "cors_origins" and isinstance(value, (list, tuple)):
        return tuple(value)
    if key == "cors_origins" and isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return value


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    **overrides: Any,
) -> EngineConfig:
    """Build an EngineConfig.

    File values are overridden by CASEGUIDE_* environment variables, which
    are overridden by explicit keyword arguments (typically CLI flags).
    """
    env = os.environ if env is None else env
    known = {f.name for f in fields(EngineConfig)}
    config = EngineConfig()

    if path is not None:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(payload, dict):
            raise InputError("config file must contain a JSON object")
        for raw_key, value in payload.items():
            key = _FILE_KEY_ALIASES.get(raw_key, raw_key)
            if key not in known:
                raise InputError(f"unknown config key {raw_key!r}")
            config = replace(config, **{key: _coerce(key, value)})

    for key in known:
        env_name = ENV_PREFIX + key.rstrip("_").upper()
        if env_name in env:
            config = replace(config, **{key: _coerce(key, env[env_name])})

    supplied = {
        key: _coerce(key, value)
        for key, value in overrides.items()
        if value is not None
    }
    unknown = set(supplied) - known
    if unknown:
        raise InputError(f"unknown config overrides: {sorted(unknown)}")
    if supplied:
        config = replace(config, **supplied)
    return config
