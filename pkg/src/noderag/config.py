"""Pipeline configuration: TOML file, NODERAG_* environment overrides, and the
JSON snapshot persisted next to each index so queries replay bit-for-bit.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "NODERAG_"


@dataclass
class PipelineConfig:
    # chunking
    chunk_tokens: int = 1000
    chunk_overlap: int = 100
    tokenizer: str = "simple-regex"
    # extraction
    extraction_parallelism: int = 8
    # importance selection
    betweenness_pivots: int = 10
    betweenness_seed: int = 5
    core_log_base: str = "e"
    # communities and clustering
    leiden_seed: int = 7
    leiden_resolution: float = 1.0
    kmeans_seed: int = 11
    high_level_context_budget: int = 8000
    # embedding / ANN
    embed_batch: int = 64
    hnsw_m: int = 16
    hnsw_ef_construction: int = 200
    hnsw_ef_search: int = 64
    hnsw_seed: int = 13
    # search
    alpha: float = 0.5
    iterations: int = 2
    entry_k: int = 10
    cross_k_per_type: int = 5
    context_budget: int = 8000
    include_text_entries: bool = False
    # providers
    provider: str = "mock"
    base_url: str = "https://api.openai.com/v1"
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-3-small"
    embed_dim: int = 1536
    api_key_env: str = "NODERAG_API_KEY"
    max_concurrent_requests: int = 8
    requests_per_minute: float = 0.0  # 0 disables the token bucket
    # index file names (inside the index directory)
    graph_file: str = "graph.hg"
    vector_file: str = "vectors.hvec"

    def validate(self) -> "PipelineConfig":
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.context_budget <= 0 or self.high_level_context_budget <= 0:
            raise ValidationError("token budgets must be positive")
        if self.chunk_overlap >= self.chunk_tokens:
            raise ValidationError("chunk_overlap must be smaller than chunk_tokens")
        if self.hnsw_m < 2:
            raise ValidationError("hnsw_m must be >= 2")
        if self.entry_k < 0 or self.cross_k_per_type < 0:
            raise ValidationError("entry_k and cross_k_per_type must be >= 0")
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(fields)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """TOML config: top-level scalars map straight onto fields; table
        sections are organizational and flatten by key."""
        with open(path, "rb") as f:
            raw = tomllib.load(f)
        flat: dict = {}
        for key, value in raw.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        return cls.from_dict(flat)

    def with_env_overrides(self, env: dict[str, str] | None = None) -> "PipelineConfig":
        env = os.environ if env is None else env
        values = dataclasses.asdict(self)
        for f in dataclasses.fields(self):
            raw = env.get(ENV_PREFIX + f.name.upper())
            if raw is None:
                continue
            if f.type in ("int",):
                values[f.name] = int(raw)
            elif f.type in ("float",):
                values[f.name] = float(raw)
            elif f.type in ("bool",):
                values[f.name] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                values[f.name] = raw
        return PipelineConfig(**values).validate()

    def save_snapshot(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load_snapshot(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_config(path: str | Path | None = None) -> PipelineConfig:
    config = PipelineConfig() if path is None else PipelineConfig.from_file(path)
    return config.with_env_overrides().validate()
