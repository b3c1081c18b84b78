"""Governance configuration: one structured file, credentials by env-var name only."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class DatabaseConfig:
    engine: str = "embedded"          # "embedded" | "postgres"
    path: str = ":memory:"            # embedded engine database file
    host: str = "localhost"
    port: int = 5432
    dbname: str = ""
    role: str = ""
    password_env: str = "TERRASQL_DB_PASSWORD"


@dataclass
class LlmConfig:
    mode: str = "replay"              # "replay" | "record" | "live"
    provider: str = "http"            # "http" | "scripted"
    base_url: str = ""
    model: str = ""
    api_key_env: str = "TERRASQL_LLM_API_KEY"
    fixtures_path: str = ""           # empty -> bundled fixture set
    max_retries: int = 3
    repair_rounds: int = 2
    temperature: float = 0.0
    max_tokens: int = 2048


@dataclass
class EmbeddingConfig:
    provider: str = "hashing"
    dim: int = 256
    seed: int = 42


@dataclass
class Thresholds:
    unique_values_limit: int = 1000
    sample_size: int = 10
    sample_seed: int = 42
    confidence_floor: float = 0.5
    k_min: int = 1
    k_max: int = 8
    flatness_epsilon: float = 1e-6
    recall_k: int = 3
    recall_floor: float = 0.75
    review_attempts: int = 3
    logic_roundtrips: int = 3
    agent_retries: int = 1
    row_cap: int = 10
    statement_timeout_ms: int = 10_000
    preview_width: int = 40
    function_docs_k: int = 3


@dataclass
class EngineConfig:
    database: DatabaseConfig = field(default_factory=DatabaseConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    kb_dir: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(str(path), f"config file not found: {path}")
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict) -> "EngineConfig":
        cfg = cls()
        sections = {
            "database": cfg.database,
            "llm": cfg.llm,
            "embedding": cfg.embedding,
            "thresholds": cfg.thresholds,
        }
        for name, target in sections.items():
            for key, value in (raw.get(name) or {}).items():
                if not hasattr(target, key):
                    raise ConfigError(f"{name}.{key}", f"unknown config key: {name}.{key}")
                setattr(target, key, value)
        cfg.kb_dir = raw.get("kb_dir", "") or (raw.get("paths") or {}).get("kb_dir", "")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.database.engine not in ("embedded", "postgres"):
            raise ConfigError("database.engine", f"unsupported engine: {self.database.engine}")
        if self.database.engine == "postgres" and not self.database.dbname:
            raise ConfigError("database.dbname")
        if self.llm.mode not in ("replay", "record", "live"):
            raise ConfigError("llm.mode", f"unsupported llm mode: {self.llm.mode}")
        if self.llm.mode == "live" and self.llm.provider == "http" and not self.llm.base_url:
            raise ConfigError("llm.base_url")
        if self.thresholds.k_min < 1 or self.thresholds.k_min > self.thresholds.k_max:
            raise ConfigError("thresholds.k_min", "requires 1 <= k_min <= k_max")

    def database_credential(self) -> str:
        return os.environ.get(self.database.password_env, "")

    def llm_credential(self) -> str:
        return os.environ.get(self.llm.api_key_env, "")
