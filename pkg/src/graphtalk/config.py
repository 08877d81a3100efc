"""Run configuration: hyperparameters, flags and validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "load_config"]


@dataclass
class RunConfig:
    """Everything a training or evaluation run depends on.

    ``entity_dim`` must equal ``2 * hidden_size`` unless
    ``query_projection`` inserts a learned projection in front of the
    knowledge graph. Dropout outside [0.1, 0.5] requires
    ``dropout_override`` (regularization is expected in that band; 0.0
    is useful for exact-determinism and gradient checks).
    """

    # data
    dataset: str = ""
    dataset_format: str = "jsonl"  # jsonl | smd | multiwoz
    ontology: str = ""

    # model sizes
    hidden_size: int = 16
    embed_size: int = 0            # 0 -> same as hidden_size
    entity_dim: int = 0            # 0 -> 2 * hidden_size
    hops: int = 3
    k_max: int = 4

    # training
    dropout: float = 0.1
    dropout_override: bool = False
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 10
    seed: int = 13
    max_decode_len: int = 24

    # flags
    tie_directions: bool = False
    sequential_only: bool = False
    query_projection: bool = False

    def __post_init__(self):
        if self.embed_size == 0:
            self.embed_size = self.hidden_size
        if self.entity_dim == 0:
            self.entity_dim = 2 * self.hidden_size
        self.validate()

    def validate(self) -> None:
        if self.hidden_size < 1 or self.embed_size < 1 or self.entity_dim < 1:
            raise ConfigError("model dimensions must be positive")
        if self.hops < 1:
            raise ConfigError("hops must be >= 1")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.entity_dim != 2 * self.hidden_size and not self.query_projection:
            raise ConfigError(
                f"entity_dim ({self.entity_dim}) must equal 2*hidden_size "
                f"({2 * self.hidden_size}) unless query_projection is enabled")
        if not (0.1 <= self.dropout <= 0.5) and not self.dropout_override:
            raise ConfigError(
                f"dropout {self.dropout} outside [0.1, 0.5]; set dropout_override to allow")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.max_decode_len < 0:
            raise ConfigError("max_decode_len must be >= 0")
        if self.dataset_format not in ("jsonl", "smd", "multiwoz"):
            raise ConfigError(f"unknown dataset format: {self.dataset_format!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config file and apply explicit overrides on top."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(raw)
