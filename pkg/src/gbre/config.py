"""Training configuration and dataset presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

AGGREGATIONS = ("att", "one", "ave")


@dataclass
class TrainConfig:
    word_dim: int = 200
    hidden_size: int = 230
    window: int = 3
    pos_dim: int = 5
    bag_dropout: float = 0.3
    dropout: float = 0.5
    learning_rate: float = 0.05
    batch_size: int = 30
    optimizer: str = "sgd"
    epochs: int = 50
    patience: int = 5
    seed: int = 0
    max_len: int = 100
    max_bag_size: int = 32
    qs_att: bool = True
    bag_att: bool = True
    aggregation: str = "att"
    freeze_embeddings: bool = False
    p_at_n: tuple = (100, 200, 300)

    def __post_init__(self):
        self.p_at_n = tuple(int(n) for n in self.p_at_n)
        self.validate()

    def validate(self):
        for name in ("bag_dropout", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.optimizer != "sgd":
            raise ValueError("only plain SGD is supported")
        if self.max_len < 3:
            raise ValueError("max_len must be >= 3")

    @property
    def qs_output_size(self) -> int:
        return 3 * self.word_dim

    @property
    def encoder_input_size(self) -> int:
        return (3 * self.word_dim if self.qs_att else self.word_dim) + 2 * self.pos_dim

    @property
    def encoder_output_size(self) -> int:
        return 3 * self.hidden_size

    @property
    def classifier_input_size(self) -> int:
        return self.encoder_output_size

    @property
    def variant(self) -> str:
        name = "PACNN" if self.aggregation == "att" else f"PCNN+{self.aggregation.upper()}"
        if self.qs_att:
            name += "+QS_ATT"
        if self.bag_att:
            name += "+BAG_ATT"
        return name

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["p_at_n"] = list(self.p_at_n)
        return d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    "biorel": dict(word_dim=200, hidden_size=230, window=3, pos_dim=5, bag_dropout=0.3,
                   dropout=0.5, learning_rate=0.05, batch_size=30,
                   p_at_n=(4000, 8000, 12000, 16000)),
    "tbga": dict(word_dim=200, hidden_size=230, window=3, pos_dim=5, bag_dropout=0.25,
                 dropout=0.5, learning_rate=0.1, batch_size=128,
                 p_at_n=(50, 100, 250, 500, 1000)),
    "nyt": dict(word_dim=200, hidden_size=230, window=3, pos_dim=5, bag_dropout=0.3,
                dropout=0.5, learning_rate=0.05, batch_size=30, p_at_n=(100, 200, 300)),
    "synthetic": dict(word_dim=24, hidden_size=32, window=3, pos_dim=5, bag_dropout=0.3,
                      dropout=0.5, learning_rate=0.5, batch_size=16, epochs=20, patience=20,
                      max_len=40, p_at_n=(100, 200, 300)),
}


def preset(name: str, **overrides) -> TrainConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return TrainConfig(**{**PRESETS[name], **overrides})


def load_config_file(path) -> dict:
    """Read a flat JSON object of TrainConfig keys (and optional run keys)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise ValueError(f"{path}: config must be a flat key-value object")
    return data
