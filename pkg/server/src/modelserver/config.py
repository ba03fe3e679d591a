"""Server and training configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ServerConfig:
    predictor_ckpt: str
    editor_ckpt: str
    scorer_ckpt: str | None = None
    device: str = "cpu"
    max_seq_len: int = 512
    aggregation: str = "sum"  # subword-to-word mode: sum | max
    port: int = 8750
    queue_size: int = 8

    def __post_init__(self) -> None:
        if self.aggregation not in ("sum", "max"):
            raise ValueError(f"unknown aggregation mode: {self.aggregation!r}")
        if not (0 < self.port < 65536):
            raise ValueError("port out of range")
        if self.queue_size < 0:
            raise ValueError("queue_size must be >= 0")


@dataclass(frozen=True)
class Stage1Config:
    """Editor fine-tuning: masked-reconstruction pairs from the task dataset."""

    masking: str = "gradient"       # gradient | random
    label_mode: str = "pred"        # pred | gold
    mask_lo: float = 0.20           # n1 sampled per example from [lo, hi]
    mask_hi: float = 0.55
    merge_gap: int = 2
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 3e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.masking not in ("gradient", "random"):
            raise ValueError(f"unknown masking strategy: {self.masking!r}")
        if self.label_mode not in ("pred", "gold"):
            raise ValueError(f"unknown label mode: {self.label_mode!r}")
        if not (0.0 < self.mask_lo <= self.mask_hi <= 1.0):
            raise ValueError("need 0 < mask_lo <= mask_hi <= 1")


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 8
    batch_size: int = 16
    learning_rate: float = 1e-3
    dim: int = 64
    heads: int = 4
    layers: int = 2
    seed: int = 0


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dump_config(cfg) -> dict:
    return asdict(cfg)
