"""Dataclass configs for blocks, sweeps and the toy trainer."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ValidationError

BLOCK_TYPES = ("mamba", "vim", "dbm")


@dataclass(frozen=True)
class BlockConfig:
    type: str
    D: int
    E: int = 2
    N: int = 16
    conv_width: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.type not in BLOCK_TYPES:
            raise ValidationError(f"block type must be one of {BLOCK_TYPES}, got {self.type!r}")
        for name in ("D", "E", "N", "conv_width"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "BlockConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown block config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


def load_block_configs(path: str | Path) -> list[BlockConfig]:
    """Read one config object or a list of them from a JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read block config {path}: {exc}") from None
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not all(isinstance(d, dict) for d in data):
        raise ValidationError("block config must be an object or a list of objects")
    return [BlockConfig.from_dict(d) for d in data]


DEFAULT_FRAMES = (4, 8, 16, 32, 64, 128, 256, 512)


@dataclass
class SweepConfig:
    frames: tuple[int, ...] = DEFAULT_FRAMES
    tokens_per_frame: int = 196
    operators: tuple[str, ...] = ("selective_scan_chunked", "attention_naive")
    repeats: int = 9
    warmup: int = 2
    dtype: str = "f64"
    d_model: int = 32
    d_state: int = 16
    chunk: int = 64
    memory_budget: int = 1 << 30
    seed: int = 0
    timing: bool = True

    def __post_init__(self):
        self.frames = tuple(int(f) for f in self.frames)
        self.operators = tuple(self.operators)
        if not self.frames or any(f < 1 for f in self.frames):
            raise ValidationError("frames must be a non-empty list of positive counts")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise ValidationError("frames must be strictly increasing")
        if self.tokens_per_frame < 1 or self.repeats < 1 or self.warmup < 0:
            raise ValidationError("tokens_per_frame and repeats must be >= 1, warmup >= 0")


@dataclass
class TrainConfig:
    block: str = "dbm"
    seed: int = 7
    steps: int = 200
    d_model: int = 8
    length: int = 32
    expand: int = 2
    d_state: int = 4
    batch: int = 4
    lr: float = 0.02
    noise: float = 0.1
    window: int = 5

    def __post_init__(self):
        if self.block not in BLOCK_TYPES:
            raise ValidationError(f"block must be one of {BLOCK_TYPES}")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
