"""Training configuration, mirrored one-to-one by the JSON config file."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ParameterError


@dataclass
class TrainConfig:
    patch_side: int = 128
    max_keypoints: int = 512
    tau: float = 0.08
    negatives_per_anchor: int = 10
    learning_rate: float = 5e-4
    epochs: int = 10
    seed: int = 0
    rotation_degrees: tuple[float, ...] = (5.0, 10.0, 15.0)
    translation_pixels: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0)
    scale_factors: tuple[float, ...] = (0.9, 0.95, 1.05, 1.1, 1.15)
    toy_mode: bool = False
    scaled_attention: bool = True
    include_positive_in_denominator: bool = False
    checkpoint_interval: int = 500

    def __post_init__(self):
        for name in ("patch_side", "max_keypoints", "negatives_per_anchor", "epochs", "checkpoint_interval"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("tau", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("rotation_degrees", "translation_pixels", "scale_factors"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ParameterError(f"{name} must be a non-empty list")
            object.__setattr__(self, name, values)

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """Desk-scale preset: 32 px patches and a small key-point budget."""
        defaults = dict(patch_side=32, max_keypoints=48, epochs=12, toy_mode=True)
        defaults.update(overrides)
        return cls(**defaults)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ParameterError(f"unknown config fields: {unknown}")
        return cls(**raw)
