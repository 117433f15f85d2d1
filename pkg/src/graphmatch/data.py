"""Dataset ingestion: per-sequence directories of image frames, split by sequence."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .imaging import read_image

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".pgm"}


@dataclass
class Sequence:
    name: str
    frames: list[Path]


@dataclass
class Dataset:
    root: Path
    train: list[Sequence]
    validation: list[Sequence]

    def train_frames(self) -> list[Path]:
        return [p for seq in self.train for p in seq.frames]

    def validation_frames(self) -> list[Path]:
        return [p for seq in self.validation for p in seq.frames]


def _sequence_dirs(root: Path) -> list[Sequence]:
    sequences = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        frames = sorted(p for p in sub.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
        if not frames:
            log.warning("sequence directory %s has no image files; skipping", sub)
            continue
        sequences.append(Sequence(sub.name, frames))
    return sequences


def load_dataset(root, split_seed: int = 0) -> Dataset:
    """Deterministic sequence-level train/validation split (about 16:5).

    Frames within a sequence stay in lexicographic order. A single-sequence
    dataset becomes train-only with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    sequences = _sequence_dirs(root)
    if not sequences:
        raise DatasetError(f"{root} contains no sequence subdirectories with images")

    order = np.random.default_rng(split_seed).permutation(len(sequences))
    n_val = int(round(len(sequences) * 5.0 / 21.0))
    val_idx = set(order[:n_val].tolist())
    train = [sequences[i] for i in range(len(sequences)) if i not in val_idx]
    validation = [sequences[i] for i in range(len(sequences)) if i in val_idx]
    if not validation:
        log.warning("dataset %s: validation split is empty (%d sequences)", root, len(sequences))
    return Dataset(root, train, validation)


def load_frames(paths) -> list[np.ndarray]:
    """Read frames, skipping unreadable files with a warning."""
    frames = []
    for p in paths:
        try:
            frames.append(read_image(p))
        except Exception as e:  # malformed file: skip, keep going
            log.warning("skipping unreadable frame %s (%s)", p, e)
    return frames
