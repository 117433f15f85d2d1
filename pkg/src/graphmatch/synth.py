"""Synthetic grayscale frame generator (training/eval data at desk scale).

Frames mimic weakly-textured tissue: a smooth low-frequency background
covered by a dense jittered lattice of thin stroke crossings plus mild
noise. All crossings belong to one visual family (similar but not
identical), and the lattice spacing is on the order of the augmentation
warp displacements, so matching cannot fall back on raw pixel identity
or raw position alone -- the regime the descriptor is meant to solve.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ParameterError


def _as_size(size) -> tuple[int, int]:
    if isinstance(size, int):
        return size, size
    w, h = int(size[0]), int(size[1])
    return w, h


def _smooth_background(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    coarse = rng.uniform(0.58, 0.68, size=(5, 5))
    bg = ndimage.zoom(coarse, (h / coarse.shape[0], w / coarse.shape[1]), order=3)
    return np.clip(bg[:h, :w], 0.0, 1.0)


def _bezier_points(ctrl: np.ndarray, samples: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, samples)[:, None]
    u = 1.0 - t
    return (u ** 3) * ctrl[0] + 3 * (u ** 2) * t * ctrl[1] + 3 * u * (t ** 2) * ctrl[2] + (t ** 3) * ctrl[3]


def _stamp_stroke(ink: np.ndarray, points: np.ndarray, width: float, strength: float):
    h, w = ink.shape
    radius = max(int(np.ceil(width / 2.0)), 1)
    offs = np.arange(-radius, radius + 1)
    oy, ox = np.meshgrid(offs, offs, indexing="ij")
    disk = (oy ** 2 + ox ** 2) <= (width / 2.0) ** 2 + 0.25
    oy, ox = oy[disk], ox[disk]
    px = np.rint(points[:, 0]).astype(np.int64)
    py = np.rint(points[:, 1]).astype(np.int64)
    ys = (py[:, None] + oy[None, :]).ravel()
    xs = (px[:, None] + ox[None, :]).ravel()
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    np.maximum.at(ink, (ys[keep], xs[keep]), strength)


def _stamp_junction(ink, rng: np.random.Generator, center: np.ndarray, base_orientation: float):
    """Two thin strokes crossing at the given point.

    All junctions in a frame share one base orientation (plus tiny jitter),
    so stroke direction says little about identity; the crossing angle is
    the per-instance attribute, and it is invariant under the rotation /
    scale / translation warps used for augmentation.
    """
    orientation = base_orientation + np.deg2rad(rng.uniform(-6.0, 6.0))
    crossing = np.deg2rad(rng.uniform(30.0, 90.0))
    for ang in (orientation, orientation + crossing):
        length = rng.uniform(16.0, 19.0)
        d = np.array([np.cos(ang), np.sin(ang)])
        perp = np.array([-d[1], d[0]])
        bow = rng.uniform(-1.5, 1.5)
        c0 = center - d * (length / 2)
        c3 = center + d * (length / 2)
        c1 = c0 + d * (length / 3) + perp * bow
        c2 = c3 - d * (length / 3) + perp * bow
        pts = _bezier_points(np.array([c0, c1, c2, c3]), 48)
        _stamp_stroke(ink, pts, rng.uniform(1.3, 1.6), rng.uniform(0.35, 0.45))


def generate_synthetic_frame(seed: int, size=(256, 256), vessel_density: float = 1.0) -> np.ndarray:
    """Deterministic synthetic frame; density 0 leaves only the smooth background."""
    w, h = _as_size(size)
    if w < 64 or h < 64:
        raise ParameterError(f"frame size must be at least 64x64, got {w}x{h}")
    if vessel_density < 0:
        raise ParameterError("vessel_density must be non-negative")
    rng = np.random.default_rng(seed)
    frame = _smooth_background(rng, w, h)

    ink = np.zeros((h, w), dtype=np.float64)
    if vessel_density > 0:
        # dense jittered lattice of crossings: spacing is comparable to the
        # displacements of the augmentation warps, so neither raw appearance
        # nor raw position alone identifies a node
        cell = 20.0
        margin = 18.0
        base_orientation = rng.uniform(0.0, np.pi)
        nx = max(int((w - 2 * margin) // cell), 1)
        ny = max(int((h - 2 * margin) // cell), 1)
        for gy in range(ny):
            for gx in range(nx):
                if rng.uniform() > vessel_density:
                    continue
                center = np.array([
                    margin + (gx + 0.5) * cell + rng.integers(-3, 4),
                    margin + (gy + 0.5) * cell + rng.integers(-3, 4),
                ])
                _stamp_junction(ink, rng, center, base_orientation)

    if ink.any():
        ink = ndimage.gaussian_filter(ink, 0.6)
    frame = frame - ink
    frame = frame + rng.normal(0.0, 0.02, size=frame.shape)
    return np.clip(frame, 0.0, 1.0).astype(np.float32)


def generate_pan_sequence(seed: int, n_frames: int, size=(256, 256), step=(12, 4), vessel_density: float = 1.0):
    """Overlapping crops panning across one larger synthetic canvas.

    Returns (frames, step); the true map from frame i+1 to frame i is a
    translation by +step.
    """
    if n_frames < 1:
        raise ParameterError("need at least one frame")
    w, h = _as_size(size)
    dx, dy = int(step[0]), int(step[1])
    span_x = w + abs(dx) * (n_frames - 1)
    span_y = h + abs(dy) * (n_frames - 1)
    canvas = generate_synthetic_frame(seed, (span_x, span_y), vessel_density)
    frames = []
    x0 = 0 if dx >= 0 else span_x - w
    y0 = 0 if dy >= 0 else span_y - h
    for i in range(n_frames):
        x = x0 + dx * i
        y = y0 + dy * i
        frames.append(canvas[y : y + h, x : x + w].copy())
    return frames, (dx, dy)
