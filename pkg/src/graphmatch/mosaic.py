"""Panorama compositing from chained homographies with feathered blending."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ResourceLimitError, ShapeError
from .homography import Homography


@dataclass
class PanoramaResult:
    image: np.ndarray            # (H, W) composited canvas in [0,1]
    offset: tuple[float, float]  # canvas origin in reference-frame coordinates
    seam_rms: float              # RMS pairwise intensity difference over overlaps
    overlap_pixels: int


def _feather_weights(h: int, w: int) -> np.ndarray:
    """Distance-to-border ramp, 1 at the frame center line, >0 everywhere."""
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    wx = np.minimum(xs + 1.0, w - xs)
    wy = np.minimum(ys + 1.0, h - ys)
    weights = np.minimum(wy[:, None], wx[None, :])
    return weights / weights.max()


def warp_homography(img: np.ndarray, h: Homography, out_shape, offset=(0.0, 0.0)):
    """Warp into a canvas of out_shape whose origin sits at ``offset``.

    Returns (warped, interior) where interior marks samples taken strictly
    inside the source frame (safe for seam statistics).
    """
    if img.ndim != 2:
        raise ShapeError("warp_homography expects a grayscale (H,W) image")
    hh, ww = img.shape
    out_h, out_w = out_shape
    inv = h.inverse().matrix
    xs_out, ys_out = np.meshgrid(
        np.arange(out_w, dtype=np.float64) + offset[0],
        np.arange(out_h, dtype=np.float64) + offset[1],
    )
    denom = inv[2, 0] * xs_out + inv[2, 1] * ys_out + inv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = (inv[0, 0] * xs_out + inv[0, 1] * ys_out + inv[0, 2]) / denom
        ys = (inv[1, 0] * xs_out + inv[1, 1] * ys_out + inv[1, 2]) / denom
    bad = ~np.isfinite(xs) | ~np.isfinite(ys)
    xs = np.where(bad, -1.0, xs)
    ys = np.where(bad, -1.0, ys)

    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def fetch(yy, xx):
        inside = (xx >= 0) & (xx < ww) & (yy >= 0) & (yy < hh)
        vals = img[np.clip(yy, 0, hh - 1), np.clip(xx, 0, ww - 1)]
        return np.where(inside, vals, 0.0)

    warped = (
        (1 - fy) * ((1 - fx) * fetch(y0, x0) + fx * fetch(y0, x0 + 1))
        + fy * ((1 - fx) * fetch(y0 + 1, x0) + fx * fetch(y0 + 1, x0 + 1))
    )
    interior = (xs >= 0) & (xs <= ww - 1) & (ys >= 0) & (ys <= hh - 1)
    return warped, interior


def composite_panorama(frames, chained: list[Homography], max_canvas_pixels: int = 64_000_000) -> PanoramaResult:
    """Composite frames; homography i maps frame i+1 into frame i coordinates.

    The canvas covers the union of all warped frame bounds relative to the
    first frame; overlaps blend by feathered (border-distance weighted)
    averaging. Raises ResourceLimitError when the canvas would exceed
    ``max_canvas_pixels``.
    """
    frames = list(frames)
    if not frames:
        raise ContractError("composite_panorama needs at least one frame")
    if len(chained) != len(frames) - 1:
        raise ContractError(f"need {len(frames) - 1} homographies for {len(frames)} frames, got {len(chained)}")

    to_reference = [Homography.identity()]
    for h in chained:
        to_reference.append(to_reference[-1].compose(h))

    corners_all = []
    for frame, h in zip(frames, to_reference):
        hh, ww = frame.shape
        corners = np.array([[0, 0], [ww - 1, 0], [0, hh - 1], [ww - 1, hh - 1]], dtype=np.float64)
        corners_all.append(h.apply(corners))
    pts = np.vstack(corners_all)
    x_min, y_min = np.floor(pts.min(axis=0))
    x_max, y_max = np.ceil(pts.max(axis=0))
    out_w = int(x_max - x_min) + 1
    out_h = int(y_max - y_min) + 1
    if out_w * out_h > max_canvas_pixels:
        raise ResourceLimitError(f"canvas {out_w}x{out_h} exceeds {max_canvas_pixels} pixels")
    offset = (float(x_min), float(y_min))

    acc = np.zeros((out_h, out_w), dtype=np.float64)
    wsum = np.zeros_like(acc)
    count = np.zeros_like(acc)
    isum = np.zeros_like(acc)
    i2sum = np.zeros_like(acc)
    for frame, h in zip(frames, to_reference):
        weights = _feather_weights(*frame.shape)
        warped, interior = warp_homography(frame.astype(np.float64, copy=False), h, (out_h, out_w), offset)
        warped_w, _ = warp_homography(weights, h, (out_h, out_w), offset)
        warped_w = np.where(interior, warped_w, 0.0)
        acc += warped * warped_w
        wsum += warped_w
        count += interior
        isum += np.where(interior, warped, 0.0)
        i2sum += np.where(interior, warped * warped, 0.0)

    canvas = np.where(wsum > 0, acc / np.where(wsum > 0, wsum, 1.0), 0.0)

    overlap = count >= 2
    n_overlap = int(overlap.sum())
    if n_overlap:
        n = count[overlap]
        mean = isum[overlap] / n
        var = np.maximum(i2sum[overlap] / n - mean * mean, 0.0)
        pairwise_sq = 2.0 * n * var / (n - 1.0)  # mean squared difference over frame pairs
        seam_rms = float(np.sqrt(pairwise_sq.mean()))
    else:
        seam_rms = 0.0

    return PanoramaResult(canvas.astype(np.float32), offset, seam_rms, n_overlap)
