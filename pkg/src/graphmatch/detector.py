"""Harris corner detection and ground-truth correspondence from known transforms."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ContractError, ShapeError


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    response: float


def keypoint_positions(keypoints) -> np.ndarray:
    """(N,2) array of (x, y) coordinates from keypoints or raw points."""
    if isinstance(keypoints, np.ndarray):
        return keypoints.reshape(-1, 2).astype(np.float64)
    return np.array([[kp.x, kp.y] for kp in keypoints], dtype=np.float64).reshape(-1, 2)


def _sobel_gradients(img: np.ndarray):
    # separable Sobel, normalized to approximate unit-spacing derivatives
    smooth = np.array([1.0, 2.0, 1.0]) / 4.0
    diff = np.array([1.0, 0.0, -1.0]) / 2.0
    ix = ndimage.convolve1d(ndimage.convolve1d(img, smooth, axis=0, mode="nearest"), diff, axis=1, mode="nearest")
    iy = ndimage.convolve1d(ndimage.convolve1d(img, smooth, axis=1, mode="nearest"), diff, axis=0, mode="nearest")
    return ix, iy


def harris_response(img: np.ndarray, sigma: float = 1.5, k: float = 0.04) -> np.ndarray:
    """Harris corner response map: det(M) - k * trace(M)^2."""
    if img.ndim != 2:
        raise ShapeError("harris_response expects a grayscale (H,W) image")
    img = img.astype(np.float64, copy=False)
    ix, iy = _sobel_gradients(img)
    sxx = ndimage.gaussian_filter(ix * ix, sigma, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, sigma, mode="nearest")
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def _local_maxima(resp: np.ndarray) -> np.ndarray:
    """3x3 non-maximum suppression; ties go to the lower (y, x) position."""
    h, w = resp.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = resp
    keep = np.ones_like(resp, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            neighbor = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            if (dy, dx) > (0, 0):
                keep &= resp >= neighbor
            else:
                keep &= resp > neighbor
    return keep


def detect_corners(
    img: np.ndarray,
    max_points: int = 512,
    *,
    sigma: float = 1.5,
    k: float = 0.04,
    border_margin: int = 0,
    rel_threshold: float = 0.01,
    min_response: float = 1e-6,
) -> list[Keypoint]:
    """Harris corners with 3x3 NMS, strongest first.

    ``border_margin`` pre-filters detections whose patch window would leave
    the image (pass patch_side // 2). May return an empty list.
    """
    resp = harris_response(img, sigma=sigma, k=k)
    peak = float(resp.max(initial=-np.inf))
    if not np.isfinite(peak) or peak <= min_response:
        return []
    threshold = max(min_response, rel_threshold * peak)
    mask = (resp > threshold) & _local_maxima(resp)
    h, w = img.shape
    if border_margin > 0:
        lo_y = min(border_margin, h)
        lo_x = min(border_margin, w)
        border = np.zeros_like(mask)
        border[lo_y : h - border_margin, lo_x : w - border_margin] = True
        mask &= border
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return []
    scores = resp[ys, xs]
    order = np.lexsort((xs, ys, -scores))[:max_points]
    return [Keypoint(float(xs[i]), float(ys[i]), float(scores[i])) for i in order]


def ground_truth_matches(kps_a, kps_b, transform, pe_threshold: float = 5.0) -> dict[int, int]:
    """Map each index i in A to its nearest j in B with ||T(p_i) - p_j|| <= bound.

    ``transform`` is anything with an ``apply(points)`` method mapping image-A
    coordinates to image-B coordinates (AffineTransform, Homography).
    """
    pa = keypoint_positions(kps_a)
    pb = keypoint_positions(kps_b)
    if len(pa) == 0 or len(pb) == 0:
        return {}
    projected = transform.apply(pa)
    d2 = ((projected[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    dist = np.sqrt(d2[np.arange(len(pa)), nearest])
    return {int(i): int(nearest[i]) for i in range(len(pa)) if dist[i] <= pe_threshold}


# -- keypoint CSV interchange ------------------------------------------------------


def save_keypoints_csv(path, keypoints) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "response"])
        for kp in keypoints:
            writer.writerow([repr(kp.x), repr(kp.y), repr(kp.response)])


def load_keypoints_csv(path) -> list[Keypoint]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["x", "y", "response"]:
            raise ContractError(f"{path}: expected header 'x,y,response'")
        return [Keypoint(float(r[0]), float(r[1]), float(r[2])) for r in reader if r]
