"""Image preparation and geometric/photometric transforms.

Images are numpy arrays with intensities in [0,1]: grayscale (H,W) or
color (H,W,3). Points are (x, y) pixel coordinates with x along columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import DegenerateGeometryError, ParameterError, ShapeError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


# -- affine transforms ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """2x3 affine map acting on (x, y) points: p' = A @ p + t."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ShapeError(f"affine matrix must be 2x3, got {m.shape}")
        if not np.isfinite(m).all():
            raise ParameterError("affine matrix has non-finite entries")
        if abs(np.linalg.det(m[:, :2])) < 1e-12:
            raise DegenerateGeometryError("affine transform has singular linear part")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]]))

    @classmethod
    def rotation(cls, degrees: float, center=(0.0, 0.0)) -> "AffineTransform":
        th = np.deg2rad(degrees)
        c, s = np.cos(th), np.sin(th)
        cx, cy = center
        # rotate about the given center
        return cls(np.array([
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
        ]))

    @classmethod
    def scaling(cls, factor: float, center=(0.0, 0.0)) -> "AffineTransform":
        cx, cy = center
        return cls(np.array([
            [factor, 0.0, cx * (1.0 - factor)],
            [0.0, factor, cy * (1.0 - factor)],
        ]))

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """Transform applying ``other`` first, then ``self``."""
        a, b = self.matrix, other.matrix
        lin = a[:, :2] @ b[:, :2]
        off = a[:, :2] @ b[:, 2] + a[:, 2]
        return AffineTransform(np.column_stack([lin, off]))

    def inverse(self) -> "AffineTransform":
        inv = np.linalg.inv(self.matrix[:, :2])
        return AffineTransform(np.column_stack([inv, -inv @ self.matrix[:, 2]]))

    def apply(self, points) -> np.ndarray:
        """Map (x, y) points; accepts a single point or an (N,2) array."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = pts @ self.matrix[:, :2].T + self.matrix[:, 2]
        return out[0] if single else out


def transform_point(point, transform: AffineTransform) -> np.ndarray:
    return transform.apply(point)


def image_center(img: np.ndarray) -> tuple[float, float]:
    h, w = img.shape[:2]
    return ((w - 1) / 2.0, (h - 1) / 2.0)


# -- photometric ops -----------------------------------------------------------


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luminance combination 0.299 R + 0.587 G + 0.114 B."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"to_grayscale expects an (H,W,3) image, got {img.shape}")
    r, g, b = GRAY_WEIGHTS
    out = r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _clahe_tile_luts(img: np.ndarray, y_edges, x_edges, clip_limit: float, bins: int) -> np.ndarray:
    ty, tx = len(y_edges) - 1, len(x_edges) - 1
    luts = np.empty((ty, tx, bins), dtype=np.float64)
    for iy in range(ty):
        for ix in range(tx):
            tile = img[y_edges[iy]:y_edges[iy + 1], x_edges[ix]:x_edges[ix + 1]]
            idx = np.minimum((tile * bins).astype(np.int64), bins - 1)
            hist = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
            n = tile.size
            clip = clip_limit * n / bins
            excess = np.maximum(hist - clip, 0.0).sum()
            hist = np.minimum(hist, clip) + excess / bins
            luts[iy, ix] = np.cumsum(hist) / n
    return luts


def clahe(img: np.ndarray, tiles=(8, 8), clip_limit: float = 2.0, bins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Per-tile histograms are clipped at ``clip_limit`` times the uniform bin
    count, the excess is redistributed evenly, and each pixel is remapped by
    bilinear interpolation between the CDFs of the surrounding tiles. A 1x1
    grid with a huge clip limit reduces to plain global equalization.
    """
    if img.ndim != 2:
        raise ShapeError("clahe expects a grayscale (H,W) image")
    if isinstance(tiles, int):
        tiles = (tiles, tiles)
    tx, ty = int(tiles[0]), int(tiles[1])
    if tx < 1 or ty < 1:
        raise ParameterError("tile grid must be at least 1x1")
    if clip_limit <= 0:
        raise ParameterError("clip_limit must be positive")
    h, w = img.shape
    if h < ty or w < tx:
        raise ParameterError(f"image {w}x{h} smaller than tile grid {tx}x{ty}")

    y_edges = (np.arange(ty + 1) * h) // ty
    x_edges = (np.arange(tx + 1) * w) // tx
    luts = _clahe_tile_luts(img, y_edges, x_edges, clip_limit, bins)

    # tile centers in pixel coordinates
    cy = (y_edges[:-1] + y_edges[1:] - 1) / 2.0
    cx = (x_edges[:-1] + x_edges[1:] - 1) / 2.0

    def axis_weights(coords, centers):
        lo = np.clip(np.searchsorted(centers, coords, side="right") - 1, 0, len(centers) - 1)
        hi = np.minimum(lo + 1, len(centers) - 1)
        span = centers[hi] - centers[lo]
        frac = np.where(span > 0, (coords - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
        return lo, hi, np.clip(frac, 0.0, 1.0)

    ylo, yhi, wy = axis_weights(np.arange(h, dtype=np.float64), cy)
    xlo, xhi, wx = axis_weights(np.arange(w, dtype=np.float64), cx)

    b = np.minimum((img * bins).astype(np.int64), bins - 1)
    ylo2, yhi2 = ylo[:, None], yhi[:, None]
    xlo2, xhi2 = xlo[None, :], xhi[None, :]
    wy2, wx2 = wy[:, None], wx[None, :]
    out = (
        (1 - wy2) * (1 - wx2) * luts[ylo2, xlo2, b]
        + (1 - wy2) * wx2 * luts[ylo2, xhi2, b]
        + wy2 * (1 - wx2) * luts[yhi2, xlo2, b]
        + wy2 * wx2 * luts[yhi2, xhi2, b]
    )
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def motion_blur(img: np.ndarray, kernel_size: int) -> np.ndarray:
    """Convolution with a normalized horizontal line kernel (edge-replicated)."""
    if img.ndim != 2:
        raise ShapeError("motion_blur expects a grayscale (H,W) image")
    if kernel_size < 1 or kernel_size > img.shape[1]:
        raise ParameterError(f"kernel size {kernel_size} invalid for image width {img.shape[1]}")
    kernel = np.full(kernel_size, 1.0 / kernel_size)
    out = ndimage.convolve1d(img.astype(np.float64), kernel, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# -- warping ----------------------------------------------------------------------


def _bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample at float coordinates; out-of-bounds contributions are zero."""
    h, w = img.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def fetch(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(inside, vals, 0.0)

    v00 = fetch(y0, x0)
    v01 = fetch(y0, x0 + 1)
    v10 = fetch(y0 + 1, x0)
    v11 = fetch(y0 + 1, x0 + 1)
    return ((1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11))


def warp_affine(img: np.ndarray, transform: AffineTransform) -> np.ndarray:
    """Inverse-mapping warp with bilinear interpolation; outside samples are zero.

    Content at source point p renders at transform(p) in the output.
    """
    if img.ndim != 2:
        raise ShapeError("warp_affine expects a grayscale (H,W) image")
    h, w = img.shape
    inv = transform.inverse().matrix
    xs_out, ys_out = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    xs = inv[0, 0] * xs_out + inv[0, 1] * ys_out + inv[0, 2]
    ys = inv[1, 0] * xs_out + inv[1, 1] * ys_out + inv[1, 2]
    return _bilinear_sample(img.astype(np.float64, copy=False), xs, ys).astype(img.dtype, copy=False)


def sample_at(img: np.ndarray, points) -> np.ndarray:
    """Bilinear intensity lookup at (x, y) points (zeros outside)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _bilinear_sample(img.astype(np.float64, copy=False), pts[:, 0], pts[:, 1])


# -- patches ------------------------------------------------------------------------


def extract_patch(img: np.ndarray, center, side: int = 128) -> np.ndarray | None:
    """Side x side window centered on the point (rounded to the nearest pixel).

    Returns None when the window leaves the image bounds.
    """
    if side % 2 != 0:
        raise ParameterError("patch side must be even")
    if img.ndim != 2:
        raise ShapeError("extract_patch expects a grayscale (H,W) image")
    h, w = img.shape
    cx = int(np.rint(center[0]))
    cy = int(np.rint(center[1]))
    half = side // 2
    x0, x1 = cx - half, cx + half
    y0, y1 = cy - half, cy + half
    if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
        return None
    return img[y0:y1, x0:x1].copy()


def patch_fits(image_size, center, side: int) -> bool:
    """Bound check matching extract_patch, without copying pixels."""
    w, h = image_size
    cx = int(np.rint(center[0]))
    cy = int(np.rint(center[1]))
    half = side // 2
    return cx - half >= 0 and cy - half >= 0 and cx + half <= w and cy + half <= h


# -- file I/O -----------------------------------------------------------------------


def read_pgm(path) -> np.ndarray:
    """Binary (P5) PGM with maxval 255; intensities map to byte/255."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise ParameterError(f"{path}: not a binary P5 PGM")
    # header: magic, width, height, maxval; '#' comments allowed
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ParameterError(f"{path}: only maxval 255 supported, got {maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return (data.reshape(height, width).astype(np.float32)) / 255.0


def write_pgm(path, img: np.ndarray) -> None:
    if img.ndim != 2:
        raise ShapeError("PGM supports grayscale images only")
    h, w = img.shape
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_image(path) -> np.ndarray:
    """PNG or PGM to float array in [0,1]; color stays (H,W,3)."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        return read_pgm(path)
    with PILImage.open(path) as im:
        if im.mode in ("L", "I", "I;16"):
            arr = np.asarray(im.convert("L"), dtype=np.float32)
            return arr / 255.0
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
        return arr / 255.0


def write_image(path, img: np.ndarray) -> None:
    path = str(path)
    if path.lower().endswith(".pgm"):
        write_pgm(path, img)
        return
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data).save(path)
