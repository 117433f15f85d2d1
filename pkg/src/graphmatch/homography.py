"""Homography estimation: normalized DLT and classic RANSAC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateGeometryError, EstimationFailureError


@dataclass(eq=False)
class Homography:
    """3x3 projective map on (x, y) points, bottom-right normalized to 1."""

    matrix: np.ndarray
    inliers: np.ndarray | None = field(default=None)  # indices into the input pairs

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise DegenerateGeometryError(f"homography must be 3x3, got {m.shape}")
        if abs(np.linalg.det(m)) < 1e-15:
            raise DegenerateGeometryError("homography matrix is singular")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        self.matrix = m

    @property
    def inlier_count(self) -> int:
        return 0 if self.inliers is None else len(self.inliers)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_affine(cls, transform) -> "Homography":
        return cls(np.vstack([transform.matrix, [0.0, 0.0, 1.0]]))

    def compose(self, other: "Homography") -> "Homography":
        """Apply ``other`` first, then ``self``."""
        return Homography(self.matrix @ other.matrix)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        hom = np.column_stack([pts, np.ones(len(pts))]) @ self.matrix.T
        with np.errstate(divide="ignore", invalid="ignore"):
            out = hom[:, :2] / hom[:, 2:3]
        return out[0] if single else out


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity T mapping the points to centroid 0 and mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    if dist < 1e-12:
        raise DegenerateGeometryError("all points coincide")
    s = np.sqrt(2.0) / dist
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Least-squares homography via normalized DLT (SVD null vector).

    Needs >= 4 correspondences with no 3 source points collinear; raises
    DegenerateGeometryError for rank-deficient configurations.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ContractError("point lists differ in length")
    if len(src) < 4:
        raise ContractError("homography needs at least 4 correspondences")

    ta = _hartley_normalization(src)
    tb = _hartley_normalization(dst)
    sn = np.column_stack([src, np.ones(len(src))]) @ ta.T
    dn = np.column_stack([dst, np.ones(len(dst))]) @ tb.T

    a = np.zeros((2 * len(src), 9))
    x, y = sn[:, 0], sn[:, 1]
    xp, yp = dn[:, 0], dn[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = x * xp
    a[0::2, 7] = y * xp
    a[0::2, 8] = xp
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = x * yp
    a[1::2, 7] = y * yp
    a[1::2, 8] = yp

    _, singular, vt = np.linalg.svd(a)
    # a true homography leaves exactly one near-null direction
    if singular[-2] <= 1e-9 * max(singular[0], 1.0):
        raise DegenerateGeometryError("degenerate point configuration (collinear points?)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tb) @ h_norm @ ta
    if abs(np.linalg.det(h)) < 1e-15:
        raise DegenerateGeometryError("estimated homography is singular")
    return Homography(h)


def reprojection_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    projected = h.apply(src)
    err = np.sqrt(((projected - np.asarray(dst, dtype=np.float64)) ** 2).sum(axis=1))
    return np.where(np.isfinite(err), err, np.inf)


def ransac_homography(
    src: np.ndarray,
    dst: np.ndarray,
    iterations: int = 2000,
    inlier_threshold_px: float = 3.0,
    seed: int = 0,
) -> Homography:
    """Classic RANSAC: minimal 4-point DLT fits, best inlier set, final refit.

    Deterministic for a fixed seed. Raises EstimationFailureError when no
    candidate reaches 4 inliers.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = len(src)
    if n < 4 or len(dst) != n:
        raise ContractError("RANSAC needs >= 4 correspondences of equal length")

    rng = np.random.default_rng(seed)
    best_count = 0
    best_mask = None
    for _ in range(iterations):
        pick = rng.choice(n, size=4, replace=False)
        try:
            candidate = dlt_homography(src[pick], dst[pick])
        except DegenerateGeometryError:
            continue
        err = reprojection_errors(candidate, src, dst)
        mask = err < inlier_threshold_px
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 4:
        raise EstimationFailureError("no homography with at least 4 inliers")
    inliers = np.nonzero(best_mask)[0]
    refined = dlt_homography(src[inliers], dst[inliers])
    refined.inliers = inliers
    return refined


def write_homographies_csv(path, homographies) -> None:
    """One row of 9 row-major matrix entries per homography."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"h{r}{c}" for r in range(3) for c in range(3)])
        for h in homographies:
            writer.writerow([repr(float(v)) for v in h.matrix.ravel()])
