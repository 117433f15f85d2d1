"""Nearest-neighbor descriptor matching and projection-error metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class MatchSet:
    """Candidate correspondences; each source index appears at most once."""

    indices_a: np.ndarray                      # (M,) indices into descriptor list A
    indices_b: np.ndarray                      # (M,) matched indices into list B
    distances: np.ndarray                      # (M,) Euclidean feature distances
    correct: np.ndarray | None = field(default=None)  # per-pair flags once scored

    def __len__(self) -> int:
        return len(self.indices_a)

    def sorted_by_distance(self) -> "MatchSet":
        order = np.argsort(self.distances, kind="stable")
        return MatchSet(
            self.indices_a[order], self.indices_b[order], self.distances[order],
            None if self.correct is None else self.correct[order],
        )

    def filtered(self, threshold: float) -> "MatchSet":
        keep = self.distances < threshold
        return MatchSet(
            self.indices_a[keep], self.indices_b[keep], self.distances[keep],
            None if self.correct is None else self.correct[keep],
        )


def match_nn(desc_a: np.ndarray, desc_b: np.ndarray, chunk: int = 256) -> MatchSet:
    """Match every row of A to its nearest row of B by Euclidean distance.

    Ties break toward the smaller B index. Distance computation is chunked
    over A rows to bound memory.
    """
    desc_a = np.asarray(desc_a, dtype=np.float64)
    desc_b = np.asarray(desc_b, dtype=np.float64)
    if desc_a.ndim != 2 or desc_b.ndim != 2 or len(desc_a) == 0 or len(desc_b) == 0:
        raise ContractError("match_nn needs two non-empty (N,D) descriptor arrays")
    n = len(desc_a)
    best_j = np.empty(n, dtype=np.intp)
    best_d = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = desc_a[start : start + chunk]
        diff = block[:, None, :] - desc_b[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        j = d2.argmin(axis=1)
        best_j[start : start + chunk] = j
        best_d[start : start + chunk] = np.sqrt(d2[np.arange(len(block)), j])
    return MatchSet(np.arange(n, dtype=np.intp), best_j, best_d)


def match_nnt(desc_a: np.ndarray, desc_b: np.ndarray, threshold: float) -> MatchSet:
    """Nearest-neighbor matches kept only when distance < threshold."""
    if threshold < 0:
        raise ContractError("threshold must be non-negative")
    return match_nn(desc_a, desc_b).filtered(threshold)


def score_matches(matches: MatchSet, ground_truth: dict[int, int]) -> MatchSet:
    """Set the correct flag per pair: (i, j) correct iff ground_truth[i] == j."""
    flags = np.array(
        [ground_truth.get(int(i), -1) == int(j) for i, j in zip(matches.indices_a, matches.indices_b)],
        dtype=bool,
    )
    matches.correct = flags
    return matches


def precision_recall(matches: MatchSet, ground_truth: dict[int, int]):
    """(precision, recall, 1-precision); entries are None when undefined."""
    score_matches(matches, ground_truth)
    retrieved = len(matches)
    n_correct = int(matches.correct.sum()) if retrieved else 0
    precision = n_correct / retrieved if retrieved > 0 else None
    recall = n_correct / len(ground_truth) if ground_truth else None
    one_minus = None if precision is None else 1.0 - precision
    return precision, recall, one_minus


def matching_score(matches: MatchSet, n_detected_a: int, n_detected_b: int) -> float:
    """Correct matches over the smaller detection count."""
    if n_detected_a <= 0 or n_detected_b <= 0:
        raise ContractError("matching_score needs positive detection counts")
    if matches.correct is None:
        raise ContractError("matches carry no correctness flags (score against ground truth first)")
    return float(matches.correct.sum()) / min(n_detected_a, n_detected_b)


def curve_sweep(desc_a, desc_b, ground_truth: dict[int, int], thresholds) -> list[tuple[float, float, float]]:
    """(threshold, recall, 1-precision) per threshold; NaN flags undefined cells."""
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ContractError("thresholds must be sorted ascending")
    base = match_nn(desc_a, desc_b)
    rows = []
    for t in thresholds:
        subset = base.filtered(t)
        precision, recall, one_minus = precision_recall(subset, ground_truth)
        rows.append((
            float(t),
            math.nan if recall is None else recall,
            math.nan if one_minus is None else one_minus,
        ))
    return rows


# -- CSV interchange ---------------------------------------------------------------


def write_matches_csv(path, matches: MatchSet, positions_a: np.ndarray, positions_b: np.ndarray) -> None:
    """Schema: i,x_a,y_a,j,x_b,y_b,distance,correct (correct empty when unscored)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "x_a", "y_a", "j", "x_b", "y_b", "distance", "correct"])
        for idx in range(len(matches)):
            i = int(matches.indices_a[idx])
            j = int(matches.indices_b[idx])
            flag = "" if matches.correct is None else int(matches.correct[idx])
            writer.writerow([
                i, repr(float(positions_a[i][0])), repr(float(positions_a[i][1])),
                j, repr(float(positions_b[j][0])), repr(float(positions_b[j][1])),
                repr(float(matches.distances[idx])), flag,
            ])


def write_curve_csv(path, rows) -> None:
    """Schema: threshold,recall,one_minus_precision (NaN cells spelled 'nan')."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "one_minus_precision"])
        for threshold, recall, one_minus in rows:
            writer.writerow([repr(float(threshold)), repr(float(recall)), repr(float(one_minus))])
