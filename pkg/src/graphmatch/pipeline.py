"""View construction, the training loop, matching evaluation, and ablations."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .contrastive import ContrastiveConfig, total_loss
from .data import Dataset, load_frames
from .detector import Keypoint, detect_corners, ground_truth_matches, keypoint_positions
from .errors import ContractError, TrainingDivergedError
from .gnn import KeypointGraph
from .imaging import (AffineTransform, clahe, extract_patch, image_center,
                      patch_fits, to_grayscale, warp_affine)
from .matching import MatchSet, match_nn, matching_score, precision_recall
from .model import MatcherModel
from .optim import Adam

log = logging.getLogger(__name__)


def preprocess_frame(img: np.ndarray, tiles=(8, 8), clip_limit: float = 2.0) -> np.ndarray:
    """Grayscale conversion (if needed) followed by CLAHE."""
    if img.ndim == 3:
        img = to_grayscale(img)
    return clahe(img, tiles=tiles, clip_limit=clip_limit)


def sample_augmentation(rng: np.random.Generator, image_size, cfg: TrainConfig) -> AffineTransform:
    """One transform drawn uniformly from a family, then from its value set.

    Families: rotation about the image center (with random sign), per-axis
    translation (random magnitude and sign per axis), or scaling about the
    image center.
    """
    w, h = image_size
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    family = rng.integers(0, 3)
    if family == 0:
        angle = float(rng.choice(cfg.rotation_degrees)) * (1.0 if rng.integers(0, 2) else -1.0)
        return AffineTransform.rotation(angle, center)
    if family == 1:
        dx = float(rng.choice(cfg.translation_pixels)) * (1.0 if rng.integers(0, 2) else -1.0)
        dy = float(rng.choice(cfg.translation_pixels)) * (1.0 if rng.integers(0, 2) else -1.0)
        return AffineTransform.translation(dx, dy)
    factor = float(rng.choice(cfg.scale_factors))
    return AffineTransform.scaling(factor, center)


def sample_viewpoint_transform(rng: np.random.Generator, image_size, cfg: TrainConfig) -> AffineTransform:
    """Composed scale/rotation/translation; used only by evaluation harnesses."""
    w, h = image_size
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    scale = AffineTransform.scaling(float(rng.choice(cfg.scale_factors)), center)
    angle = float(rng.choice(cfg.rotation_degrees)) * (1.0 if rng.integers(0, 2) else -1.0)
    rotation = AffineTransform.rotation(angle, center)
    dx = float(rng.choice(cfg.translation_pixels)) * (1.0 if rng.integers(0, 2) else -1.0)
    dy = float(rng.choice(cfg.translation_pixels)) * (1.0 if rng.integers(0, 2) else -1.0)
    translation = AffineTransform.translation(dx, dy)
    return translation.compose(rotation.compose(scale))


def build_graph_views(frame: np.ndarray, transform: AffineTransform, cfg: TrainConfig,
                      keypoints: list[Keypoint] | None = None):
    """(view, augmented view, correspondence) for one preprocessed frame.

    The augmented view shares the detected key-points, at transformed
    positions, with patches re-extracted from the warped frame. Nodes whose
    patch leaves either image are dropped from both views; the returned
    correspondence is the identity over survivors. Returns None when fewer
    than 2 nodes survive.
    """
    h, w = frame.shape
    side = cfg.patch_side
    if keypoints is None:
        keypoints = detect_corners(frame, cfg.max_keypoints, border_margin=side // 2)
    if not keypoints:
        return None
    warped = warp_affine(frame, transform)
    positions = keypoint_positions(keypoints)
    moved = transform.apply(positions)

    kept_pos, kept_moved, patches_a, patches_b = [], [], [], []
    for p, q in zip(positions, moved):
        if not (patch_fits((w, h), p, side) and patch_fits((w, h), q, side)):
            continue
        pa = extract_patch(frame, p, side)
        pb = extract_patch(warped, q, side)
        kept_pos.append(p)
        kept_moved.append(q)
        patches_a.append(pa)
        patches_b.append(pb)
    if len(kept_pos) < 2:
        return None

    def stack(patches):
        return np.stack(patches).astype(np.float32)[:, None, :, :]

    view = KeypointGraph(np.array(kept_pos), (w, h), stack(patches_a))
    aug_view = KeypointGraph(np.array(kept_moved), (w, h), stack(patches_b))
    pairs = np.column_stack([np.arange(len(kept_pos))] * 2)
    return view, aug_view, pairs


def _step_seed(seed: int, step: int) -> int:
    return (seed * 1_000_003 + step) % (2 ** 31 - 1)


@dataclass
class TrainResult:
    model: MatcherModel
    run_dir: Path
    checkpoint: Path
    losses: list[float]
    steps: int


def train(dataset: Dataset, cfg: TrainConfig, run_dir, max_steps: int | None = None) -> TrainResult:
    """Train on the dataset's train split; logs and checkpoints under run_dir.

    One frame is one optimization step; each epoch resamples the
    augmentation per frame. All randomness derives from cfg.seed.
    """
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    cfg.to_json(run_dir / "config.json")

    paths = dataset.train_frames()
    if not paths:
        raise ContractError("train split is empty")
    frames = [preprocess_frame(f) for f in load_frames(paths)]
    frames = [f for f in frames if f is not None]
    detections = [detect_corners(f, cfg.max_keypoints, border_margin=cfg.patch_side // 2) for f in frames]

    model = MatcherModel(cfg.patch_side, seed=cfg.seed, scaled_attention=cfg.scaled_attention)
    optimizer = Adam(model.parameters(), lr=cfg.learning_rate)
    loss_cfg = ContrastiveConfig(cfg.tau, cfg.negatives_per_anchor, cfg.include_positive_in_denominator)

    losses: list[float] = []
    step = 0
    started = time.time()
    log_path = run_dir / "log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "frame", "n_nodes", "loss", "step_seed"])
        done = False
        for epoch in range(cfg.epochs):
            if done:
                break
            for frame_idx, frame in enumerate(frames):
                seed = _step_seed(cfg.seed, step)
                rng = np.random.default_rng(seed)
                transform = sample_augmentation(rng, (frame.shape[1], frame.shape[0]), cfg)
                views = build_graph_views(frame, transform, cfg, keypoints=detections[frame_idx])
                if views is None:
                    log.warning("epoch %d frame %d: fewer than 2 surviving nodes, skipped", epoch, frame_idx)
                    continue
                view, aug_view, pairs = views
                model.encode_graph(view)
                model.encode_graph(aug_view)
                loss = total_loss(view, aug_view, pairs, model.head, loss_cfg, rng=rng)
                if loss.has_bad_values():
                    dump = {
                        "step": step, "epoch": epoch, "frame": frame_idx,
                        "n_nodes": int(len(pairs)), "loss": float(loss.data),
                        "step_seed": seed, "config": json.loads((run_dir / "config.json").read_text()),
                    }
                    (run_dir / "diagnostic.json").write_text(json.dumps(dump, indent=2))
                    raise TrainingDivergedError(f"non-finite loss at step {step}; see {run_dir / 'diagnostic.json'}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                step += 1
                losses.append(float(loss.data))
                writer.writerow([step, epoch, frame_idx, len(pairs), repr(float(loss.data)), seed])
                if step % cfg.checkpoint_interval == 0:
                    model.save(run_dir / "checkpoints" / f"step_{step}.bin")
                if max_steps is not None and step >= max_steps:
                    done = True
                    break

    final = run_dir / "checkpoints" / f"step_{step}.bin"
    model.save(final)
    log.info("trained %d steps in %.1fs (final loss %.4f)", step, time.time() - started, losses[-1] if losses else float("nan"))
    return TrainResult(model, run_dir, final, losses, step)


# -- evaluation -----------------------------------------------------------------


def describe_image(model: MatcherModel, frame: np.ndarray, max_keypoints: int = 512):
    """Detect, patch, and describe one preprocessed frame.

    Returns (keypoints, descriptors) with descriptors as an (N,128) array.
    """
    side = model.patch_side
    keypoints = detect_corners(frame, max_keypoints, border_margin=side // 2)
    kept, patches = [], []
    h, w = frame.shape
    for kp in keypoints:
        patch = extract_patch(frame, (kp.x, kp.y), side)
        if patch is not None:
            kept.append(kp)
            patches.append(patch)
    if not kept:
        return [], np.zeros((0, 128), dtype=np.float32)
    graph = KeypointGraph(keypoint_positions(kept), (w, h), np.stack(patches)[:, None, :, :])
    return kept, model.describe(graph)


@dataclass
class EvalRow:
    frame: int
    transform: str
    n_keypoints_a: int
    n_keypoints_b: int
    n_covisible: int
    n_matches: int
    n_correct: int
    precision: float | None
    recall: float | None
    matching_score: float | None


@dataclass
class EvalReport:
    rows: list[EvalRow]
    mean_precision: float
    mean_matching_score: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "frame", "transform", "n_keypoints_a", "n_keypoints_b", "n_covisible",
                "n_matches", "n_correct", "precision", "recall", "matching_score",
            ])
            for r in self.rows:
                writer.writerow([
                    r.frame, r.transform, r.n_keypoints_a, r.n_keypoints_b, r.n_covisible,
                    r.n_matches, r.n_correct,
                    "" if r.precision is None else repr(r.precision),
                    "" if r.recall is None else repr(r.recall),
                    "" if r.matching_score is None else repr(r.matching_score),
                ])
            writer.writerow(["mean", "", "", "", "", "", "",
                             repr(self.mean_precision), "", repr(self.mean_matching_score)])


def _describe_transform(t: AffineTransform) -> str:
    return "affine[" + ";".join(f"{v:.4g}" for v in t.matrix.ravel()) + "]"


def evaluate_matching(
    model: MatcherModel,
    frames,
    cfg: TrainConfig,
    *,
    seed: int = 1,
    suite: str = "individual",
    pe_threshold: float = 5.0,
    max_keypoints: int = 128,
    restrict_to_covisible: bool = True,
) -> EvalReport:
    """Warp each frame by a sampled transform, re-detect, describe, NN-match.

    Correctness uses the exactly-known transform at the given projection-error
    bound. With restrict_to_covisible, anchors without any ground-truth
    counterpart are excluded from precision (descriptor-focused protocol);
    matching score always uses the full detection counts.
    """
    if suite not in ("individual", "viewpoint"):
        raise ContractError(f"unknown transform suite {suite!r}")
    rows: list[EvalRow] = []
    for idx, frame in enumerate(frames):
        rng = np.random.default_rng([seed, idx])
        size = (frame.shape[1], frame.shape[0])
        if suite == "individual":
            transform = sample_augmentation(rng, size, cfg)
        else:
            transform = sample_viewpoint_transform(rng, size, cfg)
        warped = warp_affine(frame, transform)
        kps_a, desc_a = describe_image(model, frame, max_keypoints)
        kps_b, desc_b = describe_image(model, warped, max_keypoints)
        if len(kps_a) < 2 or len(kps_b) < 2:
            log.warning("eval frame %d: too few key-points, skipped", idx)
            continue
        gt = ground_truth_matches(kps_a, kps_b, transform, pe_threshold)
        n_covisible = len(gt)
        if restrict_to_covisible:
            anchors = sorted(gt)
            if len(anchors) < 1:
                rows.append(EvalRow(idx, _describe_transform(transform), len(kps_a), len(kps_b),
                                    0, 0, 0, None, None, None))
                continue
            sub_gt = {new_i: gt[i] for new_i, i in enumerate(anchors)}
            matches = match_nn(desc_a[anchors], desc_b)
            precision, recall, _ = precision_recall(matches, sub_gt)
        else:
            matches = match_nn(desc_a, desc_b)
            precision, recall, _ = precision_recall(matches, gt)
        score = matching_score(matches, len(kps_a), len(kps_b))
        rows.append(EvalRow(
            idx, _describe_transform(transform), len(kps_a), len(kps_b), n_covisible,
            len(matches), int(matches.correct.sum()), precision, recall, score,
        ))
    defined = [r.precision for r in rows if r.precision is not None]
    scores = [r.matching_score for r in rows if r.matching_score is not None]
    return EvalReport(
        rows,
        float(np.mean(defined)) if defined else float("nan"),
        float(np.mean(scores)) if scores else float("nan"),
    )


# -- ablations ---------------------------------------------------------------------


ABLATION_AXES = {
    "tau": ((0.06, 0.08, 0.1, 0.12), "tau"),
    "minibatch": ((5, 10, 15, 20), "negatives_per_anchor"),
}


def run_ablation(axis: str, values, dataset: Dataset, cfg: TrainConfig, out_csv, run_root,
                 eval_seed: int = 1, eval_max_keypoints: int = 128) -> list[list]:
    """Retrain per value with a shared seed and report precision/matching score.

    Output CSV layout: header row `axis,v1,...`, one row per metric.
    """
    if axis not in ABLATION_AXES:
        raise ContractError(f"unknown ablation axis {axis!r} (expected tau|minibatch)")
    defaults, field = ABLATION_AXES[axis]
    values = list(values) if values is not None else list(defaults)
    val_paths = dataset.validation_frames()
    if not val_paths:
        raise ContractError("ablation needs a non-empty validation split")
    val_frames = [preprocess_frame(f) for f in load_frames(val_paths)]

    precisions, scores = [], []
    run_root = Path(run_root)
    for value in values:
        sub_cfg = replace(cfg, **{field: type(getattr(cfg, field))(value)})
        result = train(dataset, sub_cfg, run_root / f"{axis}_{value}")
        report = evaluate_matching(result.model, val_frames, sub_cfg,
                                   seed=eval_seed, max_keypoints=eval_max_keypoints)
        precisions.append(report.mean_precision)
        scores.append(report.mean_matching_score)

    table = [
        [axis] + [str(v) for v in values],
        ["precision"] + [repr(p) for p in precisions],
        ["matching_score"] + [repr(s) for s in scores],
    ]
    with open(out_csv, "w", newline="") as fh:
        csv.writer(fh).writerows(table)
    return table
