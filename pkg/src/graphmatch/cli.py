"""Command-line interface.

Commands: synth, train, match, eval, mosaic, ablate. All randomness is
controlled by --seed (or the seed in the training config).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import TrainConfig
from .data import load_dataset, load_frames
from .homography import ransac_homography, write_homographies_csv
from .imaging import read_image, to_grayscale, write_image
from .matching import match_nn, write_matches_csv
from .model import MatcherModel
from .mosaic import composite_panorama
from .pipeline import (ABLATION_AXES, describe_image, evaluate_matching,
                       preprocess_frame, run_ablation, train)
from .synth import generate_pan_sequence, generate_synthetic_frame


def _cmd_synth(args) -> int:
    out = Path(args.out)
    for s in range(args.sequences):
        seq_dir = out / f"seq_{s:03d}"
        seq_dir.mkdir(parents=True, exist_ok=True)
        if args.mode == "pan":
            frames, _ = generate_pan_sequence(args.seed + s, args.frames, (args.size, args.size),
                                              vessel_density=args.vessel_density)
        else:
            frames = [generate_synthetic_frame(args.seed + s * 100_000 + i, (args.size, args.size),
                                               args.vessel_density)
                      for i in range(args.frames)]
        for i, frame in enumerate(frames):
            write_image(seq_dir / f"frame_{i:05d}.png", frame)
    print(f"wrote {args.sequences} sequence(s) x {args.frames} frames under {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    dataset = load_dataset(args.data, split_seed=cfg.seed)
    result = train(dataset, cfg, args.run_dir)
    print(f"trained {result.steps} steps; final checkpoint: {result.checkpoint}")
    return 0


def _cmd_match(args) -> int:
    model = MatcherModel.from_checkpoint(args.model)
    frame_a = preprocess_frame(read_image(args.img_a))
    frame_b = preprocess_frame(read_image(args.img_b))
    kps_a, desc_a = describe_image(model, frame_a, args.max_keypoints)
    kps_b, desc_b = describe_image(model, frame_b, args.max_keypoints)
    if len(kps_a) < 1 or len(kps_b) < 1:
        print("not enough key-points to match", file=sys.stderr)
        return 1
    matches = match_nn(desc_a, desc_b)
    if args.threshold is not None:
        matches = matches.filtered(args.threshold)
    write_matches_csv(args.out, matches,
                      [(kp.x, kp.y) for kp in kps_a], [(kp.x, kp.y) for kp in kps_b])
    print(f"{len(matches)} matches -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = MatcherModel.from_checkpoint(args.model)
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig(patch_side=model.patch_side)
    dataset = load_dataset(args.data, split_seed=cfg.seed)
    paths = dataset.validation_frames() or dataset.train_frames()
    frames = [preprocess_frame(f) for f in load_frames(paths)]
    report = evaluate_matching(model, frames, cfg, seed=args.seed, suite=args.transform_suite,
                               max_keypoints=args.max_keypoints)
    report.write_csv(args.report)
    print(f"mean precision {report.mean_precision:.4f}, mean matching score "
          f"{report.mean_matching_score:.4f} -> {args.report}")
    return 0


def _cmd_mosaic(args) -> int:
    model = MatcherModel.from_checkpoint(args.model)
    seq_dir = Path(args.seq)
    paths = sorted(p for p in seq_dir.iterdir() if p.suffix.lower() in (".png", ".pgm"))
    if args.max_frames:
        paths = paths[: args.max_frames]
    if len(paths) < 2:
        print("mosaic needs at least two frames", file=sys.stderr)
        return 1
    raw = [to_grayscale(f) if f.ndim == 3 else f for f in load_frames(paths)]
    frames = [preprocess_frame(f) for f in raw]
    homographies = []
    for i in range(len(frames) - 1):
        kps_a, desc_a = describe_image(model, frames[i], args.max_keypoints)
        kps_b, desc_b = describe_image(model, frames[i + 1], args.max_keypoints)
        matches = match_nn(desc_b, desc_a)  # maps frame i+1 into frame i
        src = [(kps_b[j].x, kps_b[j].y) for j in matches.indices_a]
        dst = [(kps_a[j].x, kps_a[j].y) for j in matches.indices_b]
        homographies.append(ransac_homography(src, dst, iterations=args.iterations,
                                              inlier_threshold_px=args.threshold, seed=args.seed + i))
    result = composite_panorama(raw if args.raw else frames, homographies)
    write_image(args.out, result.image)
    if args.homography_csv:
        write_homographies_csv(args.homography_csv, homographies)
    print(f"panorama {result.image.shape[1]}x{result.image.shape[0]} "
          f"(seam rms {result.seam_rms:.4f}) -> {args.out}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig.toy()
    if args.seed is not None:
        cfg.seed = args.seed
    dataset = load_dataset(args.data, split_seed=cfg.seed)
    values = [float(v) for v in args.values.split(",")] if args.values else None
    table = run_ablation(args.axis, values, dataset, cfg, args.out, args.run_root)
    for row in table:
        print(",".join(str(c) for c in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphmatch",
                                     description="Self-supervised key-point matching and mosaicing")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic sequences")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences", type=int, default=5)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--mode", choices=("independent", "pan"), default="independent")
    p.add_argument("--vessel-density", type=float, default=1.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--run-dir", default="runs/train")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("match", help="match two images")
    p.add_argument("--model", required=True)
    p.add_argument("--img-a", required=True)
    p.add_argument("--img-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-keypoints", type=int, default=512)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("eval", help="evaluate matching on warped validation frames")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config")
    p.add_argument("--transform-suite", choices=("individual", "viewpoint"), default="individual")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-keypoints", type=int, default=128)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mosaic", help="stitch a sequence into a panorama")
    p.add_argument("--model", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--homography-csv")
    p.add_argument("--max-keypoints", type=int, default=256)
    p.add_argument("--max-frames", type=int, default=0)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true", help="composite raw frames instead of CLAHE output")
    p.set_defaults(func=_cmd_mosaic)

    p = sub.add_parser("ablate", help="temperature / mini-batch ablation sweep")
    p.add_argument("--axis", choices=tuple(ABLATION_AXES), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--values", help="comma-separated override of the swept values")
    p.add_argument("--out", default="ablation.csv")
    p.add_argument("--run-root", default="runs/ablation")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
