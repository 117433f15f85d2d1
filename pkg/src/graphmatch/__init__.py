"""Self-supervised key-point matching: patch CNN + attention GNN descriptors,
cross-view contrastive training, NN/NNT matching, and RANSAC mosaicing."""

from .config import TrainConfig
from .contrastive import ContrastiveConfig, ProjectionHead, node_loss, similarity, total_loss
from .detector import Keypoint, detect_corners, ground_truth_matches
from .gnn import GraphAttention, KeypointGraph
from .homography import Homography, dlt_homography, ransac_homography
from .imaging import AffineTransform, clahe, extract_patch, motion_blur, to_grayscale, transform_point, warp_affine
from .matching import MatchSet, curve_sweep, match_nn, match_nnt, matching_score, precision_recall
from .model import MatcherModel
from .mosaic import composite_panorama
from .optim import Adam
from .cnn import PatchCnn, init_cnn
from .pipeline import build_graph_views, evaluate_matching, run_ablation, sample_augmentation, train
from .synth import generate_pan_sequence, generate_synthetic_frame
from .tensor import Tensor, no_grad

__all__ = [
    "Adam", "AffineTransform", "ContrastiveConfig", "GraphAttention", "Homography",
    "Keypoint", "KeypointGraph", "MatchSet", "MatcherModel", "PatchCnn", "ProjectionHead",
    "Tensor", "TrainConfig", "build_graph_views", "clahe", "composite_panorama",
    "curve_sweep", "detect_corners", "dlt_homography", "evaluate_matching", "extract_patch",
    "generate_pan_sequence", "generate_synthetic_frame", "ground_truth_matches", "init_cnn",
    "match_nn", "match_nnt", "matching_score", "motion_blur", "no_grad", "node_loss",
    "precision_recall", "ransac_homography", "run_ablation", "sample_augmentation",
    "similarity", "to_grayscale", "total_loss", "train", "transform_point", "warp_affine",
]

__version__ = "0.1.0"
