"""Attention GNN over the fully connected key-point graph of one image.

Three stages, each exposed separately:

  1. positional_encode - add an MLP embedding of the normalized node
     coordinates to the CNN visual feature,
  2. attention_message - single-layer scaled dot-product attention over
     all nodes (self edge included),
  3. node_update - residual MLP update of the encoded feature with the
     concatenated message, yielding the final per-node global feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError
from .nn import Module, TwoLayerMlp
from .tensor import Tensor

FEATURE_DIM = 128
POSITIONAL_HIDDEN = 32
UPDATE_HIDDEN = 256


@dataclass
class KeypointGraph:
    """One image's key-points with their evolving feature stages."""

    positions: np.ndarray                 # (N, 2) pixel coordinates (x, y)
    image_size: tuple[int, int]           # (W, H)
    patches: np.ndarray | None = None     # (N, 1, side, side)
    visual: Tensor | None = None          # CNN feature per node
    encoded: Tensor | None = None         # position-dependent feature
    message: Tensor | None = None         # attention aggregation per node
    updated: Tensor | None = None         # residual-updated feature
    global_features: Tensor | None = field(default=None)  # matching descriptor

    @property
    def node_count(self) -> int:
        return len(self.positions)


def normalize_positions(positions: np.ndarray, image_size) -> np.ndarray:
    """Map pixel coordinates to [-1, 1]^2 by the image extents."""
    w, h = image_size
    pts = np.asarray(positions, dtype=np.float64)
    sx = 2.0 / (w - 1) if w > 1 else 0.0
    sy = 2.0 / (h - 1) if h > 1 else 0.0
    out = np.empty_like(pts)
    out[:, 0] = pts[:, 0] * sx - 1.0
    out[:, 1] = pts[:, 1] * sy - 1.0
    return out


class AttentionProjections(Module):
    def __init__(self, dim, rng, dtype):
        super().__init__()
        std = np.sqrt(2.0 / dim)
        self.wq = Tensor((rng.standard_normal((dim, dim)) * std).astype(dtype), requires_grad=True)
        self.wk = Tensor((rng.standard_normal((dim, dim)) * std).astype(dtype), requires_grad=True)
        self.wv = Tensor((rng.standard_normal((dim, dim)) * std).astype(dtype), requires_grad=True)
        self.bq = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.bk = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.bv = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)


class GraphAttention(Module):
    """Positional encoder + single attention layer + residual node update."""

    def __init__(self, *, seed: int = 0, rng: np.random.Generator | None = None, dtype=np.float32,
                 scaled: bool = True):
        super().__init__()
        if rng is None:
            rng = np.random.default_rng(seed)
        self.pos_mlp = TwoLayerMlp(2, POSITIONAL_HIDDEN, FEATURE_DIM, rng, dtype)
        self.attn = AttentionProjections(FEATURE_DIM, rng, dtype)
        self.update_mlp = TwoLayerMlp(2 * FEATURE_DIM, UPDATE_HIDDEN, FEATURE_DIM, rng, dtype)
        self._scaled = scaled
        self._dtype = dtype

    def positional_encode(self, graph: KeypointGraph) -> KeypointGraph:
        """encoded = visual + MLP(normalized position)."""
        if graph.visual is None:
            raise ContractError("positional_encode needs the visual features (run the CNN first)")
        coords = Tensor(normalize_positions(graph.positions, graph.image_size).astype(self._dtype))
        graph.encoded = graph.visual + self.pos_mlp(coords)
        return graph

    def attention_message(self, graph: KeypointGraph) -> KeypointGraph:
        """Aggregate values from every node (self included) by softmax attention."""
        if graph.encoded is None:
            raise ContractError("attention_message needs encoded features (run positional_encode)")
        if graph.node_count < 1:
            raise ContractError("attention over an empty graph")
        feats = graph.encoded
        q = T.matmul(feats, self.attn.wq.T) + self.attn.bq
        k = T.matmul(feats, self.attn.wk.T) + self.attn.bk
        v = T.matmul(feats, self.attn.wv.T) + self.attn.bv
        scores = T.matmul(q, k.T)
        if self._scaled:
            scores = scores * (1.0 / np.sqrt(FEATURE_DIM))
        weights = T.softmax(scores, axis=-1)
        graph.message = T.matmul(weights, v)
        return graph

    def node_update(self, graph: KeypointGraph) -> KeypointGraph:
        """updated = encoded + MLP([encoded | message]); global feature = updated."""
        if graph.encoded is None or graph.message is None:
            raise ContractError("node_update needs encoded features and messages")
        joint = T.concat([graph.encoded, graph.message], axis=1)
        graph.updated = graph.encoded + self.update_mlp(joint)
        graph.global_features = graph.updated
        return graph

    def forward(self, graph: KeypointGraph) -> KeypointGraph:
        self.positional_encode(graph)
        self.attention_message(graph)
        self.node_update(graph)
        return graph

    __call__ = forward
