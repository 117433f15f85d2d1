"""Full matcher model: patch CNN + graph attention + projection head."""

from __future__ import annotations

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .cnn import PatchCnn
from .contrastive import ProjectionHead
from .errors import CheckpointError, ContractError
from .gnn import GraphAttention, KeypointGraph
from .nn import Module, load_state
from .tensor import Tensor, no_grad


class MatcherModel(Module):
    def __init__(self, patch_side: int = 128, *, seed: int = 0, dtype=np.float32, scaled_attention: bool = True):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cnn = PatchCnn(patch_side, rng=rng, dtype=dtype)
        self.gnn = GraphAttention(rng=rng, dtype=dtype, scaled=scaled_attention)
        self.head = ProjectionHead(rng, dtype=dtype)
        self._dtype = dtype

    @property
    def patch_side(self) -> int:
        return self.cnn.patch_side

    def encode_graph(self, graph: KeypointGraph) -> KeypointGraph:
        """CNN on the patches, then the GNN stages; fills all feature fields."""
        if graph.patches is None:
            raise ContractError("graph has no patches to describe")
        graph.visual = self.cnn(Tensor(graph.patches.astype(self._dtype, copy=False)))
        return self.gnn(graph)

    def describe(self, graph: KeypointGraph) -> np.ndarray:
        """Eval-mode global features as a plain (N, 128) array (no tape)."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                self.encode_graph(graph)
        finally:
            self.train(was_training)
        return graph.global_features.data.copy()

    def save(self, path) -> None:
        save_checkpoint(path, self.named_state())

    @classmethod
    def from_checkpoint(cls, path, *, scaled_attention: bool = True) -> "MatcherModel":
        """Rebuild a model from a checkpoint; patch side is inferred from layer 7."""
        state = load_checkpoint(path)
        key = "cnn.layer7.conv.weight"
        if key not in state:
            raise CheckpointError(f"{path}: missing {key}; not a matcher checkpoint")
        final_kernel = state[key].shape[-1]
        model = cls(patch_side=16 * final_kernel, scaled_attention=scaled_attention)
        load_state(model, state)
        return model
