"""Cross-view contrastive objective over corresponding graph nodes.

The per-anchor loss compares the anchor against its positive (the same
node in the other view) in the numerator, and against sampled intra-view
and inter-view negatives in the denominator; the positive term itself is
NOT part of the denominator (a config flag restores the conventional
form for ablation). Similarities are cosines of two-layer-MLP
projections, scaled by the temperature tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DegenerateSimilarityError, ParameterError
from .nn import TwoLayerMlp
from .tensor import Tensor

FEATURE_DIM = 128


@dataclass
class ContrastiveConfig:
    tau: float = 0.08
    negatives_per_anchor: int = 10
    include_positive_in_denominator: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        if self.negatives_per_anchor < 1:
            raise ParameterError("negatives_per_anchor must be >= 1")


class ProjectionHead(TwoLayerMlp):
    """Two-layer non-linear projection applied before cosine similarity."""

    def __init__(self, rng=None, *, seed: int = 0, dtype=np.float32, dim: int = FEATURE_DIM):
        if rng is None:
            rng = np.random.default_rng(seed)
        super().__init__(dim, dim, dim, rng, dtype)


def _rows_normalized(projected: Tensor) -> Tensor:
    norm2 = (projected * projected).sum(axis=1, keepdims=True)
    if np.any(norm2.data <= 0.0):
        raise DegenerateSimilarityError("projected vector has zero norm")
    return projected / norm2.sqrt()


def _project(head: ProjectionHead, rows: Tensor) -> Tensor:
    return _rows_normalized(head(rows))


def similarity(u, v, head: ProjectionHead) -> Tensor:
    """Cosine similarity of the projections of two 128-D vectors (scalar tensor)."""
    u = u if isinstance(u, Tensor) else Tensor(u)
    v = v if isinstance(v, Tensor) else Tensor(v)
    pu = _project(head, u.reshape(1, -1))
    pv = _project(head, v.reshape(1, -1))
    return (pu * pv).sum()


def node_loss(anchor, positive, intra_negatives, inter_negatives, head: ProjectionHead,
              cfg: ContrastiveConfig) -> Tensor:
    """Single-anchor contrastive loss (scalar tensor).

    anchor/positive are 128-D vectors; each negative set is an (n, 128)
    stack with n >= 1. Negatives here are used as given (sampling happens
    in total_loss).
    """
    intra = intra_negatives if isinstance(intra_negatives, Tensor) else Tensor(intra_negatives)
    inter = inter_negatives if isinstance(inter_negatives, Tensor) else Tensor(inter_negatives)
    if intra.data.ndim != 2 or inter.data.ndim != 2 or len(intra.data) < 1 or len(inter.data) < 1:
        raise ContractError("node_loss needs at least one intra- and one inter-view negative")
    anchor = anchor if isinstance(anchor, Tensor) else Tensor(anchor)
    positive = positive if isinstance(positive, Tensor) else Tensor(positive)

    pa = _project(head, anchor.reshape(1, -1))
    ppos = _project(head, positive.reshape(1, -1))
    pintra = _project(head, intra)
    pinter = _project(head, inter)

    inv_tau = 1.0 / cfg.tau
    pos_sim = (pa * ppos).sum()
    intra_sims = T.matmul(pa, pintra.T)
    inter_sims = T.matmul(pa, pinter.T)
    denom = (intra_sims * inv_tau).exp().sum() + (inter_sims * inv_tau).exp().sum()
    if cfg.include_positive_in_denominator:
        denom = denom + (pos_sim * inv_tau).exp()
    return denom.log() - pos_sim * inv_tau


def sample_negative_indices(n_nodes: int, n_negatives: int, rng: np.random.Generator) -> np.ndarray:
    """(N, min(n_negatives, N-1)) indices, row i sampled from {0..N-1} minus {i}."""
    if n_nodes < 2:
        raise ContractError("negative sampling needs at least 2 nodes")
    take = min(n_negatives, n_nodes - 1)
    out = np.empty((n_nodes, take), dtype=np.intp)
    for i in range(n_nodes):
        pool = rng.choice(n_nodes - 1, size=take, replace=False)
        out[i] = pool + (pool >= i)  # skip the anchor index
    return out


def total_loss(
    view,
    augmented_view,
    correspondence,
    head: ProjectionHead,
    cfg: ContrastiveConfig,
    rng: np.random.Generator | None = None,
    negative_indices=None,
) -> Tensor:
    """Symmetric contrastive loss averaged over all corresponding node pairs.

    ``view`` / ``augmented_view`` carry per-node global features (KeypointGraph
    or a raw (N,128) tensor); ``correspondence`` is an (M,2) index array pairing
    them one-to-one. Only corresponding (surviving) nodes participate; per
    anchor, negatives are drawn uniformly without replacement from each of the
    intra- and inter-view pools (all of a pool when it is smaller).

    ``negative_indices`` optionally pins the sampled indices as a 4-tuple
    (intra_a, inter_a, intra_b, inter_b), each (M, n) into the aligned arrays.
    """
    g_a = view.global_features if hasattr(view, "global_features") else view
    g_b = augmented_view.global_features if hasattr(augmented_view, "global_features") else augmented_view
    if g_a is None or g_b is None:
        raise ContractError("total_loss needs global features on both views (run the GNN)")
    g_a = g_a if isinstance(g_a, Tensor) else Tensor(g_a)
    g_b = g_b if isinstance(g_b, Tensor) else Tensor(g_b)

    pairs = np.asarray(correspondence, dtype=np.intp).reshape(-1, 2)
    m = len(pairs)
    if m < 2:
        raise ContractError("total_loss needs at least 2 corresponding nodes")

    a = T.take_rows(g_a, pairs[:, 0])
    b = T.take_rows(g_b, pairs[:, 1])
    pa = _project(head, a)
    pb = _project(head, b)

    if negative_indices is None:
        if rng is None:
            rng = np.random.default_rng()
        intra_a = sample_negative_indices(m, cfg.negatives_per_anchor, rng)
        inter_a = sample_negative_indices(m, cfg.negatives_per_anchor, rng)
        intra_b = sample_negative_indices(m, cfg.negatives_per_anchor, rng)
        inter_b = sample_negative_indices(m, cfg.negatives_per_anchor, rng)
    else:
        intra_a, inter_a, intra_b, inter_b = (np.asarray(ix, dtype=np.intp) for ix in negative_indices)

    sim_ab = T.matmul(pa, pb.T)   # anchor in A vs nodes in B
    sim_aa = T.matmul(pa, pa.T)
    sim_bb = T.matmul(pb, pb.T)
    sim_ba = sim_ab.T

    diag = np.arange(m)[:, None]
    inv_tau = 1.0 / cfg.tau

    def direction_loss(sim_pos, sim_intra, sim_inter, idx_intra, idx_inter):
        pos = T.take_along_rows(sim_pos, diag).reshape(m)
        neg_intra = T.take_along_rows(sim_intra, idx_intra)
        neg_inter = T.take_along_rows(sim_inter, idx_inter)
        denom = (neg_intra * inv_tau).exp().sum(axis=1) + (neg_inter * inv_tau).exp().sum(axis=1)
        if cfg.include_positive_in_denominator:
            denom = denom + (pos * inv_tau).exp()
        return denom.log() - pos * inv_tau

    loss_a = direction_loss(sim_ab, sim_aa, sim_ab, intra_a, inter_a)
    loss_b = direction_loss(sim_ba, sim_bb, sim_ba, intra_b, inter_b)
    return (loss_a.sum() + loss_b.sum()) * (1.0 / (2.0 * m))
