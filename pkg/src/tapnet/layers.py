"""Graph layers: GCN, topology-aware pooling (local/global voting,
connectivity bias, rank-and-select), readout, and the MLP head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor


def add_self_loops(adjacency: np.ndarray) -> np.ndarray:
    return adjacency + np.eye(adjacency.shape[0])


def sym_normalized(adjacency: np.ndarray) -> np.ndarray:
    """D^{-1/2} (A + I) D^{-1/2} with D the self-looped degree."""
    a_hat = add_self_loops(adjacency)
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def row_normalized(adjacency: np.ndarray) -> np.ndarray:
    """D^{-1} (A + I) with D the self-looped degree."""
    a_hat = add_self_loops(adjacency)
    return a_hat / a_hat.sum(axis=1, keepdims=True)


def _activate(x: Tensor, kind: str, slope: float = 0.01) -> Tensor:
    if kind == "leaky_relu":
        return ad.leaky_relu(x, slope)
    if kind == "relu":
        return ad.relu(x)
    if kind == "elu":
        return ad.elu(x)
    if kind == "linear":
        return x
    raise ValueError(f"unknown activation: {kind!r}")


@dataclass
class GcnParams:
    weight: Parameter
    activation: str = "leaky_relu"
    slope: float = 0.01


@dataclass
class TapLayerParams:
    w_r: Parameter | None  # d x d similarity transform; None disables it
    p: Parameter  # d x 1 projection vector
    lam: float  # connectivity-term weight
    rate: float  # node retention fraction in (0, 1]

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"rate must be in (0, 1], got {self.rate}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


@dataclass
class Scores:
    y_local: Tensor
    y_global: Tensor
    y: Tensor
    s: Tensor


@dataclass
class PoolResult:
    idx: list[int]
    features: Tensor  # k x d
    adjacency: np.ndarray  # k x k induced subgraph
    similarity: Tensor | None  # n x n R, pre-masking, for the auxiliary loss
    scores: Scores


def gcn_forward(tape: Tape, params: GcnParams, adjacency: np.ndarray, h: Tensor) -> Tensor:
    """act( D^{-1/2} (A+I) D^{-1/2} H W )"""
    prop = tape.constant(sym_normalized(adjacency))
    w = tape.watch(params.weight)
    out = ad.matmul(ad.matmul(prop, h), w)
    return _activate(out, params.activation, params.slope)


def local_voting(
    tape: Tape, adjacency: np.ndarray, h: Tensor, w_r: Tensor | None = None
) -> tuple[Tensor, Tensor]:
    """Neighborhood-similarity score per node.

    R = H H^T (or H W_r H^T), masked by the row-normalized self-looped
    adjacency, row-averaged and softmax-normalized. Returns (y_local, R)
    with R unmasked for the auxiliary link loss.
    """
    if w_r is not None:
        r = ad.matmul(ad.matmul(h, w_r), ad.transpose(h))
    else:
        r = ad.matmul(h, ad.transpose(h))
    mask = tape.constant(row_normalized(adjacency))
    r_masked = ad.mul(r, mask)
    y_local = ad.softmax_vec(ad.row_mean_scaled(r_masked))
    return y_local, r


def global_voting(tape: Tape, adjacency: np.ndarray, h: Tensor, p: Tensor) -> Tensor:
    """Projection score of neighborhood-aggregated features."""
    agg = ad.matmul(tape.constant(row_normalized(adjacency)), h)
    return ad.softmax_vec(ad.matmul(agg, p))


def retention_count(rate: float, n: int) -> int:
    return max(1, int(np.ceil(rate * n)))


def rank_nodes(scores: np.ndarray, k: int) -> list[int]:
    """Indexes of the k largest scores, descending score, ties by
    ascending node index."""
    n = len(scores)
    order = np.lexsort((np.arange(n), -scores))
    return [int(i) for i in order[:k]]


def combine_and_rank(
    tape: Tape,
    y_local: Tensor,
    y_global: Tensor,
    adjacency: np.ndarray,
    lam: float,
    rate: float,
) -> tuple[Tensor, Tensor, list[int]]:
    """y = y_local + y_global; s_i = y_i + lam * degree_i / n; select top-k.

    Returns (y, s, idx). Degrees come from the layer's input adjacency
    without self-loops.
    """
    n = adjacency.shape[0]
    y = ad.add(y_local, y_global)
    if lam != 0.0:
        degrees = adjacency.sum(axis=1, keepdims=True)
        s = ad.add(y, tape.constant(lam * degrees / n))
    else:
        s = y
    idx = rank_nodes(s.value[:, 0], retention_count(rate, n))
    return y, s, idx


def induced_subgraph(
    adjacency: np.ndarray, h: Tensor, idx: list[int]
) -> tuple[np.ndarray, Tensor]:
    """(A[idx, idx], H[idx, :]) for distinct in-range indexes."""
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate indexes in {idx}")
    n = adjacency.shape[0]
    for i in idx:
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range [0, {n})")
    sub_adj = adjacency[np.ix_(idx, idx)].copy()
    return sub_adj, ad.row_gather(h, idx)


def tap_forward(
    tape: Tape,
    params: TapLayerParams,
    adjacency: np.ndarray,
    h: Tensor,
    use_lv: bool = True,
    use_gv: bool = True,
    use_gct: bool = True,
    gating: bool = True,
    aggregate_before_projection: bool = True,
) -> PoolResult:
    """One pooling step: vote, rank, select the induced subgraph.

    Disabled voting terms contribute a zero vector. With gating on, each
    selected feature row is multiplied by its ranking score so the voting
    parameters receive gradients from the task loss; gating off slices
    rows unchanged. aggregate_before_projection=False drops the structure
    aggregation in the global vote (the plain top-k projection baseline).
    """
    if not (use_lv or use_gv):
        raise ValueError("at least one of the voting terms must be enabled")
    n = adjacency.shape[0]
    similarity = None
    if use_lv:
        w_r_t = tape.watch(params.w_r) if params.w_r is not None else None
        y_local, similarity = local_voting(tape, adjacency, h, w_r_t)
    else:
        y_local = tape.constant(np.zeros((n, 1)))
    if use_gv:
        p_t = tape.watch(params.p)
        if aggregate_before_projection:
            y_global = global_voting(tape, adjacency, h, p_t)
        else:
            y_global = ad.softmax_vec(ad.matmul(h, p_t))
    else:
        y_global = tape.constant(np.zeros((n, 1)))
    lam = params.lam if use_gct else 0.0
    y, s, idx = combine_and_rank(tape, y_local, y_global, adjacency, lam, params.rate)
    sub_adj, sub_h = induced_subgraph(adjacency, h, idx)
    if gating:
        sub_h = ad.row_scale(sub_h, ad.row_gather(s, idx))
    return PoolResult(
        idx=idx,
        features=sub_h,
        adjacency=sub_adj,
        similarity=similarity,
        scores=Scores(y_local=y_local, y_global=y_global, y=y, s=s),
    )


def readout(stage_outputs: list[Tensor]) -> Tensor:
    """Concatenate col-max, col-mean, and col-sum of every stage."""
    if not stage_outputs:
        raise ValueError("readout needs at least one stage")
    pieces = []
    for h in stage_outputs:
        pieces.extend([ad.col_max(h), ad.col_mean(h), ad.col_sum(h)])
    return ad.concat_cols(pieces)


@dataclass
class MlpParams:
    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter
    activation: str = "relu"
    dropout_keep: float = 0.8


def mlp_forward(
    tape: Tape,
    params: MlpParams,
    x: Tensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """dropout -> linear -> activation -> dropout -> linear."""
    x = ad.dropout(x, params.dropout_keep, rng, training)
    hid = ad.add(ad.matmul(x, tape.watch(params.w1)), tape.watch(params.b1))
    hid = _activate(hid, params.activation)
    hid = ad.dropout(hid, params.dropout_keep, rng, training)
    return ad.add(ad.matmul(hid, tape.watch(params.w2)), tape.watch(params.b2))
