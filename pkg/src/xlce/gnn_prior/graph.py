"""Graph attributes extracted from the Gaussian posterior.

The posterior precision matrix V couples coefficients pairwise, so its
entries define an undirected dependency graph: node n carries the real
part of mu^H v_n (the self-potential statistic), the diagonal precision
v_nn, and the two scalar hyperparameters; edge (n, k) carries Re(v_nk).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sbl import PosteriorState


@dataclass(frozen=True)
class MrfHyper:
    """Self- and pair-potential strengths of the dependency field."""

    alpha: float = 0.1
    beta: float = 0.5


@dataclass
class GraphAttributes:
    """Node attributes, dense edge attributes and the retained-edge mask."""

    node_attrs: np.ndarray  # (n, 4) float
    edge_attrs: np.ndarray  # (n, n, 3) float
    edge_mask: np.ndarray  # (n, n) bool, False on the diagonal

    @property
    def n_nodes(self) -> int:
        return self.node_attrs.shape[0]


def full_edge_mask(n: int) -> np.ndarray:
    """All off-diagonal pairs retained."""
    return ~np.eye(n, dtype=bool)


def block_edge_mask(n: int, block: int) -> np.ndarray:
    """Within-block pairs retained (the pattern of a block-diagonal V)."""
    if n % block != 0:
        raise ValueError(f"block size {block} does not divide {n}")
    mask = np.zeros((n, n), dtype=bool)
    for lo in range(0, n, block):
        mask[lo : lo + block, lo : lo + block] = True
    np.fill_diagonal(mask, False)
    return mask


def topk_edge_mask(v: np.ndarray, k_edges: int) -> np.ndarray:
    """Keep each node's k strongest neighbors by |v_nk|, symmetrized by union.

    Ties are broken toward lower column index so the selection is
    deterministic.
    """
    n = v.shape[0]
    if not 1 <= k_edges <= n - 1:
        raise ValueError(f"k_edges={k_edges} outside 1..{n - 1}")
    strength = np.abs(v).copy()
    np.fill_diagonal(strength, -np.inf)
    # argsort is stable, so equal strengths keep index order after negation
    order = np.argsort(-strength, axis=1, kind="stable")
    mask = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k_edges)
    mask[rows, order[:, :k_edges].ravel()] = True
    mask |= mask.T
    np.fill_diagonal(mask, False)
    return mask


def graph_attributes(
    post: PosteriorState,
    hyper: MrfHyper,
    zeta: float,
    k_edges: int | None = None,
    edge_mask: np.ndarray | None = None,
) -> GraphAttributes:
    """Build node/edge attributes from one observation step.

    ``k_edges=None`` keeps the full graph; otherwise each node retains its
    ``k_edges`` strongest neighbors (union-symmetrized). A precomputed
    ``edge_mask`` overrides both, which lets callers pin a fixed topology
    such as the block pattern of a Kronecker-structured problem.
    """
    v = post.v
    n = v.shape[0]
    vmu = v @ post.mu
    node_attrs = np.empty((n, 4))
    # mu^H v_n is the conjugate of (V mu)_n for Hermitian V, so the real
    # parts coincide
    node_attrs[:, 0] = np.real(vmu)
    node_attrs[:, 1] = np.real(np.diag(v))
    node_attrs[:, 2] = hyper.alpha
    node_attrs[:, 3] = zeta

    if edge_mask is not None:
        mask = edge_mask.copy()
        np.fill_diagonal(mask, False)
    elif k_edges is None or k_edges >= n - 1:
        mask = full_edge_mask(n)
    else:
        mask = topk_edge_mask(v, k_edges)

    edge_attrs = np.empty((n, n, 3))
    edge_attrs[:, :, 0] = np.real(v)
    edge_attrs[:, :, 1] = hyper.beta
    edge_attrs[:, :, 2] = zeta
    return GraphAttributes(node_attrs=node_attrs, edge_attrs=edge_attrs, edge_mask=mask)
