"""Forward passes of the prior-updater network.

One update runs L rounds of message passing over the retained edges and
then reads a precision out of every node feature. The hidden GRU state
persists across the outer estimation layers; it is reset only when a new
run begins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..measurement import SparseProblem
from ..sbl import PosteriorState, PriorState, clamp_gamma
from .graph import GraphAttributes, MrfHyper, block_edge_mask, graph_attributes
from .params import GnnParams


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp may overflow to inf for very negative inputs; 1/(1+inf) = 0 is
    # exactly the saturated value we want, so silence the warning
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def edge_mlp(x: np.ndarray, params: GnnParams) -> np.ndarray:
    """Propagation MLP applied along the last axis (..., 2*n_u+3) -> (..., n_u)."""
    h1 = relu(x @ params.p_w1.T + params.p_b1)
    h2 = relu(h1 @ params.p_w2.T + params.p_b2)
    return h2 @ params.p_w3.T + params.p_b3


def readout_mlp(u: np.ndarray, params: GnnParams) -> np.ndarray:
    """Readout MLP (..., n_u) -> (...,); ReLU on hidden layers and output."""
    h1 = relu(u @ params.h_w1.T + params.h_b1)
    h2 = relu(h1 @ params.h_w2.T + params.h_b2)
    return relu(h2 @ params.h_w3.T + params.h_b3)[..., 0]


def gru_cell(g_prev: np.ndarray, x: np.ndarray, params: GnnParams) -> np.ndarray:
    """Standard 3-gate GRU step on the last axis; state size n_h1.

    Gates are ordered (reset, update, candidate) in the fused tensors.
    """
    h = params.dims.n_h1
    gi = x @ params.gru_wi.T + params.gru_bi
    gh = g_prev @ params.gru_wh.T + params.gru_bh
    r = sigmoid(gi[..., :h] + gh[..., :h])
    z = sigmoid(gi[..., h : 2 * h] + gh[..., h : 2 * h])
    cand = np.tanh(gi[..., 2 * h :] + r * gh[..., 2 * h :])
    return (1.0 - z) * cand + z * g_prev


@dataclass
class HiddenState:
    """Node features and GRU state; both persist across estimation layers."""

    u: np.ndarray  # (n, n_u)
    g: np.ndarray  # (n, n_h1)


def init_hidden(attrs: GraphAttributes, params: GnnParams) -> HiddenState:
    """Linear embedding of the node attributes; GRU state starts at zero."""
    u0 = attrs.node_attrs @ params.w1.T + params.b1
    return HiddenState(u=u0, g=np.zeros((attrs.n_nodes, params.dims.n_h1)))


def propagate(state: HiddenState, attrs: GraphAttributes, params: GnnParams) -> np.ndarray:
    """Per-edge messages c[n, k] = MLP([u_n; u_k; f_nk]) on retained edges.

    Returns a dense (n, n, n_u) tensor that is zero off the mask; entry
    (n, k) is the message node n receives from node k.
    """
    n = attrs.n_nodes
    recv, send = np.nonzero(attrs.edge_mask)
    inputs = np.concatenate(
        [state.u[recv], state.u[send], attrs.edge_attrs[recv, send]], axis=1
    )
    messages = np.zeros((n, n, params.dims.n_u))
    messages[recv, send] = edge_mlp(inputs, params)
    return messages


def aggregate(
    state: HiddenState,
    messages: np.ndarray,
    attrs: GraphAttributes,
    params: GnnParams,
) -> HiddenState:
    """Sum incoming messages, update the GRU state, re-embed node features."""
    summed = messages.sum(axis=1)  # mask zeros contribute nothing
    gru_in = np.concatenate([summed, attrs.node_attrs], axis=1)
    g_new = gru_cell(state.g, gru_in, params)
    return HiddenState(u=g_new @ params.w2.T + params.b2, g=g_new)


def readout(state: HiddenState, params: GnnParams) -> np.ndarray:
    """Per-node precision: ReLU readout clamped to the shared gamma bounds."""
    return clamp_gamma(readout_mlp(state.u, params))


def gnn_prior_update(
    post: PosteriorState,
    prior: PriorState,
    params: GnnParams,
    hyper: MrfHyper,
    state: HiddenState,
    rounds: int,
    k_edges: int | None = None,
    edge_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, HiddenState]:
    """One full prior update: L message-passing rounds, then readout.

    Returns the new precision vector and the updated hidden state, which
    the caller carries into the next estimation layer.
    """
    if rounds < 1:
        raise ValueError(f"need at least one round, got {rounds}")
    attrs = graph_attributes(post, hyper, prior.zeta, k_edges=k_edges, edge_mask=edge_mask)
    for _ in range(rounds):
        messages = propagate(state, attrs, params)
        state = aggregate(state, messages, attrs, params)
    return readout(state, params), state


class GnnPriorUpdater:
    """Adapter that plugs the network into the estimation loop.

    ``edge_policy`` selects the retained edges: "full" keeps every pair,
    "block" keeps within-block pairs of a Kronecker-structured problem
    (cross-block couplings are exactly zero there), and an integer keeps
    the strongest k per node. The hidden state is created on the first
    update of a run and carried across layers.
    """

    def __init__(
        self,
        params: GnnParams,
        hyper: MrfHyper = MrfHyper(),
        rounds: int = 3,
        edge_policy: str | int = "full",
    ):
        self.params = params
        self.hyper = hyper
        self.rounds = rounds
        self.edge_policy = edge_policy
        self._state: HiddenState | None = None
        self._mask: np.ndarray | None = None

    def begin(self, prob: SparseProblem) -> None:
        self._state = None
        if self.edge_policy == "block":
            if prob.block is None:
                raise ValueError("block edge policy needs a problem with block structure")
            self._mask = block_edge_mask(prob.n, prob.block)
        else:
            self._mask = None

    def update(self, post: PosteriorState, prior: PriorState) -> np.ndarray:
        k_edges = self.edge_policy if isinstance(self.edge_policy, int) else None
        attrs = graph_attributes(
            post, self.hyper, prior.zeta, k_edges=k_edges, edge_mask=self._mask
        )
        state = self._state
        if state is None:
            state = init_hidden(attrs, self.params)
        for _ in range(self.rounds):
            messages = propagate(state, attrs, self.params)
            state = aggregate(state, messages, attrs, self.params)
        self._state = state
        return readout(state, self.params)
