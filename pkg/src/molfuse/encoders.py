"""Graph encoders over the directed-edge view.

Two encoders share one interface: a message-passing network whose hidden
states live on directed bonds (each edge aggregates incoming edge states
while excluding its own reverse, which kills immediately-backtracking
walks), and a GIN-style network with node states and a trainable epsilon
per layer. Both produce atom embeddings, a readout graph embedding and a
projected vector for similarity training.

Forward passes are written against a single packed ``GraphBatch``; a batch
of one graph is the single-molecule case. All parameters are registered on
the caller's tape by name, so repeated use within one forward shares
weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .featurize import EDGE_FEATURE_DIM, NODE_FEATURE_DIM, GraphBatch
from .optim import ParamStore

READOUTS = ("sum", "mean")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "dmpnn"  # "dmpnn" or "gin"
    depth: int = 5
    hidden_dim: int = 300
    embed_dim: int = 128
    projection_dim: int = 512
    readout: str = "sum"

    def __post_init__(self):
        if self.kind not in ("dmpnn", "gin"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if min(self.hidden_dim, self.embed_dim, self.projection_dim) < 1:
            raise ValueError("dims must be >= 1")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "depth": self.depth,
            "hidden_dim": self.hidden_dim,
            "embed_dim": self.embed_dim,
            "projection_dim": self.projection_dim,
            "readout": self.readout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


@dataclass
class EncoderOutput:
    atom_embeddings: Tensor  # [num_atoms, embed_dim]
    graph_embedding: Tensor  # [num_graphs, embed_dim], readout of the above
    projected: Tensor  # [num_graphs, projection_dim]


# ----------------------------------------------------------------------
# parameter initialization
# ----------------------------------------------------------------------

def init_mlp_params(store: ParamStore, prefix: str, layer_dims: list[int],
                    rng: np.random.Generator) -> None:
    for k in range(len(layer_dims) - 1):
        store.glorot(f"{prefix}w{k}", (layer_dims[k], layer_dims[k + 1]), rng)
        store.zeros(f"{prefix}b{k}", (layer_dims[k + 1],))


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator,
                        store: ParamStore | None = None,
                        prefix: str = "encoder.") -> ParamStore:
    """Create all encoder + projection-head parameters (bias 0, glorot W)."""
    store = store if store is not None else ParamStore()
    if cfg.kind == "dmpnn":
        store.glorot(f"{prefix}w_in", (NODE_FEATURE_DIM + EDGE_FEATURE_DIM, cfg.hidden_dim), rng)
        store.glorot(f"{prefix}w_msg", (cfg.hidden_dim, cfg.hidden_dim), rng)
        store.glorot(f"{prefix}w_atom", (NODE_FEATURE_DIM + cfg.hidden_dim, cfg.embed_dim), rng)
    else:
        in_dim = NODE_FEATURE_DIM
        for t in range(cfg.depth):
            store.zeros(f"{prefix}eps{t}", (1,))
            init_mlp_params(store, f"{prefix}mlp{t}.", [in_dim, cfg.hidden_dim, cfg.embed_dim], rng)
            in_dim = cfg.embed_dim
    init_mlp_params(store, f"{prefix}proj.", [cfg.embed_dim, cfg.embed_dim, cfg.projection_dim], rng)
    return store


# ----------------------------------------------------------------------
# forward passes
# ----------------------------------------------------------------------

def mlp_head(x: Tensor, store: ParamStore, prefix: str, layer_dims: list[int],
             tape: Tape) -> Tensor:
    """Affine+relu stack with an affine last layer.

    ``layer_dims`` is the full dimension chain [d_in, ..., d_out]; a chain
    shorter than two entries is the identity.
    """
    if len(layer_dims) < 2:
        return x
    h = x
    for k in range(len(layer_dims) - 1):
        w = tape.param(f"{prefix}w{k}", store[f"{prefix}w{k}"])
        b = tape.param(f"{prefix}b{k}", store[f"{prefix}b{k}"])
        h = ad.add(ad.matmul(h, w), b)
        if k < len(layer_dims) - 2:
            h = ad.relu(h)
    return h


def _readout(atom_embeddings: Tensor, batch: GraphBatch, kind: str) -> Tensor:
    summed = ad.segment_sum(atom_embeddings, batch.comp_index, batch.num_graphs)
    if kind == "sum":
        return summed
    counts = np.bincount(batch.comp_index, minlength=batch.num_graphs).astype(np.float64)
    return ad.scale_rows(summed, 1.0 / counts)


def dmpnn_message_sweep(graph, edge_states: np.ndarray,
                        exclude_reverse: bool = True) -> np.ndarray:
    """One message-aggregation step over directed-edge states (numpy only).

    For edge (v, w) this sums the states of edges arriving at v; with
    ``exclude_reverse`` the state of (w, v) is subtracted out, which is the
    rule that removes immediately-backtracking walks. With it disabled this
    is the plain node-message aggregation, kept as an experimental control.
    """
    incoming = np.zeros((graph.num_atoms, edge_states.shape[1]), dtype=np.float64)
    np.add.at(incoming, graph.edge_tgt, edge_states)
    messages = incoming[graph.edge_src]
    if exclude_reverse:
        messages = messages - edge_states[graph.edge_rev]
    return messages


def dmpnn_forward(batch: GraphBatch, store: ParamStore, cfg: EncoderConfig,
                  tape: Tape, prefix: str = "encoder.") -> EncoderOutput:
    if cfg.kind != "dmpnn":
        raise ValueError("config kind is not dmpnn")
    x = ad.constant(batch.node_features)
    w_in = tape.param(f"{prefix}w_in", store[f"{prefix}w_in"])
    w_msg = tape.param(f"{prefix}w_msg", store[f"{prefix}w_msg"])
    w_atom = tape.param(f"{prefix}w_atom", store[f"{prefix}w_atom"])

    src_feats = ad.gather_rows(x, batch.edge_src)
    edge_in = ad.concat([src_feats, ad.constant(batch.edge_features)], axis=1)
    h0 = ad.relu(ad.matmul(edge_in, w_in))
    h = h0
    for _ in range(1, cfg.depth):
        incoming = ad.segment_sum(h, batch.edge_tgt, batch.num_atoms)
        messages = ad.sub(
            ad.gather_rows(incoming, batch.edge_src),
            ad.gather_rows(h, batch.edge_rev),
        )
        h = ad.relu(ad.add(h0, ad.matmul(messages, w_msg)))

    node_incoming = ad.segment_sum(h, batch.edge_tgt, batch.num_atoms)
    atom_in = ad.concat([x, node_incoming], axis=1)
    atom_embeddings = ad.relu(ad.matmul(atom_in, w_atom))
    graph_embedding = _readout(atom_embeddings, batch, cfg.readout)
    projected = mlp_head(
        graph_embedding, store, f"{prefix}proj.",
        [cfg.embed_dim, cfg.embed_dim, cfg.projection_dim], tape,
    )
    return EncoderOutput(atom_embeddings, graph_embedding, projected)


def gin_forward(batch: GraphBatch, store: ParamStore, cfg: EncoderConfig,
                tape: Tape, prefix: str = "encoder.") -> EncoderOutput:
    if cfg.kind != "gin":
        raise ValueError("config kind is not gin")
    h: Tensor = ad.constant(batch.node_features)
    in_dim = NODE_FEATURE_DIM
    for t in range(cfg.depth):
        neighbor_sum = ad.segment_sum(
            ad.gather_rows(h, batch.edge_src), batch.edge_tgt, batch.num_atoms
        )
        eps = tape.param(f"{prefix}eps{t}", store[f"{prefix}eps{t}"])
        combined = ad.add(ad.add(h, ad.mul(h, eps)), neighbor_sum)
        h = mlp_head(combined, store, f"{prefix}mlp{t}.",
                     [in_dim, cfg.hidden_dim, cfg.embed_dim], tape)
        in_dim = cfg.embed_dim
    graph_embedding = _readout(h, batch, cfg.readout)
    projected = mlp_head(
        graph_embedding, store, f"{prefix}proj.",
        [cfg.embed_dim, cfg.embed_dim, cfg.projection_dim], tape,
    )
    return EncoderOutput(h, graph_embedding, projected)


def encode(batch: GraphBatch, store: ParamStore, cfg: EncoderConfig,
           tape: Tape, prefix: str = "encoder.") -> EncoderOutput:
    forward = dmpnn_forward if cfg.kind == "dmpnn" else gin_forward
    return forward(batch, store, cfg, tape, prefix)
