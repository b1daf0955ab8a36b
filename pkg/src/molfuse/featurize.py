"""Molecule featurization: per-atom feature rows and the directed-edge view.

Every bond becomes two directed edges that share one feature vector; the
``edge_rev`` array maps each directed edge to its opposite and is a
fixed-point-free involution whenever the molecule has at least one bond.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem import ELEMENT_ALPHABET, Molecule

_ELEMENT_INDEX = {symbol: k for k, symbol in enumerate(ELEMENT_ALPHABET)}
_BOND_ORDER_INDEX = {"single": 0, "double": 1, "triple": 2, "aromatic": 3}

_MAX_DEGREE = 5
_MAX_HYDROGENS = 4

#: Node feature layout: element one-hot (10 + other), degree one-hot (0-5),
#: formal charge, aromatic flag, in-ring flag, hydrogen-count one-hot (0-4).
NODE_FEATURE_DIM = len(ELEMENT_ALPHABET) + 1 + (_MAX_DEGREE + 1) + 3 + (_MAX_HYDROGENS + 1)

#: Edge feature layout: bond-order one-hot (single, double, triple,
#: aromatic) plus the in-ring flag.
EDGE_FEATURE_DIM = 5


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class DirectedEdgeGraph:
    node_features: np.ndarray  # [num_atoms, NODE_FEATURE_DIM]
    edge_features: np.ndarray  # [num_edges, EDGE_FEATURE_DIM]
    edge_src: np.ndarray  # [num_edges] source atom of each directed edge
    edge_tgt: np.ndarray  # [num_edges]
    edge_rev: np.ndarray  # [num_edges] index of the opposite directed edge

    @property
    def num_atoms(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_src.shape[0]

    def edges(self) -> list[tuple[int, int, np.ndarray, int]]:
        """Directed edges as (source, target, feature, reverse index) tuples."""
        return [
            (int(s), int(t), self.edge_features[k], int(r))
            for k, (s, t, r) in enumerate(zip(self.edge_src, self.edge_tgt, self.edge_rev))
        ]


@dataclass(frozen=True)
class GraphBatch:
    """Several graphs packed block-diagonally with a component index."""

    node_features: np.ndarray
    edge_features: np.ndarray
    edge_src: np.ndarray
    edge_tgt: np.ndarray
    edge_rev: np.ndarray
    comp_index: np.ndarray  # [num_atoms] graph id of each atom
    num_graphs: int

    @property
    def num_atoms(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_src.shape[0]


def atom_feature_row(element: str, degree: int, charge: int, aromatic: bool,
                     in_ring: bool, hydrogens: int, permissive: bool = False) -> np.ndarray:
    row = np.zeros(NODE_FEATURE_DIM, dtype=np.float64)
    idx = _ELEMENT_INDEX.get(element)
    if idx is None:
        if not permissive:
            raise FeatureError(f"element {element!r} outside the supported alphabet")
        idx = len(ELEMENT_ALPHABET)  # shared "other" bucket
    row[idx] = 1.0
    base = len(ELEMENT_ALPHABET) + 1
    row[base + min(degree, _MAX_DEGREE)] = 1.0
    base += _MAX_DEGREE + 1
    row[base] = float(charge)
    row[base + 1] = 1.0 if aromatic else 0.0
    row[base + 2] = 1.0 if in_ring else 0.0
    base += 3
    row[base + min(hydrogens, _MAX_HYDROGENS)] = 1.0
    return row


def featurize(mol: Molecule, permissive: bool = False) -> DirectedEdgeGraph:
    """Build the directed-edge graph with fixed-width feature rows.

    Unknown elements raise unless ``permissive`` is set, in which case they
    land in the shared "other" one-hot bucket.
    """
    degrees = mol.degrees()
    nodes = np.zeros((mol.num_atoms, NODE_FEATURE_DIM), dtype=np.float64)
    for i, atom in enumerate(mol.atoms):
        nodes[i] = atom_feature_row(
            atom.element, degrees[i], atom.charge, atom.aromatic,
            atom.in_ring, atom.hydrogens, permissive,
        )

    num_edges = 2 * mol.num_bonds
    edge_feats = np.zeros((num_edges, EDGE_FEATURE_DIM), dtype=np.float64)
    src = np.zeros(num_edges, dtype=np.int64)
    tgt = np.zeros(num_edges, dtype=np.int64)
    rev = np.zeros(num_edges, dtype=np.int64)
    for k, bond in enumerate(mol.bonds):
        feat = np.zeros(EDGE_FEATURE_DIM, dtype=np.float64)
        feat[_BOND_ORDER_INDEX[bond.order]] = 1.0
        feat[4] = 1.0 if bond.in_ring else 0.0
        e, f = 2 * k, 2 * k + 1
        src[e], tgt[e] = bond.a, bond.b
        src[f], tgt[f] = bond.b, bond.a
        rev[e], rev[f] = f, e
        edge_feats[e] = edge_feats[f] = feat
    return DirectedEdgeGraph(nodes, edge_feats, src, tgt, rev)


def pack_graphs(graphs: list[DirectedEdgeGraph]) -> GraphBatch:
    """Pack graphs into one block-diagonal batch; indices are offset."""
    if not graphs:
        raise ValueError("cannot pack an empty list of graphs")
    nodes = np.concatenate([g.node_features for g in graphs], axis=0)
    edge_feats = np.concatenate([g.edge_features for g in graphs], axis=0)
    src_parts, tgt_parts, rev_parts, comp_parts = [], [], [], []
    atom_offset = 0
    edge_offset = 0
    for gid, g in enumerate(graphs):
        src_parts.append(g.edge_src + atom_offset)
        tgt_parts.append(g.edge_tgt + atom_offset)
        rev_parts.append(g.edge_rev + edge_offset)
        comp_parts.append(np.full(g.num_atoms, gid, dtype=np.int64))
        atom_offset += g.num_atoms
        edge_offset += g.num_edges
    return GraphBatch(
        node_features=nodes,
        edge_features=edge_feats,
        edge_src=np.concatenate(src_parts),
        edge_tgt=np.concatenate(tgt_parts),
        edge_rev=np.concatenate(rev_parts),
        comp_index=np.concatenate(comp_parts),
        num_graphs=len(graphs),
    )
