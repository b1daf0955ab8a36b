"""Circular substructure fingerprints and Tanimoto similarity.

Atom environments of increasing radius are hashed into stable 64-bit
identifiers, deduplicated by the atom set they cover, and folded into a
fixed-width bit vector. Hashing uses fixed seed constants (see ``_hash``),
so equal molecules give bit-identical fingerprints across runs, platforms
and atom orders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._hash import hash_ints, hash_text
from .chem import Molecule

_ORDER_CODE = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray  # bool vector of length width
    width: int

    @property
    def set_count(self) -> int:
        return int(self.bits.sum())

    def set_positions(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.bits))

    def to_hex(self) -> str:
        """Hex string of width/4 chars, big-endian bit order (bit 0 is the
        most significant bit of the first character)."""
        chars = []
        for k in range(0, self.width, 4):
            b = self.bits[k : k + 4]
            chars.append(f"{int(b[0]) * 8 + int(b[1]) * 4 + int(b[2]) * 2 + int(b[3]):x}")
        return "".join(chars)

    @classmethod
    def from_hex(cls, text: str) -> "Fingerprint":
        width = 4 * len(text)
        bits = np.zeros(width, dtype=bool)
        for k, ch in enumerate(text):
            v = int(ch, 16)
            bits[4 * k : 4 * k + 4] = [(v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1]
        return cls(bits, width)


def _initial_identifiers(mol: Molecule) -> list[int]:
    degrees = mol.degrees()
    return [
        hash_ints((
            hash_text(atom.element),
            degrees[i],
            atom.charge + 16,
            int(atom.aromatic),
            int(atom.in_ring),
            atom.hydrogens,
        ))
        for i, atom in enumerate(mol.atoms)
    ]


def morgan_fingerprint(mol: Molecule, radius: int = 2, width: int = 2048) -> Fingerprint:
    """Circular fingerprint with the given neighborhood radius.

    Identifiers from all iterations 0..radius are kept; when two
    environments cover the same atom set, only the one generated at the
    smallest radius (ties broken by identifier value) survives before
    folding modulo ``width``.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if width <= 0 or width & (width - 1):
        raise ValueError("width must be a positive power of two")

    adj = mol.neighbors()
    ids = _initial_identifiers(mol)
    envs = [frozenset((i,)) for i in range(mol.num_atoms)]
    # (radius, identifier, environment atom set); radius-0 entries first.
    candidates = [(0, ids[i], envs[i]) for i in range(mol.num_atoms)]

    for r in range(1, radius + 1):
        new_ids, new_envs = [], []
        for i in range(mol.num_atoms):
            neighborhood = sorted(
                (_ORDER_CODE[bond.order], ids[j]) for j, bond in adj[i]
            )
            parts = [r, ids[i]]
            for order_code, neighbor_id in neighborhood:
                parts.extend((order_code, neighbor_id))
            new_ids.append(hash_ints(parts))
            env = envs[i]
            for j, _ in adj[i]:
                env = env | envs[j]
            new_envs.append(env)
        ids, envs = new_ids, new_envs
        candidates.extend((r, ids[i], envs[i]) for i in range(mol.num_atoms))

    kept: dict[frozenset[int], tuple[int, int]] = {}
    for r, ident, env in candidates:
        prev = kept.get(env)
        if prev is None or (r, ident) < prev:
            kept[env] = (r, ident)

    bits = np.zeros(width, dtype=bool)
    for _, ident in kept.values():
        bits[ident % width] = True
    return Fingerprint(bits, width)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|A∩B| / |A∪B| over the set-bit sets; 1.0 when both are empty."""
    if a.width != b.width:
        raise ValueError(f"fingerprint widths differ: {a.width} vs {b.width}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def tanimoto_matrix(bit_rows: np.ndarray) -> np.ndarray:
    """Pairwise Tanimoto over rows of a 0/1 matrix (empty vs empty is 1)."""
    x = np.asarray(bit_rows, dtype=np.float64)
    inter = x @ x.T
    counts = x.sum(axis=1)
    union = counts[:, None] + counts[None, :] - inter
    sim = np.ones_like(inter)
    np.divide(inter, union, out=sim, where=union > 0)
    return sim
