"""Ring-system scaffolds for structure-disjoint dataset splitting.

The scaffold of a molecule is what remains after iteratively pruning
terminal atoms that sit in no ring: the ring systems plus the linkers
between them. Scaffold identity is a canonical key computed by iterative
neighborhood refinement of atom invariants, so two molecules that share a
scaffold map to the same key regardless of atom order. Acyclic molecules
map to the empty key "".
"""

from __future__ import annotations

from dataclasses import dataclass

from ._hash import hash_ints, hash_text, mix64
from .chem import Bond, Molecule

_ORDER_CODE = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}


@dataclass(frozen=True)
class Scaffold:
    canonical_key: str
    ring_atom_count: int


def strip_side_chains(mol: Molecule) -> Molecule:
    """Remove terminal non-ring atoms until only the scaffold remains."""
    keep = list(range(mol.num_atoms))
    bonds = list(mol.bonds)
    while True:
        degree: dict[int, int] = {i: 0 for i in keep}
        for bond in bonds:
            degree[bond.a] += 1
            degree[bond.b] += 1
        prune = {
            i for i in keep
            if degree[i] <= 1 and not mol.atoms[i].in_ring
        }
        if not prune:
            break
        keep = [i for i in keep if i not in prune]
        bonds = [b for b in bonds if b.a not in prune and b.b not in prune]

    remap = {old: new for new, old in enumerate(keep)}
    atoms = tuple(mol.atoms[i] for i in keep)
    new_bonds = tuple(
        Bond(remap[b.a], remap[b.b], b.order, b.in_ring) for b in bonds
    )
    return Molecule(atoms, new_bonds, mol.source_text)


def _canonical_key(mol: Molecule) -> str:
    if mol.num_atoms == 0:
        return ""
    degrees = mol.degrees()
    codes = [
        hash_ints((
            hash_text(atom.element),
            degrees[i],
            atom.charge + 16,
            int(atom.aromatic),
            int(atom.in_ring),
        ))
        for i, atom in enumerate(mol.atoms)
    ]
    adj = mol.neighbors()
    # Refine for num_atoms rounds; enough for information to cross any
    # simple path in the graph.
    for _ in range(mol.num_atoms):
        refined = []
        for i in range(mol.num_atoms):
            env = sorted(
                (_ORDER_CODE[bond.order], codes[j]) for j, bond in adj[i]
            )
            parts = [codes[i]]
            for order_code, neighbor_code in env:
                parts.extend((order_code, neighbor_code))
            refined.append(hash_ints(parts))
        codes = refined

    bond_codes = sorted(
        hash_ints((
            _ORDER_CODE[bond.order],
            min(codes[bond.a], codes[bond.b]),
            max(codes[bond.a], codes[bond.b]),
        ))
        for bond in mol.bonds
    )
    digest = hash_ints(sorted(codes) + [mix64(0)] + bond_codes)
    return f"{digest:016x}"


def murcko_scaffold(mol: Molecule) -> Scaffold:
    """Scaffold key and ring-atom count of a molecule.

    Idempotent: the scaffold of a scaffold has the same canonical key.
    """
    core = strip_side_chains(mol)
    ring_atoms = sum(1 for atom in core.atoms if atom.in_ring)
    return Scaffold(_canonical_key(core), ring_atoms)
