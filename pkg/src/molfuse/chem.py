"""SMILES parsing into attributed molecular graphs.

Supports the organic subset (B, C, N, O, P, S, F, Cl, Br, I), aromatic
lowercase atoms (b, c, n, o, p, s), bracket atoms with charge and explicit
hydrogen counts, branches, ring closures (0-9 and %nn) and the bond symbols
``- = # :``. Stereo markers (``/ \\ @``) are accepted and ignored with a
warning; isotope labels are ignored. Multi-component input (``.``) is
rejected. Aromaticity is taken from lowercase input only, never re-derived.

All functions are pure and all returned structures are immutable, so they
are safe to share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace


class SmilesError(ValueError):
    """Raised on malformed SMILES input; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class SmilesWarning(UserWarning):
    """Emitted when an accepted-but-ignored SMILES feature is seen."""


#: Aliphatic organic-subset elements and their standard valence lists
#: (lowest valence consistent with the drawn bonds determines implicit H).
ORGANIC_VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

#: Lowercase symbols that may appear as aromatic atoms.
AROMATIC_SYMBOLS = {"b", "c", "n", "o", "p", "s"}

#: Fixed one-hot alphabet used by the featurizer; order is part of the
#: on-disk feature contract and must not change.
ELEMENT_ALPHABET = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")

BOND_SYMBOLS = {"-": "single", "=": "double", "#": "triple", ":": "aromatic"}

_BOND_ORDER_VALUE = {"single": 1.0, "double": 2.0, "triple": 3.0, "aromatic": 1.5}


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    hydrogens: int = 0
    aromatic: bool = False
    in_ring: bool = False


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: str
    in_ring: bool = False

    def pair(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_text: str = ""

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def num_bonds(self) -> int:
        return len(self.bonds)

    def degrees(self) -> list[int]:
        deg = [0] * len(self.atoms)
        for bond in self.bonds:
            deg[bond.a] += 1
            deg[bond.b] += 1
        return deg

    def neighbors(self) -> list[list[tuple[int, Bond]]]:
        """Adjacency lists of (neighbor atom index, bond)."""
        adj: list[list[tuple[int, Bond]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond))
            adj[bond.b].append((bond.a, bond))
        return adj

    def is_connected(self) -> bool:
        if not self.atoms:
            return True
        adj = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u, _ in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == len(self.atoms)

    def permute(self, perm: list[int]) -> "Molecule":
        """Relabel atoms so old index i becomes perm[i]; bonds follow."""
        if sorted(perm) != list(range(len(self.atoms))):
            raise ValueError("perm must be a permutation of atom indices")
        new_atoms: list[Atom | None] = [None] * len(self.atoms)
        for i, atom in enumerate(self.atoms):
            new_atoms[perm[i]] = atom
        new_bonds = tuple(
            replace(bond, a=perm[bond.a], b=perm[bond.b]) for bond in self.bonds
        )
        return Molecule(tuple(new_atoms), new_bonds, self.source_text)


class _ParsedAtom:
    __slots__ = ("element", "aromatic", "charge", "explicit_h", "offset")

    def __init__(self, element, aromatic, charge, explicit_h, offset):
        self.element = element
        self.aromatic = aromatic
        self.charge = charge
        self.explicit_h = explicit_h  # None -> compute from valence rules
        self.offset = offset


def _parse_bracket(text: str, start: int, permissive: bool) -> tuple[_ParsedAtom, int]:
    """Parse a bracket atom starting at ``text[start] == '['``.

    Returns the atom and the index just past the closing bracket.
    """
    end = text.find("]", start)
    if end < 0:
        raise SmilesError("unterminated bracket atom", start)
    i = start + 1

    while i < end and text[i].isdigit():  # isotope label, ignored
        i += 1
    if i >= end:
        raise SmilesError("empty bracket atom", start)

    ch = text[i]
    aromatic = False
    if ch.isupper():
        symbol = ch
        if i + 1 < end and text[i + 1].islower():
            symbol += text[i + 1]
            i += 1
        i += 1
    elif ch in AROMATIC_SYMBOLS:
        symbol = ch.upper()
        aromatic = True
        i += 1
    else:
        raise SmilesError(f"unknown element token {ch!r}", i)

    if not permissive and symbol not in ORGANIC_VALENCES:
        raise SmilesError(f"unknown element token {symbol!r}", start + 1)

    if i < end and text[i] == "@":
        at = i
        while i < end and text[i] == "@":
            i += 1
        warnings.warn(
            f"chirality marker at offset {at} ignored", SmilesWarning, stacklevel=3
        )

    explicit_h = 0
    if i < end and text[i] == "H":
        i += 1
        digits = ""
        while i < end and text[i].isdigit():
            digits += text[i]
            i += 1
        explicit_h = int(digits) if digits else 1

    charge = 0
    if i < end and text[i] in "+-":
        sign = 1 if text[i] == "+" else -1
        symbol_ch = text[i]
        i += 1
        digits = ""
        while i < end and text[i].isdigit():
            digits += text[i]
            i += 1
        if digits:
            charge = sign * int(digits)
        else:
            charge = sign
            while i < end and text[i] == symbol_ch:
                charge += sign
                i += 1

    if i != end:
        raise SmilesError(f"unexpected character {text[i]!r} in bracket atom", i)
    return _ParsedAtom(symbol, aromatic, charge, explicit_h, start), end + 1


def _implicit_hydrogens(spec: _ParsedAtom, bond_orders: list[str]) -> int:
    if spec.explicit_h is not None:
        return spec.explicit_h
    valences = ORGANIC_VALENCES.get(spec.element)
    if valences is None:
        return 0
    used = int(sum(_BOND_ORDER_VALUE[order] for order in bond_orders))
    for valence in valences:
        if valence >= used:
            return valence - used
    return 0  # hyper-valent input; no implicit hydrogens added


def _ring_bond_mask(num_atoms: int, bonds: list[tuple[int, int, str, int]]) -> list[bool]:
    """True for every bond that lies on a cycle (i.e. is not a bridge)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(num_atoms)]
    for k, (a, b, _, _) in enumerate(bonds):
        adj[a].append((b, k))
        adj[b].append((a, k))

    in_ring = [True] * len(bonds)
    disc = [-1] * num_atoms
    low = [0] * num_atoms
    timer = 0
    for root in range(num_atoms):
        if disc[root] >= 0:
            continue
        # Iterative Tarjan bridge search; a bridge (low[child] > disc[parent])
        # is exactly a bond on no cycle.
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            v, parent_edge, ptr = stack.pop()
            if ptr < len(adj[v]):
                stack.append((v, parent_edge, ptr + 1))
                u, edge = adj[v][ptr]
                if edge == parent_edge:
                    continue
                if disc[u] < 0:
                    disc[u] = low[u] = timer
                    timer += 1
                    stack.append((u, edge, 0))
                else:
                    low[v] = min(low[v], disc[u])
            elif parent_edge >= 0:
                a, b, _, _ = bonds[parent_edge]
                parent = a if disc[a] < disc[b] else b
                child = b if parent == a else a
                low[parent] = min(low[parent], low[child])
                if low[child] > disc[parent]:
                    in_ring[parent_edge] = False
    return in_ring


def parse_smiles(text: str, permissive: bool = False) -> Molecule:
    """Parse a single-component SMILES string into a Molecule.

    ``permissive`` admits bracket atoms outside the organic subset (they are
    stored verbatim and bucketed by the featurizer); by default they raise.
    Parse errors carry the byte offset of the offending token.
    """
    if not text:
        raise SmilesError("empty input", 0)
    if not text.isascii():
        raise SmilesError("non-ASCII input", 0)

    atoms: list[_ParsedAtom] = []
    bonds: list[tuple[int, int, str, int]] = []  # (a, b, order, offset)
    bond_pairs: set[tuple[int, int]] = set()
    branch_stack: list[tuple[int, int]] = []  # (atom index, '(' offset)
    ring_open: dict[int, tuple[int, str | None, int]] = {}
    prev: int | None = None
    pending: tuple[str, int] | None = None  # (bond symbol, offset)

    def close_bond(a: int, b: int, symbol: str | None, offset: int) -> None:
        if a == b:
            raise SmilesError("ring closure to the same atom", offset)
        pair = (a, b) if a < b else (b, a)
        if pair in bond_pairs:
            raise SmilesError("duplicate bond between atoms", offset)
        both_aromatic = atoms[a].aromatic and atoms[b].aromatic
        order = BOND_SYMBOLS[symbol] if symbol else ("aromatic" if both_aromatic else "single")
        if order == "aromatic" and not both_aromatic:
            raise SmilesError("aromatic bond between non-aromatic atoms", offset)
        bond_pairs.add(pair)
        bonds.append((a, b, order, offset))

    def add_atom(spec: _ParsedAtom) -> None:
        nonlocal prev, pending
        atoms.append(spec)
        idx = len(atoms) - 1
        if prev is not None:
            symbol, offset = pending if pending else (None, spec.offset)
            close_bond(prev, idx, symbol, offset)
        pending = None
        prev = idx

    def open_or_close_ring(label: int, offset: int) -> None:
        nonlocal pending
        if prev is None:
            raise SmilesError("ring closure before any atom", offset)
        symbol = pending[0] if pending else None
        pending = None
        if label in ring_open:
            other, other_symbol, _ = ring_open.pop(label)
            if symbol and other_symbol and symbol != other_symbol:
                raise SmilesError("conflicting ring-closure bond symbols", offset)
            close_bond(other, prev, symbol or other_symbol, offset)
        else:
            ring_open[label] = (prev, symbol, offset)

    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            spec, i = _parse_bracket(text, i, permissive)
            add_atom(spec)
        elif text[i : i + 2] in ("Cl", "Br"):
            add_atom(_ParsedAtom(text[i : i + 2], False, 0, None, i))
            i += 2
        elif ch in ORGANIC_VALENCES:
            add_atom(_ParsedAtom(ch, False, 0, None, i))
            i += 1
        elif ch in AROMATIC_SYMBOLS:
            add_atom(_ParsedAtom(ch.upper(), True, 0, None, i))
            i += 1
        elif ch in BOND_SYMBOLS:
            if prev is None:
                raise SmilesError("bond symbol before any atom", i)
            if pending is not None:
                raise SmilesError("two consecutive bond symbols", i)
            pending = (ch, i)
            i += 1
        elif ch in "/\\":
            warnings.warn(
                f"stereo bond marker at offset {i} ignored", SmilesWarning, stacklevel=2
            )
            i += 1
        elif ch.isdigit():
            open_or_close_ring(int(ch), i)
            i += 1
        elif ch == "%":
            if i + 2 >= n or not text[i + 1 : i + 3].isdigit():
                raise SmilesError("%% ring closure needs two digits", i)
            open_or_close_ring(int(text[i + 1 : i + 3]), i)
            i += 3
        elif ch == "(":
            if prev is None:
                raise SmilesError("branch before any atom", i)
            branch_stack.append((prev, i))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unbalanced parentheses", i)
            if pending is not None:
                raise SmilesError("dangling bond symbol before ')'", pending[1])
            prev, _ = branch_stack.pop()
            i += 1
        elif ch == ".":
            raise SmilesError("multi-component input is not supported", i)
        else:
            raise SmilesError(f"unknown element token {ch!r}", i)

    if pending is not None:
        raise SmilesError("dangling bond symbol at end of input", pending[1])
    if branch_stack:
        raise SmilesError("unbalanced parentheses", branch_stack[-1][1])
    if ring_open:
        _, _, offset = next(iter(ring_open.values()))
        raise SmilesError("unmatched ring-closure digit", offset)

    ring_mask = _ring_bond_mask(len(atoms), bonds)
    orders_at: list[list[str]] = [[] for _ in atoms]
    ring_atom = [False] * len(atoms)
    for (a, b, order, _), ringed in zip(bonds, ring_mask):
        orders_at[a].append(order)
        orders_at[b].append(order)
        if ringed:
            ring_atom[a] = ring_atom[b] = True

    final_atoms = tuple(
        Atom(
            element=spec.element,
            charge=spec.charge,
            hydrogens=_implicit_hydrogens(spec, orders_at[k]),
            aromatic=spec.aromatic,
            in_ring=ring_atom[k],
        )
        for k, spec in enumerate(atoms)
    )
    final_bonds = tuple(
        Bond(a, b, order, ringed)
        for (a, b, order, _), ringed in zip(bonds, ring_mask)
    )
    return Molecule(final_atoms, final_bonds, text)
