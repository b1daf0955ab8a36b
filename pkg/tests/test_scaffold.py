import numpy as np

from molfuse.chem import parse_smiles
from molfuse.data import random_smiles
from molfuse.scaffold import murcko_scaffold, strip_side_chains


def test_acyclic_gives_empty_key():
    s = murcko_scaffold(parse_smiles("CCO"))
    assert s.canonical_key == ""
    assert s.ring_atom_count == 0
    assert murcko_scaffold(parse_smiles("C")).canonical_key == ""


def test_side_chain_removal_matches_bare_ring():
    # hand check: deleting the ethyl chain leaves benzene
    ethylbenzene = murcko_scaffold(parse_smiles("c1ccccc1CC"))
    benzene = murcko_scaffold(parse_smiles("c1ccccc1"))
    assert ethylbenzene.canonical_key == benzene.canonical_key
    assert ethylbenzene.ring_atom_count == 6


def test_idempotence():
    rng = np.random.default_rng(3)
    for _ in range(30):
        mol = parse_smiles(random_smiles(rng))
        once = murcko_scaffold(mol)
        core = strip_side_chains(mol)
        assert murcko_scaffold(core).canonical_key == once.canonical_key


def test_key_is_permutation_invariant():
    rng = np.random.default_rng(4)
    for _ in range(20):
        mol = parse_smiles(random_smiles(rng))
        perm = list(rng.permutation(mol.num_atoms))
        assert (murcko_scaffold(mol.permute(perm)).canonical_key
                == murcko_scaffold(mol).canonical_key)


def test_distinct_ring_systems_get_distinct_keys():
    keys = {
        s: murcko_scaffold(parse_smiles(s)).canonical_key
        for s in ("c1ccccc1", "c1ccncc1", "C1CCCCC1", "C1CCCC1", "c1ccc2ccccc2c1")
    }
    assert len(set(keys.values())) == len(keys)


def test_linker_between_rings_is_kept():
    # diphenylmethane keeps its CH2 linker, so it differs from benzene
    linked = murcko_scaffold(parse_smiles("c1ccccc1Cc1ccccc1"))
    benzene = murcko_scaffold(parse_smiles("c1ccccc1"))
    assert linked.canonical_key != benzene.canonical_key
    assert linked.ring_atom_count == 12


def test_substituted_variants_collapse():
    base = murcko_scaffold(parse_smiles("c1ccncc1")).canonical_key
    for s in ("c1ccncc1C", "c1ccncc1CCO", "c1ccncc1CC(C)C"):
        assert murcko_scaffold(parse_smiles(s)).canonical_key == base


def test_ring_atom_count_counts_ring_atoms_only():
    assert murcko_scaffold(parse_smiles("c1ccc2ccccc2c1CC")).ring_atom_count == 10
