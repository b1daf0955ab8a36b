import numpy as np
import pytest

from molfuse.chem import parse_smiles
from molfuse.data import random_smiles
from molfuse.featurize import (
    EDGE_FEATURE_DIM,
    NODE_FEATURE_DIM,
    FeatureError,
    featurize,
    pack_graphs,
)


def test_methane_shape():
    g = featurize(parse_smiles("C"))
    assert g.node_features.shape == (1, NODE_FEATURE_DIM)
    assert g.num_edges == 0


def test_ethanol_directed_edges():
    # 2 bonds -> 4 directed edges, reverse mapping is an involution
    g = featurize(parse_smiles("CCO"))
    assert g.node_features.shape == (3, NODE_FEATURE_DIM)
    assert g.num_edges == 4
    assert all(g.edge_rev[g.edge_rev[k]] == k for k in range(4))
    assert all(g.edge_rev[k] != k for k in range(4))
    # both directions of a bond share the feature vector
    for k in range(4):
        np.testing.assert_array_equal(g.edge_features[k], g.edge_features[g.edge_rev[k]])
        assert g.edge_src[k] == g.edge_tgt[g.edge_rev[k]]


def test_benzene_rows_identical():
    g = featurize(parse_smiles("c1ccccc1"))
    for row in g.node_features[1:]:
        np.testing.assert_array_equal(row, g.node_features[0])
    assert g.edge_features.shape == (12, EDGE_FEATURE_DIM)


def test_feature_layout_spot_checks():
    g = featurize(parse_smiles("[NH4+]"))
    row = g.node_features[0]
    assert row[2] == 1.0  # element one-hot: N is third in the alphabet
    base = 11
    assert row[base + 0] == 1.0  # degree 0
    assert row[base + 6] == 1.0  # formal charge scalar
    assert row[base + 7] == 0.0  # not aromatic
    assert row[base + 8] == 0.0  # not in ring
    assert row[base + 9 + 4] == 1.0  # 4 hydrogens


def test_aromatic_and_ring_flags():
    g = featurize(parse_smiles("c1ccccc1"))
    base = 11
    assert np.all(g.node_features[:, base + 7] == 1.0)
    assert np.all(g.node_features[:, base + 8] == 1.0)
    assert np.all(g.edge_features[:, 3] == 1.0)  # aromatic order slot
    assert np.all(g.edge_features[:, 4] == 1.0)  # ring flag


def test_unknown_element_errors_with_symbol():
    mol = parse_smiles("[Se]", permissive=True)
    with pytest.raises(FeatureError, match="Se"):
        featurize(mol)
    g = featurize(mol, permissive=True)
    assert g.node_features[0, 10] == 1.0  # the shared "other" bucket


def _edge_set(g):
    return {
        (int(s), int(t), g.edge_features[k].tobytes())
        for k, (s, t) in enumerate(zip(g.edge_src, g.edge_tgt))
    }


def test_permutation_covariance():
    rng = np.random.default_rng(7)
    for _ in range(25):
        mol = parse_smiles(random_smiles(rng))
        n = mol.num_atoms
        perm = list(rng.permutation(n))
        g = featurize(mol)
        gp = featurize(mol.permute(perm))
        np.testing.assert_array_equal(gp.node_features[perm], g.node_features)
        mapped = {
            (perm[s], perm[t], feat) for s, t, feat in _edge_set(g)
        }
        assert mapped == _edge_set(gp)


def test_pack_graphs_offsets():
    g1 = featurize(parse_smiles("CCO"))
    g2 = featurize(parse_smiles("C"))
    g3 = featurize(parse_smiles("C=C"))
    batch = pack_graphs([g1, g2, g3])
    assert batch.num_atoms == 6
    assert batch.num_graphs == 3
    np.testing.assert_array_equal(batch.comp_index, [0, 0, 0, 1, 2, 2])
    # edges of the third graph reference offset atom ids
    assert set(batch.edge_src[4:]) == {4, 5}
    assert all(batch.edge_rev[batch.edge_rev[k]] == k for k in range(batch.num_edges))


def test_pack_empty_rejected():
    with pytest.raises(ValueError):
        pack_graphs([])
