import warnings

import pytest

from molfuse.chem import Molecule, SmilesError, SmilesWarning, parse_smiles


class TestBasicParsing:
    def test_single_atom(self):
        mol = parse_smiles("C")
        assert mol.num_atoms == 1
        assert mol.num_bonds == 0
        assert mol.atoms[0].element == "C"
        assert mol.atoms[0].hydrogens == 4

    def test_ethanol_connectivity(self):
        # hand parse: C-C-O, two single bonds
        mol = parse_smiles("CCO")
        assert [a.element for a in mol.atoms] == ["C", "C", "O"]
        assert [(b.a, b.b, b.order) for b in mol.bonds] == [
            (0, 1, "single"), (1, 2, "single"),
        ]
        assert [a.hydrogens for a in mol.atoms] == [3, 2, 1]

    def test_benzene_ring(self):
        mol = parse_smiles("c1ccccc1")
        assert mol.num_atoms == 6
        assert mol.num_bonds == 6
        assert all(a.element == "C" and a.aromatic and a.in_ring for a in mol.atoms)
        assert all(b.order == "aromatic" and b.in_ring for b in mol.bonds)
        assert all(a.hydrogens == 1 for a in mol.atoms)

    def test_branching(self):
        mol = parse_smiles("CC(C)C")
        degrees = mol.degrees()
        assert sorted(degrees) == [1, 1, 1, 3]

    def test_double_and_triple_bonds(self):
        assert parse_smiles("C=C").bonds[0].order == "double"
        assert parse_smiles("C#N").bonds[0].order == "triple"

    def test_two_letter_elements(self):
        mol = parse_smiles("ClCBr")
        assert [a.element for a in mol.atoms] == ["Cl", "C", "Br"]

    def test_ring_closure_percent(self):
        mol = parse_smiles("C%10CCCC%10")
        assert mol.num_atoms == 5
        assert mol.num_bonds == 5
        assert all(a.in_ring for a in mol.atoms)

    def test_ring_digit_reuse_after_close(self):
        mol = parse_smiles("C1CC1C1CC1")
        assert mol.num_atoms == 6
        assert mol.num_bonds == 7

    def test_spiro_rings(self):
        mol = parse_smiles("C1CCC2(CC1)CCCC2")
        assert mol.num_atoms == 10
        assert all(a.in_ring for a in mol.atoms)

    def test_explicit_single_between_aromatic(self):
        mol = parse_smiles("c1ccccc1-c1ccccc1")
        orders = [b.order for b in mol.bonds]
        assert orders.count("single") == 1
        assert orders.count("aromatic") == 12

    def test_determinism(self):
        assert parse_smiles("c1ccncc1CCO") == parse_smiles("c1ccncc1CCO")

    def test_connected(self):
        for s in ("C", "CCO", "c1ccccc1CC(C)C", "C1CC1C1CC1"):
            assert parse_smiles(s).is_connected()


class TestBracketAtoms:
    def test_ammonium(self):
        atom = parse_smiles("[NH4+]").atoms[0]
        assert (atom.element, atom.charge, atom.hydrogens) == ("N", 1, 4)

    def test_negative_charge(self):
        assert parse_smiles("[O-]").atoms[0].charge == -1
        assert parse_smiles("[O--]").atoms[0].charge == -2
        assert parse_smiles("[N+2]").atoms[0].charge == 2

    def test_bracket_hydrogen_count_is_authoritative(self):
        assert parse_smiles("[CH2]").atoms[0].hydrogens == 2
        assert parse_smiles("[C]").atoms[0].hydrogens == 0

    def test_aromatic_nh(self):
        mol = parse_smiles("c1cc[nH]c1")
        n = mol.atoms[3]
        assert n.element == "N" and n.aromatic and n.hydrogens == 1

    def test_isotope_ignored(self):
        assert parse_smiles("[13C]").atoms[0].element == "C"

    def test_chirality_warns(self):
        with pytest.warns(SmilesWarning):
            parse_smiles("[C@@H](N)(C)O")

    def test_unknown_element_rejected_by_default(self):
        with pytest.raises(SmilesError, match="unknown element"):
            parse_smiles("[Se]")

    def test_unknown_element_permissive(self):
        atom = parse_smiles("[Se]", permissive=True).atoms[0]
        assert atom.element == "Se"


class TestValenceRules:
    def test_lowest_fitting_valence(self):
        # N picks 3 normally, 5 when four bonds are drawn
        assert parse_smiles("N").atoms[0].hydrogens == 3
        assert parse_smiles("N(=O)=O").atoms[0].hydrogens == 1

    def test_sulfur_valences(self):
        assert parse_smiles("S").atoms[0].hydrogens == 2
        mol = parse_smiles("OS(=O)(=O)O")  # sulfate core: S uses valence 6
        assert mol.atoms[1].hydrogens == 0

    def test_aromatic_nitrogen_no_hydrogen(self):
        mol = parse_smiles("c1ccncc1")
        assert mol.atoms[3].element == "N"
        assert mol.atoms[3].hydrogens == 0

    def test_fused_ring_carbons(self):
        mol = parse_smiles("c1ccc2ccccc2c1")
        assert sum(a.hydrogens for a in mol.atoms) == 8  # 10 carbons, 2 fusion


class TestParseErrors:
    def test_dangling_branch_names_offset(self):
        with pytest.raises(SmilesError) as err:
            parse_smiles("C(")
        assert err.value.offset == 1

    def test_unbalanced_close(self):
        with pytest.raises(SmilesError, match="unbalanced"):
            parse_smiles("CC)C")

    def test_branch_before_atom(self):
        with pytest.raises(SmilesError):
            parse_smiles("(C)C")

    def test_unmatched_ring_digit(self):
        with pytest.raises(SmilesError, match="unmatched ring-closure") as err:
            parse_smiles("C1CC")
        assert err.value.offset == 1

    def test_multi_component_rejected(self):
        with pytest.raises(SmilesError, match="multi-component") as err:
            parse_smiles("CC.O")
        assert err.value.offset == 2

    def test_unknown_token(self):
        with pytest.raises(SmilesError, match="unknown element"):
            parse_smiles("CXC")

    def test_dangling_bond(self):
        with pytest.raises(SmilesError):
            parse_smiles("C=")

    def test_double_bond_symbol(self):
        with pytest.raises(SmilesError):
            parse_smiles("C==C")

    def test_aromatic_bond_needs_aromatic_atoms(self):
        with pytest.raises(SmilesError, match="aromatic bond"):
            parse_smiles("C:C")

    def test_conflicting_ring_bond_symbols(self):
        with pytest.raises(SmilesError, match="conflicting"):
            parse_smiles("C=1CCCC-1")

    def test_ring_closure_to_self(self):
        with pytest.raises(SmilesError, match="same atom"):
            parse_smiles("C11")

    def test_duplicate_bond(self):
        with pytest.raises(SmilesError, match="duplicate bond"):
            parse_smiles("C1C1")

    def test_empty_and_non_ascii(self):
        with pytest.raises(SmilesError):
            parse_smiles("")
        with pytest.raises(SmilesError):
            parse_smiles("Ccé")


class TestStereoIgnored:
    def test_slash_markers_warn_and_parse(self):
        with pytest.warns(SmilesWarning):
            mol = parse_smiles("F/C=C/F")
        assert mol.num_atoms == 4
        assert [b.order for b in mol.bonds] == ["single", "double", "single"]


class TestPermute:
    def test_roundtrip(self):
        mol = parse_smiles("CC(=O)O")
        perm = [2, 0, 3, 1]
        permuted = mol.permute(perm)
        assert permuted.atoms[perm[0]] == mol.atoms[0]
        assert permuted.num_bonds == mol.num_bonds
        back = permuted.permute([perm.index(i) for i in range(4)])
        assert back.atoms == mol.atoms

    def test_bad_perm_rejected(self):
        with pytest.raises(ValueError):
            parse_smiles("CC").permute([0, 0])
