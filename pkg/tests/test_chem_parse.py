import itertools
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from probqsar.chem_parse import (
    Atom,
    Bond,
    EmptyInput,
    Molecule,
    MultiComponentUnsupported,
    SmilesError,
    UnknownToken,
    UnmatchedParenthesis,
    UnmatchedRingClosure,
    implicit_h_count,
    parse_smiles,
    ring_flags,
)

CASES = Path(__file__).parent / "data" / "smiles_cases.tsv"
ERRORS = {
    "EmptyInput": EmptyInput,
    "UnknownToken": UnknownToken,
    "UnmatchedParenthesis": UnmatchedParenthesis,
    "UnmatchedRingClosure": UnmatchedRingClosure,
    "MultiComponentUnsupported": MultiComponentUnsupported,
}


def load_cases():
    valid, malformed = [], []
    for line in CASES.read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or line == "":
            continue
        cols = line.split("\t")
        if cols[1] == "ERROR":
            malformed.append((cols[0], cols[2], int(cols[3])))
        else:
            valid.append((cols[0], *map(int, cols[1:5])))
    return valid, malformed


VALID, MALFORMED = load_cases()


def summary(m: Molecule):
    return (
        m.num_atoms,
        len(m.bonds),
        sum(a.formal_charge for a in m.atoms),
        sum(implicit_h_count(m, i) for i in range(m.num_atoms)),
    )


class TestCorpus:
    def test_corpus_size(self):
        assert len(VALID) + len(MALFORMED) >= 150
        assert len(MALFORMED) >= 30

    @pytest.mark.parametrize("smiles,atoms,bonds,charge,hydrogens", VALID, ids=[c[0] for c in VALID])
    def test_valid(self, smiles, atoms, bonds, charge, hydrogens):
        assert summary(parse_smiles(smiles)) == (atoms, bonds, charge, hydrogens)

    @pytest.mark.parametrize("smiles,kind,offset", MALFORMED, ids=[repr(c[0]) for c in MALFORMED])
    def test_malformed(self, smiles, kind, offset):
        with pytest.raises(ERRORS[kind]) as info:
            parse_smiles(smiles)
        assert info.value.offset == offset


class TestParser:
    def test_ethanol(self):
        m = parse_smiles("CCO")
        assert [a.symbol for a in m.atoms] == ["C", "C", "O"]
        assert [(b.begin, b.end, b.order) for b in m.bonds] == [(0, 1, "single"), (1, 2, "single")]

    def test_benzene_aromatic(self):
        m = parse_smiles("c1ccccc1")
        assert all(a.aromatic for a in m.atoms)
        assert {b.order for b in m.bonds} == {"aromatic"}
        assert len(m.bonds) == 6

    def test_uppercase_ring_not_aromatic(self):
        m = parse_smiles("C1=CC=CC=C1")
        assert not any(a.aromatic for a in m.atoms)
        assert [b.order for b in m.bonds].count("double") == 3

    def test_bracket_atom_fields(self):
        m = parse_smiles("[13CH3-]")
        a = m.atoms[0]
        assert (a.element, a.isotope, a.explicit_h, a.formal_charge, a.bracket) == (6, 13, 3, -1, True)

    def test_double_plus_charge(self):
        assert parse_smiles("[Fe++]").atoms[0].formal_charge == 2
        assert parse_smiles("[Fe+2]").atoms[0].formal_charge == 2

    def test_ring_closure_bond_symbol(self):
        m = parse_smiles("C=1CCCCC1")
        assert sorted(b.order for b in m.bonds).count("double") == 1

    def test_percent_ring_label(self):
        m = parse_smiles("C%12CC%12")
        assert len(m.bonds) == 3

    def test_dot_rejected_with_offset(self):
        with pytest.raises(MultiComponentUnsupported) as info:
            parse_smiles("CC.O")
        assert info.value.offset == 2

    def test_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            parse_smiles("C(")
        assert issubclass(SmilesError, ValueError)

    def test_nitro_charges_balance(self):
        m = parse_smiles("C[N+](=O)[O-]")
        assert sum(a.formal_charge for a in m.atoms) == 0


class TestImplicitHydrogens:
    @pytest.mark.parametrize(
        "smiles,index,expected",
        [("C", 0, 4), ("CC=O", 2, 0), ("CC=O", 1, 1), ("c1ccccc1", 0, 1), ("c1ccncc1", 3, 0),
         ("[nH]1cccc1", 0, 1), ("CS(=O)(=O)C", 1, 0), ("P", 0, 3), ("FC(F)F", 1, 1)],
    )
    def test_counts(self, smiles, index, expected):
        assert implicit_h_count(parse_smiles(smiles), index) == expected


# -- ring flags vs. exhaustive cycle enumeration ---------------------------------


def cycle_bonds(n: int, edges: list[tuple[int, int]]) -> set[int]:
    """Indices of edges lying on at least one simple cycle, by enumerating all simple paths."""
    adj = {i: [] for i in range(n)}
    for k, (u, v) in enumerate(edges):
        adj[u].append((v, k))
        adj[v].append((u, k))
    on_cycle: set[int] = set()
    for k, (u, v) in enumerate(edges):
        # edge k is on a cycle iff a simple path u -> v exists avoiding edge k
        stack = [(u, frozenset([u]))]
        found = False
        while stack and not found:
            node, visited = stack.pop()
            for nb, j in adj[node]:
                if j == k:
                    continue
                if nb == v:
                    found = True
                    break
                if nb not in visited:
                    stack.append((nb, visited | {nb}))
        if found:
            on_cycle.add(k)
    return on_cycle


def graph_molecule(n: int, edges: list[tuple[int, int]]) -> Molecule:
    atoms = tuple(Atom(6) for _ in range(n))
    bonds = tuple(Bond(u, v, "single") for u, v in edges)
    return Molecule(atoms, bonds, "")


@st.composite
def small_graphs(draw):
    n = draw(st.integers(1, 8))
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return n, [p for p, keep in zip(pairs, mask) if keep]


class TestRingFlags:
    def test_acyclic(self):
        atoms, bonds = ring_flags(parse_smiles("CCO"))
        assert not any(atoms) and not any(bonds)

    def test_triangle(self):
        atoms, bonds = ring_flags(parse_smiles("C1CC1"))
        assert all(atoms) and all(bonds)

    def test_substituent_off_ring(self):
        atoms, bonds = ring_flags(parse_smiles("CC1CC1"))
        assert atoms == [False, True, True, True]
        assert bonds[0] is False

    def test_bridge_between_rings(self):
        m = parse_smiles("C1CC1C1CC1")
        atoms, bonds = ring_flags(m)
        assert all(atoms)
        bridge = [k for k, b in enumerate(m.bonds) if {b.begin, b.end} == {2, 3}]
        assert [bonds[k] for k in bridge] == [False]

    @settings(max_examples=300, deadline=None)
    @given(small_graphs())
    def test_matches_cycle_enumeration(self, graph):
        n, edges = graph
        atom_flags, bond_flags = ring_flags(graph_molecule(n, edges))
        expected = cycle_bonds(n, edges)
        assert {k for k, f in enumerate(bond_flags) if f} == expected
        ring_atoms = {x for k in expected for x in edges[k]}
        assert {i for i, f in enumerate(atom_flags) if f} == ring_atoms

    def test_all_graphs_on_five_atoms(self):
        pairs = list(itertools.combinations(range(5), 2))
        for mask in range(1 << len(pairs)):
            edges = [p for j, p in enumerate(pairs) if mask >> j & 1]
            _, bond_flags = ring_flags(graph_molecule(5, edges))
            assert {k for k, f in enumerate(bond_flags) if f} == cycle_bonds(5, edges)
