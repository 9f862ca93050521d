"""SMILES parsing into a plain atom/bond graph.

Supported grammar: the organic subset (B C N O P S F Cl Br I and the
aromatic lowercase forms b c n o p s), bracket atoms with isotope, element,
chirality (discarded), H count and charge, branches, ring closures ``0-9``
and ``%nn``, and the bond symbols ``- = # :``. Directional bonds ``/`` and
``\\`` are accepted and read as single bonds. Dot-separated multi-component
inputs are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Atom",
    "Bond",
    "Molecule",
    "SmilesError",
    "EmptyInput",
    "UnknownToken",
    "UnmatchedParenthesis",
    "UnmatchedRingClosure",
    "MultiComponentUnsupported",
    "parse_smiles",
    "implicit_h_count",
    "ring_flags",
    "ELEMENTS",
]

# fmt: off
_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co "
    "Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb "
    "Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os "
    "Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md "
    "No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()
# fmt: on

ELEMENTS: dict[str, int] = {sym: z for z, sym in enumerate(_SYMBOLS, start=1)}
SYMBOL_OF: dict[int, str] = {z: sym for sym, z in ELEMENTS.items()}

AROMATIC_ALLOWED = frozenset(ELEMENTS[s] for s in ("B", "C", "N", "O", "P", "S", "Se", "As"))

_ORGANIC = {"B": 5, "C": 6, "N": 7, "O": 8, "P": 15, "S": 16, "F": 9, "Cl": 17, "Br": 35, "I": 53}
_ORGANIC_AROMATIC = {"b": 5, "c": 6, "n": 7, "o": 8, "p": 15, "s": 16}
_BRACKET_AROMATIC = {"b": 5, "c": 6, "n": 7, "o": 8, "p": 15, "s": 16, "se": 34, "as": 33}

DEFAULT_VALENCES: dict[int, tuple[int, ...]] = {
    5: (3,), 6: (4,), 7: (3,), 8: (2,), 15: (3, 5), 16: (2, 4, 6),
    9: (1,), 17: (1,), 35: (1,), 53: (1,),
}

SINGLE, DOUBLE, TRIPLE, AROMATIC = "single", "double", "triple", "aromatic"
BOND_ORDER_VALUE = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}
_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC, "/": SINGLE, "\\": SINGLE}


class SmilesError(ValueError):
    """Base class for parse failures; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EmptyInput(SmilesError):
    pass


class UnknownToken(SmilesError):
    pass


class UnmatchedParenthesis(SmilesError):
    pass


class UnmatchedRingClosure(SmilesError):
    pass


class MultiComponentUnsupported(SmilesError):
    pass


@dataclass(frozen=True)
class Atom:
    element: int
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int | None = None
    isotope: int | None = None
    bracket: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.element <= 118:
            raise ValueError(f"invalid atomic number {self.element}")
        if self.aromatic and self.element not in AROMATIC_ALLOWED:
            raise ValueError(f"element {self.element} cannot be aromatic")
        if self.explicit_h is not None and self.explicit_h < 0:
            raise ValueError("explicit_h must be >= 0")
        if not -15 <= self.formal_charge <= 15:
            raise ValueError("formal_charge out of range")

    @property
    def symbol(self) -> str:
        return SYMBOL_OF[self.element]


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: str

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.begin, self.end)


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_smiles: str

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen = set()
        for b in self.bonds:
            if b.begin == b.end or not (0 <= b.begin < n and 0 <= b.end < n):
                raise ValueError(f"bad bond endpoints {b.endpoints}")
            key = frozenset(b.endpoints)
            if key in seen:
                raise ValueError(f"duplicate bond {b.endpoints}")
            seen.add(key)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, index: int) -> list[tuple[int, Bond]]:
        """(neighbor index, bond) pairs for one atom, in bond order."""
        out = []
        for b in self.bonds:
            if b.begin == index:
                out.append((b.end, b))
            elif b.end == index:
                out.append((b.begin, b))
        return out

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-atom list of (neighbor, bond index)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for k, b in enumerate(self.bonds):
            adj[b.begin].append((b.end, k))
            adj[b.end].append((b.begin, k))
        return adj


class _Parser:
    def __init__(self, text: str) -> None:
        self.s = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.bonds: list[Bond] = []
        self._pairs: set[frozenset[int]] = set()
        # ring digit -> (atom index, bond symbol or None, offset)
        self.rings: dict[int, tuple[int, str | None, int]] = {}

    def error(self, cls: type[SmilesError], message: str, offset: int | None = None) -> SmilesError:
        return cls(message, self.pos if offset is None else offset)

    def parse(self) -> Molecule:
        s = self.s
        prev: int | None = None
        pending_bond: str | None = None
        branch_stack: list[tuple[int, int]] = []  # (atom index, offset of "(")
        while self.pos < len(s):
            ch = s[self.pos]
            if ch == "(":
                if prev is None or pending_bond is not None:
                    raise self.error(UnknownToken, "branch without preceding atom")
                branch_stack.append((prev, self.pos))
                self.pos += 1
                if self.pos >= len(s):
                    raise self.error(UnmatchedParenthesis, "unclosed branch", self.pos - 1)
            elif ch == ")":
                if not branch_stack:
                    raise self.error(UnmatchedParenthesis, "unexpected ')'")
                if pending_bond is not None or s[self.pos - 1] == "(":
                    raise self.error(UnknownToken, "empty branch or dangling bond")
                prev = branch_stack.pop()[0]
                self.pos += 1
            elif ch in _BOND_SYMBOLS:
                if prev is None or pending_bond is not None:
                    raise self.error(UnknownToken, f"misplaced bond symbol {ch!r}")
                pending_bond = ch
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise self.error(UnknownToken, "ring closure before any atom")
                start = self.pos
                if ch == "%":
                    digits = s[self.pos + 1 : self.pos + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        raise self.error(UnknownToken, "malformed %nn ring closure")
                    num = int(digits)
                    self.pos += 3
                else:
                    num = int(ch)
                    self.pos += 1
                self._ring(prev, num, pending_bond, start)
                pending_bond = None
            elif ch == ".":
                raise self.error(MultiComponentUnsupported, "multi-component SMILES")
            else:
                idx = self._atom()
                if prev is not None:
                    self._bond(prev, idx, pending_bond)
                elif pending_bond is not None:
                    raise self.error(UnknownToken, "bond before first atom")
                pending_bond = None
                prev = idx
        if branch_stack:
            raise UnmatchedParenthesis("unclosed branch", branch_stack[-1][1])
        if pending_bond is not None:
            raise self.error(UnknownToken, "dangling bond at end", len(s) - 1)
        if self.rings:
            offset = min(v[2] for v in self.rings.values())
            raise UnmatchedRingClosure("unclosed ring", offset)
        return Molecule(tuple(self.atoms), tuple(self.bonds), self.s)

    def _order(self, symbol: str | None, a: int, b: int) -> str:
        if symbol is not None:
            return _BOND_SYMBOLS[symbol]
        if self.atoms[a].aromatic and self.atoms[b].aromatic:
            return AROMATIC
        return SINGLE

    def _bond(self, a: int, b: int, symbol: str | None, offset: int | None = None) -> None:
        key = frozenset((a, b))
        if a == b or key in self._pairs:
            raise self.error(UnmatchedRingClosure, "ring closure duplicates a bond", offset)
        self._pairs.add(key)
        self.bonds.append(Bond(a, b, self._order(symbol, a, b)))

    def _ring(self, atom: int, num: int, symbol: str | None, offset: int) -> None:
        if num in self.rings:
            other, other_symbol, _ = self.rings.pop(num)
            if symbol is not None and other_symbol is not None and (
                _BOND_SYMBOLS[symbol] != _BOND_SYMBOLS[other_symbol]
            ):
                raise UnmatchedRingClosure("conflicting ring bond symbols", offset)
            self._bond(other, atom, symbol or other_symbol, offset)
        else:
            self.rings[num] = (atom, symbol, offset)

    def _atom(self) -> int:
        s, start = self.s, self.pos
        if s[start] == "[":
            atom = self._bracket_atom()
        else:
            two = s[start : start + 2]
            if two in ("Cl", "Br"):
                atom = Atom(_ORGANIC[two])
                self.pos += 2
            elif s[start] in _ORGANIC:
                atom = Atom(_ORGANIC[s[start]])
                self.pos += 1
            elif s[start] in _ORGANIC_AROMATIC:
                atom = Atom(_ORGANIC_AROMATIC[s[start]], aromatic=True)
                self.pos += 1
            elif s[start] == "]":
                raise self.error(UnknownToken, "unexpected ']'")
            else:
                raise self.error(UnknownToken, f"unknown token {s[start]!r}")
        self.atoms.append(atom)
        return len(self.atoms) - 1

    def _bracket_atom(self) -> Atom:
        s, open_at = self.s, self.pos
        close = s.find("]", open_at)
        if close < 0:
            raise self.error(UnknownToken, "unclosed bracket atom")
        body = s[open_at + 1 : close]
        i = 0

        def fail(msg: str) -> SmilesError:
            return UnknownToken(msg, open_at + 1 + i)

        isotope = None
        j = i
        while j < len(body) and body[j].isdigit():
            j += 1
        if j > i:
            isotope = int(body[i:j])
            i = j
        aromatic = False
        element = None
        for width in (2, 1):
            tok = body[i : i + width]
            if len(tok) != width:
                continue
            if tok in ELEMENTS:
                element = ELEMENTS[tok]
                break
            if tok in _BRACKET_AROMATIC:
                element = _BRACKET_AROMATIC[tok]
                aromatic = True
                break
        if element is None:
            raise fail("unknown element in bracket atom")
        i += width
        while i < len(body) and body[i] == "@":
            i += 1
        if i < len(body) and body[i : i + 2] in ("TH", "AL", "SP", "TB", "OH"):
            i += 2
            while i < len(body) and body[i].isdigit():
                i += 1
        h = 0
        if i < len(body) and body[i] == "H":
            i += 1
            h = 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            if j > i:
                h = int(body[i:j])
                i = j
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            ch = body[i]
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            if j > i:
                charge = sign * int(body[i:j])
                i = j
            else:
                count = 1
                while i < len(body) and body[i] == ch:
                    count += 1
                    i += 1
                charge = sign * count
        if i < len(body) and body[i] == ":":
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            if j == i:
                raise fail("missing atom-class number")
            i = j
        if i != len(body):
            raise fail("unexpected characters in bracket atom")
        self.pos = close + 1
        try:
            return Atom(element, aromatic, charge, h, isotope, bracket=True)
        except ValueError as exc:
            raise UnknownToken(str(exc), open_at) from None


def parse_smiles(text: str) -> Molecule:
    """Parse a single-component SMILES string.

    Atoms are numbered in reading order. Raises a ``SmilesError`` subclass
    carrying the byte offset of the problem.
    """
    if not text:
        raise EmptyInput("empty SMILES", 0)
    if not text.isascii():
        bad = next(i for i, c in enumerate(text) if not c.isascii())
        raise UnknownToken("non-ASCII character", bad)
    ws = next((i for i, c in enumerate(text) if c.isspace()), None)
    if ws is not None:
        raise UnknownToken("whitespace in SMILES", ws)
    return _Parser(text).parse()


def bond_order_sum(m: Molecule, index: int) -> float:
    return sum(BOND_ORDER_VALUE[b.order] for _, b in m.neighbors(index))


def implicit_h_count(m: Molecule, atom_index: int) -> int:
    """Hydrogens not written as graph atoms.

    Bracket atoms carry their H count explicitly. Organic-subset atoms fill
    up to the smallest default valence that covers the bond-order sum
    (aromatic bonds count 1.5); aromatic atoms always use their lowest
    default valence.
    """
    atom = m.atoms[atom_index]
    if atom.bracket:
        return atom.explicit_h or 0
    valences = DEFAULT_VALENCES.get(atom.element)
    if valences is None:
        return 0
    total = bond_order_sum(m, atom_index)
    if atom.aromatic:
        valence = valences[0]
    else:
        valence = next((v for v in valences if v >= total), valences[-1])
    return max(0, math.floor(valence - total))


def ring_flags(m: Molecule) -> tuple[list[bool], list[bool]]:
    """Per-atom and per-bond ring membership.

    A bond is in a ring iff it is not a bridge; an atom is in a ring iff it
    touches a ring bond. Bridges are found with an iterative Tarjan low-link
    search.
    """
    n = len(m.atoms)
    adj = m.adjacency()
    disc = [-1] * n
    low = [0] * n
    is_bridge = [False] * len(m.bonds)
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        # frames: (node, bond index used to reach it, iterator position)
        stack = [(root, -1, 0)]
        while stack:
            node, via, k = stack[-1]
            if k < len(adj[node]):
                stack[-1] = (node, via, k + 1)
                nbr, bidx = adj[node][k]
                if bidx == via:
                    continue
                if disc[nbr] == -1:
                    disc[nbr] = low[nbr] = timer
                    timer += 1
                    stack.append((nbr, bidx, 0))
                else:
                    low[node] = min(low[node], disc[nbr])
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        is_bridge[via] = True
    bond_in_ring = [not br for br in is_bridge]
    atom_in_ring = [False] * n
    for k, b in enumerate(m.bonds):
        if bond_in_ring[k]:
            atom_in_ring[b.begin] = atom_in_ring[b.end] = True
    return atom_in_ring, bond_in_ring
