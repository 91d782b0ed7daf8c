"""Typed formula representation and normalization to clause form.

Terms are immutable trees over FP variables and constants; atoms compare two
terms of the same format.  A parsed assertion set is normalized to negation
normal form and, when the distribution guard allows, to a CNF clause list.
Oversized distributions keep the NNF tree instead; downstream objective
evaluation handles both shapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

from ulpsat.lattice import BINARY64, CmpOp, FpFormat, FpScalar

__all__ = [
    "Add",
    "Assignment",
    "Atom",
    "BAnd",
    "BAtom",
    "BConst",
    "BNot",
    "BOr",
    "BoolNode",
    "ClauseExplosionError",
    "Const",
    "Div",
    "Formula",
    "Mul",
    "Neg",
    "Sub",
    "Term",
    "Var",
    "normalize",
]

CLAUSE_GUARD = 10_000


@dataclass(frozen=True)
class Var:
    name: str
    fmt: FpFormat


@dataclass(frozen=True)
class Const:
    value: FpScalar

    @property
    def fmt(self) -> FpFormat:
        return self.value.fmt


@dataclass(frozen=True)
class Neg:
    arg: "Term"

    @property
    def fmt(self) -> FpFormat:
        return self.arg.fmt


class _BinBase:
    lhs: "Term"
    rhs: "Term"

    def __post_init__(self):
        if self.lhs.fmt is not self.rhs.fmt:
            raise ValueError(
                f"operand formats differ: {self.lhs.fmt.name} vs {self.rhs.fmt.name}"
            )

    @property
    def fmt(self) -> FpFormat:
        return self.lhs.fmt


@dataclass(frozen=True)
class Add(_BinBase):
    lhs: "Term"
    rhs: "Term"


@dataclass(frozen=True)
class Sub(_BinBase):
    lhs: "Term"
    rhs: "Term"


@dataclass(frozen=True)
class Mul(_BinBase):
    lhs: "Term"
    rhs: "Term"


@dataclass(frozen=True)
class Div(_BinBase):
    lhs: "Term"
    rhs: "Term"


Term = Union[Var, Const, Neg, Add, Sub, Mul, Div]


@dataclass(frozen=True)
class Atom:
    """Comparison of two same-format terms: lhs <op> rhs."""

    lhs: Term
    rhs: Term
    op: CmpOp

    def __post_init__(self):
        if self.lhs.fmt is not self.rhs.fmt:
            raise ValueError(
                f"atom operand formats differ: {self.lhs.fmt.name} vs {self.rhs.fmt.name}"
            )

    @property
    def fmt(self) -> FpFormat:
        return self.lhs.fmt


# Boolean structure above atoms (input shape, before normalization).


@dataclass(frozen=True)
class BAtom:
    atom: Atom


@dataclass(frozen=True)
class BAnd:
    children: tuple


@dataclass(frozen=True)
class BOr:
    children: tuple


@dataclass(frozen=True)
class BNot:
    child: "BoolNode"


@dataclass(frozen=True)
class BConst:
    value: bool


BoolNode = Union[BAtom, BAnd, BOr, BNot, BConst]


class ClauseExplosionError(Exception):
    """Raised when CNF distribution would exceed the clause guard."""

    def __init__(self, count: int, guard: int):
        super().__init__(
            f"CNF distribution would produce {count} clauses (guard {guard}); "
            "evaluate the formula in NNF mode instead"
        )
        self.count = count
        self.guard = guard


_NEG_CMP = {
    CmpOp.LE: CmpOp.GT,
    CmpOp.LT: CmpOp.GE,
    CmpOp.GE: CmpOp.LT,
    CmpOp.GT: CmpOp.LE,
}

# canonical always-false atom, used to keep clauses nonempty
_ZERO = Const(FpScalar.from_float(0.0, BINARY64))
FALSE_ATOM = Atom(_ZERO, _ZERO, CmpOp.LT)


def _to_nnf(node: BoolNode, negate: bool) -> BoolNode:
    """Push negations to the leaves and rewrite negated atoms positively."""
    if isinstance(node, BConst):
        return BConst(node.value ^ negate)
    if isinstance(node, BNot):
        return _to_nnf(node.child, not negate)
    if isinstance(node, BAnd):
        kids = tuple(_to_nnf(c, negate) for c in node.children)
        return BOr(kids) if negate else BAnd(kids)
    if isinstance(node, BOr):
        kids = tuple(_to_nnf(c, negate) for c in node.children)
        return BAnd(kids) if negate else BOr(kids)
    if not negate:
        return node
    atom = node.atom
    if atom.op is CmpOp.EQ:
        # finite floats are totally ordered, so not-equal splits into two
        return BOr((BAtom(Atom(atom.lhs, atom.rhs, CmpOp.LT)),
                    BAtom(Atom(atom.lhs, atom.rhs, CmpOp.GT))))
    return BAtom(Atom(atom.lhs, atom.rhs, _NEG_CMP[atom.op]))


def _simplify(node: BoolNode) -> BoolNode:
    """Flatten nested conjunctions/disjunctions and fold boolean constants."""
    if isinstance(node, (BAtom, BConst)):
        return node
    flat = []
    if isinstance(node, BAnd):
        for child in map(_simplify, node.children):
            if isinstance(child, BConst):
                if not child.value:
                    return BConst(False)
            elif isinstance(child, BAnd):
                flat.extend(child.children)
            else:
                flat.append(child)
        if not flat:
            return BConst(True)
        return flat[0] if len(flat) == 1 else BAnd(tuple(flat))
    for child in map(_simplify, node.children):
        if isinstance(child, BConst):
            if child.value:
                return BConst(True)
        elif isinstance(child, BOr):
            flat.extend(child.children)
        else:
            flat.append(child)
    if not flat:
        return BConst(False)
    return flat[0] if len(flat) == 1 else BOr(tuple(flat))


def _clause_count(node: BoolNode) -> int:
    if isinstance(node, (BAtom, BConst)):
        return 1
    if isinstance(node, BAnd):
        return sum(_clause_count(c) for c in node.children)
    total = 1
    for c in node.children:
        total *= _clause_count(c)
    return total


def _distribute(node: BoolNode) -> list:
    """NNF tree to a list of clauses (each a list of atoms)."""
    if isinstance(node, BAtom):
        return [[node.atom]]
    if isinstance(node, BConst):
        return [] if node.value else [[FALSE_ATOM]]
    if isinstance(node, BAnd):
        out = []
        for c in node.children:
            out.extend(_distribute(c))
        return out
    clauses = [[]]
    for c in node.children:
        clauses = [done + extra for done in clauses for extra in _distribute(c)]
    return clauses


def _dedupe_clauses(raw: list) -> list:
    out, seen = [], set()
    for clause in raw:
        atoms, local = [], set()
        for a in clause:
            if a not in local:
                local.add(a)
                atoms.append(a)
        key = frozenset(atoms)
        if key not in seen:
            seen.add(key)
            out.append(tuple(atoms))
    return out


def normalize(
    raw_tree: BoolNode,
    variables: Sequence[tuple[str, FpFormat]],
    guard: int = CLAUSE_GUARD,
) -> "Formula":
    """Normalize a boolean tree over atoms into a clause-form Formula.

    Raises ClauseExplosionError when distribution would exceed the guard;
    callers may then fall back to an NNF-mode Formula via `nnf_formula`.
    """
    tree = _simplify(_to_nnf(raw_tree, False))
    count = _clause_count(tree)
    if count > guard:
        raise ClauseExplosionError(count, guard)
    if isinstance(tree, BConst) and tree.value:
        return Formula(variables, clauses=())
    return Formula(variables, clauses=_dedupe_clauses(_distribute(tree)))


def nnf_formula(raw_tree: BoolNode, variables: Sequence[tuple[str, FpFormat]]) -> "Formula":
    """Build an NNF-mode Formula (used when CNF distribution would explode)."""
    tree = _simplify(_to_nnf(raw_tree, False))
    if isinstance(tree, BConst):
        if tree.value:
            return Formula(variables, clauses=())
        return Formula(variables, clauses=((FALSE_ATOM,),))
    return Formula(variables, nnf=tree)


class Formula:
    """Normalized constraint set over FP atoms.

    Exactly one representation is populated: `clauses` (a conjunction of
    atom disjunctions; the common case) or `nnf` (an arbitrary and/or tree
    with positive atoms, kept when distribution would explode).  Variable
    order is fixed at construction and defines the assignment layout.
    """

    __slots__ = ("variables", "clauses", "nnf", "var_index", "formats")

    def __init__(self, variables, clauses=None, nnf=None):
        if (clauses is None) == (nnf is None):
            raise ValueError("exactly one of clauses/nnf must be given")
        self.variables: tuple = tuple((str(n), f) for n, f in variables)
        self.clauses: Optional[tuple] = (
            tuple(tuple(c) for c in clauses) if clauses is not None else None
        )
        self.nnf: Optional[BoolNode] = nnf
        self.var_index = {name: i for i, (name, _) in enumerate(self.variables)}
        self.formats = tuple(fmt for _, fmt in self.variables)
        if len(self.var_index) != len(self.variables):
            raise ValueError("duplicate variable names")
        if self.clauses is not None and any(len(c) == 0 for c in self.clauses):
            raise ValueError("clauses must be nonempty")

    @property
    def is_cnf(self) -> bool:
        return self.clauses is not None

    @property
    def dim(self) -> int:
        return len(self.variables)

    def atoms(self) -> Iterator[Atom]:
        if self.clauses is not None:
            for clause in self.clauses:
                yield from clause
        else:
            stack = [self.nnf]
            while stack:
                node = stack.pop()
                if isinstance(node, BAtom):
                    yield node.atom
                elif isinstance(node, (BAnd, BOr)):
                    stack.extend(node.children)

    def constants(self) -> list[FpScalar]:
        """Finite constants appearing in the formula, in first-seen order."""
        seen, out = set(), []
        for atom in self.atoms():
            stack = [atom.lhs, atom.rhs]
            while stack:
                t = stack.pop()
                if isinstance(t, Const):
                    if t.value.is_finite and t.value not in seen:
                        seen.add(t.value)
                        out.append(t.value)
                elif isinstance(t, Neg):
                    stack.append(t.arg)
                elif isinstance(t, (Add, Sub, Mul, Div)):
                    stack.extend((t.lhs, t.rhs))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, Formula)
            and self.variables == other.variables
            and self.clauses == other.clauses
            and self.nnf == other.nnf
        )

    def __hash__(self):
        return hash((self.variables, self.clauses, self.nnf))

    def __repr__(self):
        shape = f"{len(self.clauses)} clauses" if self.is_cnf else "nnf"
        return f"Formula({len(self.variables)} vars, {shape})"


class Assignment:
    """Finite FP values aligned with a Formula's variable order."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[FpScalar]):
        vals = tuple(values)
        for v in vals:
            if not v.is_finite:
                raise ValueError(f"assignment entries must be finite, got {v!r}")
        self.values = vals

    @classmethod
    def from_doubles(cls, doubles: Sequence[float], formats: Sequence[FpFormat]) -> "Assignment":
        return cls([FpScalar.finite(d, f) for d, f in zip(doubles, formats)])

    def to_doubles(self) -> list[float]:
        return [v.to_float() for v in self.values]

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __eq__(self, other):
        return isinstance(other, Assignment) and self.values == other.values

    def __repr__(self):
        return f"Assignment({[v.to_float() for v in self.values]!r})"
