"""Bit-exact IEEE-754 RNE evaluation of terms and formulas.

This is the ground-truth path used to validate every model before it is
emitted.  Binary64 nodes ride on the host double arithmetic directly;
binary32 nodes compute in double and round each intermediate result to
single precision, which is exact for add/sub/mul/div because double
precision is more than twice as wide as single.
"""

from __future__ import annotations

import math
from typing import Mapping

from ulpsat.lattice import BINARY32, CmpOp, FpScalar, round_to_float32
from ulpsat.smt.ast import (
    Add,
    Assignment,
    Atom,
    BAnd,
    BAtom,
    BConst,
    BNot,
    BOr,
    Const,
    Div,
    Formula,
    Mul,
    Neg,
    Sub,
    Term,
    Var,
)

__all__ = ["atom_holds", "environment", "eval_term", "is_model", "term_value"]


def environment(f: Formula, a: Assignment) -> dict[str, float]:
    """Name-to-double mapping for an assignment aligned with f.variables."""
    if len(a) != len(f.variables):
        raise ValueError(f"assignment has {len(a)} entries for {len(f.variables)} variables")
    return {name: a[i].to_float() for i, (name, _) in enumerate(f.variables)}


def _ieee_div(num: float, den: float) -> float:
    if den == 0.0:
        # CPython raises on zero denominators; apply IEEE rules by hand
        if math.isnan(num) or num == 0.0:
            return math.nan
        sign = math.copysign(1.0, num) * math.copysign(1.0, den)
        return math.copysign(math.inf, sign)
    return num / den


def term_value(t: Term, env: Mapping[str, float]) -> float:
    """Value of t as a double; binary32 results are exact widened singles."""
    if isinstance(t, Var):
        return env[t.name]
    if isinstance(t, Const):
        return t.value.to_float()
    if isinstance(t, Neg):
        return -term_value(t.arg, env)
    a = term_value(t.lhs, env)
    b = term_value(t.rhs, env)
    if isinstance(t, Add):
        r = a + b
    elif isinstance(t, Sub):
        r = a - b
    elif isinstance(t, Mul):
        r = a * b
    elif isinstance(t, Div):
        r = _ieee_div(a, b)
    else:
        raise TypeError(f"not a term: {t!r}")
    return round_to_float32(r) if t.fmt is BINARY32 else r


def eval_term(t: Term, env: Mapping[str, float]) -> FpScalar:
    """Exact IEEE-754 RNE evaluation in the node's format."""
    return FpScalar.from_float(term_value(t, env), t.fmt)


def atom_holds(atom: Atom, env: Mapping[str, float]) -> bool:
    """IEEE comparison of the atom's sides; NaN is unordered, +0 equals -0."""
    a = term_value(atom.lhs, env)
    b = term_value(atom.rhs, env)
    op = atom.op
    if op is CmpOp.EQ:
        return a == b
    if op is CmpOp.LE:
        return a <= b
    if op is CmpOp.LT:
        return a < b
    if op is CmpOp.GE:
        return a >= b
    return a > b


def _nnf_holds(node, env) -> bool:
    if isinstance(node, BAtom):
        return atom_holds(node.atom, env)
    if isinstance(node, BAnd):
        return all(_nnf_holds(c, env) for c in node.children)
    if isinstance(node, BOr):
        return any(_nnf_holds(c, env) for c in node.children)
    if isinstance(node, BConst):
        return node.value
    if isinstance(node, BNot):
        return not _nnf_holds(node.child, env)
    raise TypeError(f"not a boolean node: {node!r}")


def is_model(f: Formula, a: Assignment) -> bool:
    """True iff every clause has a satisfied atom at the assignment."""
    env = environment(f, a)
    if f.clauses is not None:
        return all(any(atom_holds(atom, env) for atom in clause) for clause in f.clauses)
    return _nnf_holds(f.nnf, env)
