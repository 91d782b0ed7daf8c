"""Independent oracles used by the test suite.

Everything here is deliberately written against the IEEE-754 semantics
directly — nextafter scans, numpy single/double hardware arithmetic — and
shares no code with the library's lattice or evaluator implementations.
"""

from __future__ import annotations

import math

import numpy as np


def next_toward32(value: float, direction: float) -> float:
    """One binary32 lattice step from value toward direction, as a double."""
    return float(np.nextafter(np.float32(value), np.float32(direction)))


def next_toward64(value: float, direction: float) -> float:
    return math.nextafter(value, direction)


def brute_steps_eq(a: float, b: float, *, bits32: bool, cap: int = 10**6) -> int:
    """Steps from a to b counted by repeated nextafter; IEEE == is the stop test."""
    step = next_toward32 if bits32 else next_toward64
    x, n = a, 0
    while x != b:
        if n >= cap:
            raise RuntimeError("oracle step cap exceeded")
        x = step(x, b)
        n += 1
    return n


def brute_steps_cmp(a: float, b: float, op: str, *, bits32: bool, cap: int = 10**6) -> int:
    """Minimal steps moving a until `a op b` holds, counted by nextafter scan."""
    holds = {
        "le": lambda x, y: x <= y,
        "lt": lambda x, y: x < y,
        "ge": lambda x, y: x >= y,
        "gt": lambda x, y: x > y,
    }[op]
    toward = -math.inf if op in ("le", "lt") else math.inf
    step = next_toward32 if bits32 else next_toward64
    x, n = a, 0
    while not holds(x, b):
        if n >= cap:
            raise RuntimeError("oracle step cap exceeded")
        x = step(x, toward)
        n += 1
    return n


# ---------------------------------------------------------------------------
# Independent term/formula evaluation on numpy scalar arithmetic.  The
# library's evaluator computes binary32 through double rounding; this one
# uses hardware single-precision ops directly, so agreement is meaningful.

from ulpsat.lattice import BINARY32  # noqa: E402
from ulpsat.smt import ast as A  # noqa: E402


def np_term_value(t, env):
    """Evaluate a term with numpy scalars in the term's own precision."""
    ty = np.float32 if t.fmt is BINARY32 else np.float64
    with np.errstate(all="ignore"):
        return float(_np_eval(t, env, ty))


def _np_eval(t, env, ty):
    if isinstance(t, A.Var):
        return ty(env[t.name])
    if isinstance(t, A.Const):
        return ty(t.value.to_float())
    if isinstance(t, A.Neg):
        return -_np_eval(t.arg, env, ty)
    a = _np_eval(t.lhs, env, ty)
    b = _np_eval(t.rhs, env, ty)
    if isinstance(t, A.Add):
        return a + b
    if isinstance(t, A.Sub):
        return a - b
    if isinstance(t, A.Mul):
        return a * b
    if isinstance(t, A.Div):
        return a / b
    raise TypeError(t)


def np_atom_holds(atom, env):
    a = np_term_value(atom.lhs, env)
    b = np_term_value(atom.rhs, env)
    return {
        "eq": a == b, "le": a <= b, "lt": a < b, "ge": a >= b, "gt": a > b,
    }[atom.op.value]


def np_tree_holds(node, env):
    """Truth of a raw boolean tree (including negations) at an assignment."""
    if isinstance(node, A.BAtom):
        return np_atom_holds(node.atom, env)
    if isinstance(node, A.BAnd):
        return all(np_tree_holds(c, env) for c in node.children)
    if isinstance(node, A.BOr):
        return any(np_tree_holds(c, env) for c in node.children)
    if isinstance(node, A.BNot):
        return not np_tree_holds(node.child, env)
    if isinstance(node, A.BConst):
        return node.value
    raise TypeError(node)


def np_is_model(formula, assignment):
    env = {name: assignment[i].to_float() for i, (name, _) in enumerate(formula.variables)}
    if formula.clauses is not None:
        return all(any(np_atom_holds(a, env) for a in cl) for cl in formula.clauses)
    return np_tree_holds(formula.nnf, env)
