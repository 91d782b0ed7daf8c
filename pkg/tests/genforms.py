"""Deterministic random generators for terms, atoms, and formulas.

Used by the property/fuzz suites.  Everything is driven by a caller-supplied
numpy Generator so failures reproduce from the seed.
"""

from __future__ import annotations

import numpy as np

from ulpsat.lattice import BINARY32, BINARY64, CmpOp, FpScalar
from ulpsat.smt.ast import (
    Add,
    Assignment,
    Atom,
    BAnd,
    BAtom,
    BNot,
    BOr,
    Const,
    Div,
    Formula,
    Mul,
    Neg,
    Sub,
    Var,
)

_CMPS = [CmpOp.EQ, CmpOp.LE, CmpOp.LT, CmpOp.GE, CmpOp.GT]


def rand_value(rng, fmt, tame: bool = False) -> float:
    """Random finite value of the format, as a widened double."""
    r = rng.random()
    if r < 0.15:
        pool = [0.0, -0.0, 1.0, -1.0, 2.0, 0.5, fmt.smallest_normal, -fmt.smallest_normal]
        v = pool[rng.integers(len(pool))]
    elif r < 0.75 or tame:
        v = float(rng.normal() * 10.0 ** rng.integers(-3, 4))
    else:
        span = 30 if fmt is BINARY32 else 250
        v = float(rng.normal() * 10.0 ** rng.integers(-span, span))
    x = FpScalar.from_float(v, fmt)
    if not x.is_finite:
        return 1.0
    return x.to_float()


def rand_scalar(rng, fmt, tame: bool = False) -> FpScalar:
    return FpScalar.from_float(rand_value(rng, fmt, tame), fmt)


def rand_term(rng, names, fmt, depth: int, tame: bool = False):
    if depth <= 0 or rng.random() < 0.35:
        if names and rng.random() < 0.65:
            return Var(names[rng.integers(len(names))], fmt)
        return Const(rand_scalar(rng, fmt, tame))
    kind = rng.integers(5)
    if kind == 0:
        return Neg(rand_term(rng, names, fmt, depth - 1, tame))
    cls = (Add, Sub, Mul, Div)[kind - 1]
    return cls(
        rand_term(rng, names, fmt, depth - 1, tame),
        rand_term(rng, names, fmt, depth - 1, tame),
    )


def rand_atom(rng, names, fmt, depth: int = 2, tame: bool = False) -> Atom:
    op = _CMPS[rng.integers(len(_CMPS))]
    return Atom(
        rand_term(rng, names, fmt, depth, tame),
        rand_term(rng, names, fmt, depth, tame),
        op,
    )


def rand_bool_tree(rng, names, fmt, depth: int = 3, width: int = 3):
    """Random and/or/not tree over random atoms."""
    if depth <= 0 or rng.random() < 0.3:
        return BAtom(rand_atom(rng, names, fmt))
    r = rng.random()
    if r < 0.15:
        return BNot(rand_bool_tree(rng, names, fmt, depth - 1, width))
    kids = tuple(
        rand_bool_tree(rng, names, fmt, depth - 1, width)
        for _ in range(int(rng.integers(1, width + 1)))
    )
    return BAnd(kids) if r < 0.6 else BOr(kids)


def rand_formula(rng, n_vars: int = 3, n_clauses: int = 4, mixed: bool = True,
                 term_depth: int = 2, max_clause: int = 3, tame: bool = False) -> Formula:
    """Random CNF-shaped formula; per-variable format is random when mixed."""
    fmts = [
        BINARY32 if (mixed and rng.random() < 0.5) else BINARY64
        for _ in range(n_vars)
    ]
    variables = [(f"v{i}", fmts[i]) for i in range(n_vars)]
    by_fmt = {
        BINARY32: [n for n, f in variables if f is BINARY32],
        BINARY64: [n for n, f in variables if f is BINARY64],
    }
    clauses = []
    for _ in range(n_clauses):
        fmt = fmts[rng.integers(n_vars)]
        names = by_fmt[fmt]
        clause = tuple(
            rand_atom(rng, names, fmt, term_depth, tame)
            for _ in range(int(rng.integers(1, max_clause + 1)))
        )
        clauses.append(clause)
    return Formula(variables, clauses=clauses)


def rand_assignment(rng, formula, tame: bool = False) -> Assignment:
    return Assignment(
        [rand_scalar(rng, fmt, tame) for fmt in formula.formats]
    )


def _holding_atom(rng, names, fmt, env, depth: int, tame: bool) -> Atom:
    """Atom true under env, by anchoring a random term's computed value."""
    from ulpsat.lattice import from_index, to_index
    from ulpsat.smt.evaluator import term_value

    for _ in range(12):
        t = rand_term(rng, names, fmt, depth, tame)
        v = term_value(t, env)
        if np.isnan(v):
            continue
        sv = FpScalar.from_float(v, fmt)
        if not sv.is_finite:
            continue
        v = sv.to_float()
        kind = rng.integers(4)
        if kind == 0:
            return Atom(t, Const(sv), CmpOp.EQ)
        if kind == 1:
            op = CmpOp.LE if rng.random() < 0.5 else CmpOp.GE
            return Atom(t, Const(sv), op)
        # strict bound a few steps away from the value
        steps = int(rng.integers(1, 64))
        if kind == 2:
            bound = from_index(to_index(sv) + steps, fmt)
            return Atom(t, Const(bound), CmpOp.LT)
        bound = from_index(to_index(sv) - steps, fmt)
        return Atom(t, Const(bound), CmpOp.GT)
    return Atom(Const(FpScalar.finite(0.0, fmt)), Const(FpScalar.finite(1.0, fmt)), CmpOp.LE)


def planted_formula(rng, n_vars: int = 3, n_clauses: int = 5, mixed: bool = True,
                    term_depth: int = 1, max_clause: int = 3,
                    tame: bool = True) -> tuple[Formula, Assignment]:
    """Formula satisfiable by construction, with its planted model.

    Every clause contains at least one atom that holds at the planted
    point; the other disjuncts are unconstrained noise.
    """
    from ulpsat.smt.evaluator import environment

    fmts = [
        BINARY32 if (mixed and rng.random() < 0.5) else BINARY64
        for _ in range(n_vars)
    ]
    variables = [(f"v{i}", fmts[i]) for i in range(n_vars)]
    by_fmt = {
        BINARY32: [n for n, f in variables if f is BINARY32],
        BINARY64: [n for n, f in variables if f is BINARY64],
    }
    planted = Assignment([rand_scalar(rng, fmt, tame) for fmt in fmts])
    f_empty = Formula(variables, clauses=())
    env = environment(f_empty, planted)
    clauses = []
    for _ in range(n_clauses):
        fmt = fmts[rng.integers(n_vars)]
        atoms = [_holding_atom(rng, by_fmt[fmt], fmt, env, term_depth, tame)]
        for _ in range(int(rng.integers(0, max_clause))):
            nf = fmts[rng.integers(n_vars)]
            atoms.append(rand_atom(rng, by_fmt[nf], nf, term_depth, tame))
        rng.shuffle(atoms)
        clauses.append(tuple(atoms))
    return Formula(variables, clauses=clauses), planted


def unsat_formula(rng, n_vars: int = 3, n_clauses: int = 4, mixed: bool = True,
                  term_depth: int = 1, tame: bool = True) -> Formula:
    """Formula unsatisfiable by construction.

    A contradictory pair of unit clauses over one variable is planted among
    random noise clauses; the conjunction can never hold (NaN fails every
    comparison, so it offers no escape).
    """
    f = rand_formula(rng, n_vars, max(n_clauses - 2, 0) or 1, mixed,
                     term_depth, 2, tame)
    clauses = list(f.clauses) if f.clauses else []
    idx = int(rng.integers(n_vars))
    name, fmt = f"v{idx}", f.formats[idx]
    x = Var(name, fmt)
    c = Const(rand_scalar(rng, fmt, tame))
    pattern = rng.integers(3)
    if pattern == 0:
        pair = [(Atom(x, c, CmpOp.GT),), (Atom(x, c, CmpOp.LT),)]
    elif pattern == 1:
        pair = [(Atom(x, c, CmpOp.GE),), (Atom(x, c, CmpOp.LT),)]
    else:
        d = FpScalar.from_float(c.value.to_float() + 1.0, fmt)
        if not d.is_finite or d.to_float() == c.value.to_float():
            d = FpScalar.finite(0.0 if c.value.to_float() != 0.0 else 1.0, fmt)
        pair = [(Atom(x, c, CmpOp.EQ),), (Atom(x, Const(d), CmpOp.EQ),)]
    clauses.extend(pair)
    rng.shuffle(clauses)
    return Formula(list(zip([f"v{i}" for i in range(n_vars)], f.formats)),
                   clauses=[tuple(cl) for cl in clauses])
