"""Emission of formulas and models back to SMT-LIB 2 text."""

from __future__ import annotations

from ulpsat.lattice import CmpOp, FpScalar
from ulpsat.smt.ast import (
    Add,
    Assignment,
    Atom,
    BAnd,
    BAtom,
    BConst,
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

__all__ = ["emit_smt2", "format_model", "format_scalar"]

_CMP_NAMES = {
    CmpOp.EQ: "fp.eq",
    CmpOp.LE: "fp.leq",
    CmpOp.LT: "fp.lt",
    CmpOp.GE: "fp.geq",
    CmpOp.GT: "fp.gt",
}

_SIMPLE_SYMBOL = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789~!@$%^&*_-+=<>.?/")


def _symbol(name: str) -> str:
    if name and set(name) <= _SIMPLE_SYMBOL and not name[0].isdigit():
        return name
    return f"|{name}|"


def format_scalar(x: FpScalar) -> str:
    """Bit-exact fp literal: (fp #b<sign> #b<exp> #b<sig>)."""
    sign, exp, sig = x.bit_fields()
    return f"(fp #b{sign} #b{exp} #b{sig})"


def _term(t: Term) -> str:
    if isinstance(t, Var):
        return _symbol(t.name)
    if isinstance(t, Const):
        return format_scalar(t.value)
    if isinstance(t, Neg):
        return f"(fp.neg {_term(t.arg)})"
    op = {Add: "fp.add", Sub: "fp.sub", Mul: "fp.mul", Div: "fp.div"}[type(t)]
    return f"({op} RNE {_term(t.lhs)} {_term(t.rhs)})"


def _atom(a: Atom) -> str:
    return f"({_CMP_NAMES[a.op]} {_term(a.lhs)} {_term(a.rhs)})"


def _bool_node(node) -> str:
    if isinstance(node, BAtom):
        return _atom(node.atom)
    if isinstance(node, BAnd):
        return "(and " + " ".join(_bool_node(c) for c in node.children) + ")"
    if isinstance(node, BOr):
        return "(or " + " ".join(_bool_node(c) for c in node.children) + ")"
    if isinstance(node, BConst):
        return "true" if node.value else "false"
    raise TypeError(f"cannot emit {node!r}")


def emit_smt2(f: Formula) -> str:
    """Formula back to SMT-LIB text; reparsing yields a structurally equal Formula."""
    lines = ["(set-logic QF_FP)"]
    for name, fmt in f.variables:
        lines.append(
            f"(declare-fun {_symbol(name)} () (_ FloatingPoint {fmt.exp_bits} {fmt.sig_bits}))"
        )
    if f.clauses is not None:
        for clause in f.clauses:
            body = _atom(clause[0]) if len(clause) == 1 else (
                "(or " + " ".join(_atom(a) for a in clause) + ")"
            )
            lines.append(f"(assert {body})")
    else:
        lines.append(f"(assert {_bool_node(f.nnf)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def format_model(f: Formula, a: Assignment) -> str:
    """Model block with one bit-exact define-fun per variable."""
    lines = ["(model"]
    for (name, fmt), value in zip(f.variables, a):
        lines.append(
            f"  (define-fun {_symbol(name)} () "
            f"(_ FloatingPoint {fmt.exp_bits} {fmt.sig_bits}) {format_scalar(value)})"
        )
    lines.append(")")
    return "\n".join(lines)
