"""Compilation of formulas into flat array programs for the evaluation kernels.

A formula becomes three tables:

  * term instructions: a register machine over double slots (SSA form with
    common-subexpression sharing), each instruction tagged with whether its
    result must be rounded to binary32;
  * an atom table: pairs of term slots plus a comparison code and a format
    flag, evaluated once per point regardless of how many clauses share the
    atom;
  * an aggregation program: postfix fold instructions over a value stack
    (PUSH an atom's measure, OR-fold k values by product, AND-fold k values
    by sum), which represents clause lists and NNF trees uniformly.

Both the compiled and the pure-Python kernel backends execute these arrays
with bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ulpsat.lattice import BINARY32, CmpOp
from ulpsat.smt.ast import (
    Add,
    BAnd,
    BAtom,
    BOr,
    Const,
    Div,
    Formula,
    Mul,
    Neg,
    Sub,
    Var,
)

__all__ = ["CompiledProgram", "compile_formula"]

# term instruction opcodes
OP_VAR, OP_CONST, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV = range(7)

# aggregation opcodes
AGG_PUSH, AGG_OR, AGG_AND = range(3)

# comparison codes shared with the kernels
CMP_CODE = {CmpOp.EQ: 0, CmpOp.LE: 1, CmpOp.LT: 2, CmpOp.GE: 3, CmpOp.GT: 4}


@dataclass(frozen=True)
class CompiledProgram:
    """Flat arrays executed by the kernels; see module docstring."""

    term_op: np.ndarray  # int32[n_instr]
    term_a: np.ndarray  # int32[n_instr], slot / var index / const index
    term_b: np.ndarray  # int32[n_instr], second slot or -1
    term_f32: np.ndarray  # uint8[n_instr], round result to binary32
    consts: np.ndarray  # float64[n_consts]
    atom_lhs: np.ndarray  # int32[n_atoms], term slot
    atom_rhs: np.ndarray  # int32[n_atoms]
    atom_cmp: np.ndarray  # int32[n_atoms], CMP_CODE value
    atom_f32: np.ndarray  # uint8[n_atoms], binary32 comparison
    agg_op: np.ndarray  # int32[n_agg]
    agg_arg: np.ndarray  # int32[n_agg], atom index or fold arity
    var_f32: np.ndarray  # uint8[n_vars]
    n_slots: int
    stack_need: int

    @property
    def n_vars(self) -> int:
        return len(self.var_f32)

    @property
    def n_atoms(self) -> int:
        return len(self.atom_lhs)


class _Compiler:
    def __init__(self, formula: Formula):
        self.f = formula
        self.term_rows = []  # (op, a, b, f32)
        self.term_memo = {}
        self.consts = []
        self.const_memo = {}
        self.atom_rows = []  # (lhs_slot, rhs_slot, cmp, f32)
        self.atom_memo = {}
        self.agg = []  # (op, arg)
        self.depth = 0
        self.stack_need = 0

    def _emit(self, op, a, b, f32) -> int:
        key = (op, a, b, f32)
        slot = self.term_memo.get(key)
        if slot is None:
            slot = len(self.term_rows)
            self.term_rows.append(key)
            self.term_memo[key] = slot
        return slot

    def _const_index(self, value: float) -> int:
        key = np.float64(value).tobytes()  # keyed by bits so -0.0 stays distinct
        idx = self.const_memo.get(key)
        if idx is None:
            idx = len(self.consts)
            self.consts.append(value)
            self.const_memo[key] = idx
        return idx

    def _term(self, t) -> int:
        f32 = 1 if t.fmt is BINARY32 else 0
        if isinstance(t, Var):
            return self._emit(OP_VAR, self.f.var_index[t.name], -1, f32)
        if isinstance(t, Const):
            return self._emit(OP_CONST, self._const_index(t.value.to_float()), -1, f32)
        if isinstance(t, Neg):
            return self._emit(OP_NEG, self._term(t.arg), -1, f32)
        ops = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}
        return self._emit(ops[type(t)], self._term(t.lhs), self._term(t.rhs), f32)

    def _atom(self, atom) -> int:
        lhs = self._term(atom.lhs)
        rhs = self._term(atom.rhs)
        key = (lhs, rhs, CMP_CODE[atom.op], 1 if atom.fmt is BINARY32 else 0)
        idx = self.atom_memo.get(key)
        if idx is None:
            idx = len(self.atom_rows)
            self.atom_rows.append(key)
            self.atom_memo[key] = idx
        return idx

    def _push_agg(self, op, arg):
        self.agg.append((op, arg))
        if op == AGG_PUSH:
            self.depth += 1
        else:
            self.depth += 1 - arg  # pop arg values, push one
        self.stack_need = max(self.stack_need, self.depth)

    def _walk_nnf(self, node):
        if isinstance(node, BAtom):
            self._push_agg(AGG_PUSH, self._atom(node.atom))
            return
        if not isinstance(node, (BAnd, BOr)):
            raise TypeError(f"unexpected node in normalized tree: {type(node).__name__}")
        kids = node.children
        for child in kids:
            self._walk_nnf(child)
        self._push_agg(AGG_OR if isinstance(node, BOr) else AGG_AND, len(kids))

    def run(self) -> CompiledProgram:
        if self.f.clauses is not None:
            for clause in self.f.clauses:
                for atom in clause:
                    self._push_agg(AGG_PUSH, self._atom(atom))
                self._push_agg(AGG_OR, len(clause))
            self._push_agg(AGG_AND, len(self.f.clauses))
        else:
            self._walk_nnf(self.f.nnf)
        assert self.depth == 1
        rows = self.term_rows or [(OP_CONST, self._const_index(0.0), -1, 0)]
        term = np.array(rows, dtype=np.int64)
        if self.atom_rows:
            atoms = np.array(self.atom_rows, dtype=np.int64)
        else:
            atoms = np.zeros((0, 4), dtype=np.int64)
        agg = np.array(self.agg, dtype=np.int64).reshape(-1, 2)
        return CompiledProgram(
            term_op=term[:, 0].astype(np.int32),
            term_a=term[:, 1].astype(np.int32),
            term_b=term[:, 2].astype(np.int32),
            term_f32=term[:, 3].astype(np.uint8),
            consts=np.array(self.consts or [0.0], dtype=np.float64),
            atom_lhs=atoms[:, 0].astype(np.int32),
            atom_rhs=atoms[:, 1].astype(np.int32),
            atom_cmp=atoms[:, 2].astype(np.int32),
            atom_f32=atoms[:, 3].astype(np.uint8),
            agg_op=agg[:, 0].astype(np.int32),
            agg_arg=agg[:, 1].astype(np.int32),
            var_f32=np.array(
                [1 if fmt is BINARY32 else 0 for fmt in self.f.formats], dtype=np.uint8
            ),
            n_slots=len(rows),
            stack_need=max(1, self.stack_need),
        )


def compile_formula(formula: Formula) -> CompiledProgram:
    """Flatten a Formula into kernel-executable arrays."""
    return _Compiler(formula).run()
