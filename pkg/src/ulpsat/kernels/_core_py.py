"""Pure-Python evaluation kernels (fallback backend).

Implements the same Kernel interface as the compiled backend and must
produce bit-identical results; the parity test suite holds both to that.
Loop and accumulation order therefore mirror the compiled code exactly,
including saturation of overflowing folds at DBL_MAX.
"""

from __future__ import annotations

import math
import sys

from ulpsat.kernels.program import (
    AGG_OR,
    AGG_PUSH,
    CompiledProgram,
    OP_ADD,
    OP_CONST,
    OP_DIV,
    OP_MUL,
    OP_NEG,
    OP_SUB,
    OP_VAR,
)
from ulpsat.lattice import (
    BINARY32,
    BINARY64,
    float32_from_ordinal,
    float32_ordinal,
    float64_from_ordinal,
    float64_ordinal,
    round_to_float32,
)

__all__ = ["BACKEND", "Kernel"]

BACKEND = "python"

_DBL_MAX = sys.float_info.max
_NAN_PENALTY = 1e300
_SENT32 = BINARY32.sentinel
_SENT64 = BINARY64.sentinel


class Kernel:
    """Executes one compiled program, optionally with a projection system.

    Inputs to stage1/stage2 must already be snapped: each coordinate holds
    a finite value exactly representable in its variable's format.
    """

    def __init__(self, prog: CompiledProgram, a=None, b=None, t=None):
        self.prog = prog
        self.term = list(
            zip(
                prog.term_op.tolist(),
                prog.term_a.tolist(),
                prog.term_b.tolist(),
                prog.term_f32.tolist(),
            )
        )
        self.atoms = list(
            zip(
                prog.atom_lhs.tolist(),
                prog.atom_rhs.tolist(),
                prog.atom_cmp.tolist(),
                prog.atom_f32.tolist(),
            )
        )
        self.agg = list(zip(prog.agg_op.tolist(), prog.agg_arg.tolist()))
        self.consts = prog.consts.tolist()
        self.var_f32 = prog.var_f32.tolist()
        if a is None:
            self.a = self.b = self.t = None
        else:
            self.a = [[float(v) for v in row] for row in a]
            self.b = [float(v) for v in b]
            self.t = [[float(v) for v in row] for row in t]

    # term machine

    def _slots(self, xs):
        slots = []
        for op, a, b, f32 in self.term:
            if op == OP_VAR:
                v = xs[a]
            elif op == OP_CONST:
                v = self.consts[a]
            elif op == OP_NEG:
                v = -slots[a]
            else:
                lv = slots[a]
                rv = slots[b]
                if op == OP_ADD:
                    v = lv + rv
                elif op == OP_SUB:
                    v = lv - rv
                elif op == OP_MUL:
                    v = lv * rv
                elif op == OP_DIV:
                    if rv == 0.0:
                        # CPython raises here; apply the IEEE rules by hand
                        if math.isnan(lv) or lv == 0.0:
                            v = math.nan
                        else:
                            sign = math.copysign(1.0, lv) * math.copysign(1.0, rv)
                            v = math.copysign(math.inf, sign)
                    else:
                        v = lv / rv
                else:
                    raise ValueError(f"bad opcode {op}")
                if f32:
                    v = round_to_float32(v)
            slots.append(v)
        return slots

    # per-atom measures

    def _residual_metrics(self, slots, absolute):
        out = []
        for lhs, rhs, cmp, _ in self.atoms:
            lv = slots[lhs]
            rv = slots[rhs]
            if math.isnan(lv) or math.isnan(rv):
                out.append(_NAN_PENALTY)
                continue
            if cmp == 0:
                holds = lv == rv
            elif cmp == 1:
                holds = lv <= rv
            elif cmp == 2:
                holds = lv < rv
            elif cmp == 3:
                holds = lv >= rv
            else:
                holds = lv > rv
            if holds:
                out.append(0.0)
                continue
            if lv == rv:
                v = 0.0  # equal values failing a strict comparison
            elif cmp <= 2:
                v = lv - rv
            else:
                v = rv - lv
            m = abs(v) if absolute else v * v
            if m == math.inf:
                m = _DBL_MAX
            out.append(m)
        return out

    def _ulp_metrics(self, slots):
        vals, exact = [], []
        for lhs, rhs, cmp, f32 in self.atoms:
            lv = slots[lhs]
            rv = slots[rhs]
            if math.isnan(lv) or math.isnan(rv):
                d = _SENT32 if f32 else _SENT64
            else:
                if f32:
                    il = float32_ordinal(lv)
                    ir = float32_ordinal(rv)
                else:
                    il = float64_ordinal(lv)
                    ir = float64_ordinal(rv)
                if cmp == 0:
                    d = il - ir if il >= ir else ir - il
                elif cmp == 1:
                    d = il - ir if il > ir else 0
                elif cmp == 2:
                    d = il - ir + 1 if il >= ir else 0
                elif cmp == 3:
                    d = ir - il if ir > il else 0
                else:
                    d = ir - il + 1 if ir >= il else 0
            fd = float(d)
            vals.append(fd * fd)
            exact.append(d == 0)
        return vals, exact

    # aggregation

    def _fold(self, metrics):
        vals = []
        for op, arg in self.agg:
            if op == AGG_PUSH:
                vals.append(metrics[arg])
                continue
            vs = vals[len(vals) - arg :]
            del vals[len(vals) - arg :]
            if op == AGG_OR:
                acc = 1.0
                for v in vs:
                    acc = acc * v
                    if acc == math.inf:
                        acc = _DBL_MAX
            else:
                acc = 0.0
                for v in vs:
                    acc = acc + v
                    if acc == math.inf:
                        acc = _DBL_MAX
            vals.append(acc)
        return vals[0]

    def _fold_exact(self, metrics, exact, clause_sum):
        vals, exs = [], []
        for op, arg in self.agg:
            if op == AGG_PUSH:
                vals.append(metrics[arg])
                exs.append(exact[arg])
                continue
            vs = vals[len(vals) - arg :]
            es = exs[len(exs) - arg :]
            del vals[len(vals) - arg :]
            del exs[len(exs) - arg :]
            if op == AGG_OR and not clause_sum:
                acc = 1.0
                for v in vs:
                    acc = acc * v
                    if acc == math.inf:
                        acc = _DBL_MAX
            else:
                acc = 0.0
                for v in vs:
                    acc = acc + v
                    if acc == math.inf:
                        acc = _DBL_MAX
            vals.append(acc)
            # exactness tracks satisfaction, independent of value folding
            exs.append(any(es) if op == AGG_OR else all(es))
        return vals[0], exs[0]

    # stage entry points

    def _check_dim(self, n):
        if n != len(self.var_f32):
            raise ValueError(f"point has {n} entries, program expects {len(self.var_f32)}")

    def stage1(self, x, absolute: bool) -> float:
        xs = [float(v) for v in x]
        self._check_dim(len(xs))
        sq = 0.0
        if self.a is not None:
            m = len(self.b)
            resid = []
            for i in range(m):
                row = self.a[i]
                acc = 0.0
                for j in range(len(xs)):
                    acc += row[j] * xs[j]
                resid.append(acc - self.b[i])
            for trow in self.t:
                acc = 0.0
                for i in range(m):
                    acc += trow[i] * resid[i]
                sq += acc * acc
            if not (sq <= _DBL_MAX):  # also catches NaN from inf - inf
                sq = _DBL_MAX
        slots = self._slots(xs)
        total = sq + self._fold(self._residual_metrics(slots, absolute))
        if not (total <= _DBL_MAX):
            total = _DBL_MAX
        return total

    def stage2(self, x, clause_sum: bool) -> tuple[float, bool]:
        xs = [float(v) for v in x]
        self._check_dim(len(xs))
        vals, exact = self._ulp_metrics(self._slots(xs))
        return self._fold_exact(vals, exact, clause_sum)

    def stage3(self, anchor_ords, offsets, clause_sum: bool) -> tuple[float, bool]:
        if len(anchor_ords) != len(self.var_f32) or len(offsets) != len(self.var_f32):
            raise ValueError("anchor/offset length mismatch")
        xs = []
        for i, f32 in enumerate(self.var_f32):
            o = int(anchor_ords[i]) + int(offsets[i])
            xs.append(float32_from_ordinal(o) if f32 else float64_from_ordinal(o))
        vals, exact = self._ulp_metrics(self._slots(xs))
        return self._fold_exact(vals, exact, clause_sum)
