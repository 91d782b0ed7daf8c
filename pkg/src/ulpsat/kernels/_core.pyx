# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled evaluation kernels.

Twin of _core_py: executes the flat programs from program.py with
bit-identical semantics (same accumulation order, same saturation rules).
Floating-point bit manipulation goes through memcpy unions; ordinal
distances use uint64 wraparound so extreme gaps never overflow.
"""

from libc.float cimport DBL_MAX
from libc.math cimport INFINITY, fabs, isnan
from libc.stdint cimport int32_t, int64_t, uint32_t, uint64_t, uint8_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

__all__ = ["BACKEND", "Kernel"]

BACKEND = "compiled"

cdef double NAN_PENALTY = 1e300

cdef uint64_t ORD_INF64 = 0x7FF0000000000000
cdef uint64_t SENT64 = 2 * ORD_INF64 + 1
cdef int64_t LIM64 = 0x7FEFFFFFFFFFFFFF
cdef uint64_t MAG64 = <uint64_t>0x7FFFFFFFFFFFFFFF

cdef uint64_t ORD_INF32 = 0x7F800000
cdef uint64_t SENT32 = 2 * ORD_INF32 + 1
cdef int64_t LIM32 = 0x7F7FFFFF
cdef uint32_t MAG32 = <uint32_t>0x7FFFFFFF


cdef inline uint64_t _d2bits(double v) nogil:
    cdef uint64_t b
    memcpy(&b, &v, 8)
    return b


cdef inline double _bits2d(uint64_t b) nogil:
    cdef double v
    memcpy(&v, &b, 8)
    return v


cdef inline uint32_t _f2bits(float v) nogil:
    cdef uint32_t b
    memcpy(&b, &v, 4)
    return b


cdef inline float _bits2f(uint32_t b) nogil:
    cdef float v
    memcpy(&v, &b, 4)
    return v


cdef inline int64_t _ord64(double v) nogil:
    cdef uint64_t b = _d2bits(v)
    cdef uint64_t mag = b & MAG64
    return -<int64_t>mag if (b >> 63) else <int64_t>mag


cdef inline int64_t _ord32(double v) nogil:
    # v holds a value exactly representable in binary32 (or +-inf)
    cdef uint32_t b = _f2bits(<float>v)
    cdef uint32_t mag = b & MAG32
    return -<int64_t>mag if (b >> 31) else <int64_t>mag


cdef inline double _from_ord64(int64_t i) nogil:
    cdef uint64_t b
    if i > LIM64:
        i = LIM64
    elif i < -LIM64:
        i = -LIM64
    if i < 0:
        b = (<uint64_t>1 << 63) | <uint64_t>(-i)
    else:
        b = <uint64_t>i
    return _bits2d(b)


cdef inline double _from_ord32(int64_t i) nogil:
    cdef uint32_t b
    if i > LIM32:
        i = LIM32
    elif i < -LIM32:
        i = -LIM32
    if i < 0:
        b = (<uint32_t>1 << 31) | <uint32_t>(-i)
    else:
        b = <uint32_t>i
    return <double>_bits2f(b)


cdef inline uint64_t _ord_dist(int64_t il, int64_t ir, int32_t cmp) nogil:
    # uint64 wraparound makes the magnitude differences exact
    if cmp == 0:
        return <uint64_t>il - <uint64_t>ir if il >= ir else <uint64_t>ir - <uint64_t>il
    if cmp == 1:
        return <uint64_t>il - <uint64_t>ir if il > ir else 0
    if cmp == 2:
        return (<uint64_t>il - <uint64_t>ir) + 1 if il >= ir else 0
    if cmp == 3:
        return <uint64_t>ir - <uint64_t>il if ir > il else 0
    return (<uint64_t>ir - <uint64_t>il) + 1 if ir >= il else 0


cdef struct _Scratch:
    double* buf
    double* slots
    double* stack
    double* metrics
    double* resid
    double* xs
    uint8_t* fstack
    uint8_t* fmetrics


cdef class Kernel:
    """Executes one compiled program, optionally with a projection system.

    Inputs to stage1/stage2 must already be snapped: each coordinate holds
    a finite value exactly representable in its variable's format.
    """

    cdef int32_t[::1] term_op
    cdef int32_t[::1] term_a
    cdef int32_t[::1] term_b
    cdef uint8_t[::1] term_f32
    cdef double[::1] consts
    cdef int32_t[::1] atom_lhs
    cdef int32_t[::1] atom_rhs
    cdef int32_t[::1] atom_cmp
    cdef uint8_t[::1] atom_f32
    cdef int32_t[::1] agg_op
    cdef int32_t[::1] agg_arg
    cdef uint8_t[::1] var_f32
    cdef double[:, ::1] a_mat
    cdef double[::1] b_vec
    cdef double[:, ::1] t_mat
    cdef Py_ssize_t n_instr, n_atoms, n_agg, n_vars, stack_need, m_rows
    cdef bint has_sys
    cdef object prog

    def __init__(self, prog, a=None, b=None, t=None):
        cdef Py_ssize_t i
        self.prog = prog
        self.term_op = prog.term_op
        self.term_a = prog.term_a
        self.term_b = prog.term_b
        self.term_f32 = prog.term_f32
        self.consts = prog.consts
        self.atom_lhs = prog.atom_lhs
        self.atom_rhs = prog.atom_rhs
        self.atom_cmp = prog.atom_cmp
        self.atom_f32 = prog.atom_f32
        self.agg_op = prog.agg_op
        self.agg_arg = prog.agg_arg
        self.var_f32 = prog.var_f32
        self.n_instr = self.term_op.shape[0]
        self.n_atoms = self.atom_lhs.shape[0]
        self.n_agg = self.agg_op.shape[0]
        self.n_vars = self.var_f32.shape[0]
        self.stack_need = prog.stack_need
        for i in range(self.n_instr):
            if self.term_op[i] < 0 or self.term_op[i] > 6:
                raise ValueError(f"bad term opcode {self.term_op[i]}")
        for i in range(self.n_agg):
            if self.agg_op[i] < 0 or self.agg_op[i] > 2:
                raise ValueError(f"bad fold opcode {self.agg_op[i]}")
        for i in range(self.n_atoms):
            if self.atom_cmp[i] < 0 or self.atom_cmp[i] > 4:
                raise ValueError(f"bad comparison code {self.atom_cmp[i]}")
        if a is None:
            self.has_sys = False
            self.m_rows = 0
        else:
            self.a_mat = a
            self.b_vec = b
            self.t_mat = t
            self.m_rows = self.b_vec.shape[0]
            if self.a_mat.shape[0] != self.m_rows or self.a_mat.shape[1] != self.n_vars:
                raise ValueError("projection matrix shape mismatch")
            if self.t_mat.shape[0] != self.n_vars or self.t_mat.shape[1] != self.m_rows:
                raise ValueError("projection operator shape mismatch")
            self.has_sys = True

    cdef _Scratch _alloc(self) except *:
        cdef _Scratch s
        cdef size_t nd = (
            self.n_instr + self.stack_need + self.n_atoms + self.m_rows + self.n_vars
        )
        cdef size_t nb = self.stack_need + self.n_atoms
        s.buf = <double*>malloc(nd * sizeof(double) + nb + 1)
        if s.buf == NULL:
            raise MemoryError()
        s.slots = s.buf
        s.stack = s.slots + self.n_instr
        s.metrics = s.stack + self.stack_need
        s.resid = s.metrics + self.n_atoms
        s.xs = s.resid + self.m_rows
        s.fstack = <uint8_t*>(s.xs + self.n_vars)
        s.fmetrics = s.fstack + self.stack_need
        return s

    cdef void _terms(self, double* xs, double* slots) nogil:
        cdef Py_ssize_t i
        cdef int32_t op, a, b
        cdef double lv, rv, v
        for i in range(self.n_instr):
            op = self.term_op[i]
            a = self.term_a[i]
            b = self.term_b[i]
            if op == 0:
                v = xs[a]
            elif op == 1:
                v = self.consts[a]
            elif op == 2:
                v = -slots[a]
            else:
                lv = slots[a]
                rv = slots[b]
                if op == 3:
                    v = lv + rv
                elif op == 4:
                    v = lv - rv
                elif op == 5:
                    v = lv * rv
                else:
                    v = lv / rv
                if self.term_f32[i]:
                    v = <double><float>v
            slots[i] = v

    cdef void _residual_metrics(self, double* slots, bint absolute, double* metrics) nogil:
        cdef Py_ssize_t i
        cdef int32_t cmp
        cdef double lv, rv, v, m
        cdef bint holds
        for i in range(self.n_atoms):
            lv = slots[self.atom_lhs[i]]
            rv = slots[self.atom_rhs[i]]
            cmp = self.atom_cmp[i]
            if isnan(lv) or isnan(rv):
                metrics[i] = NAN_PENALTY
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
                metrics[i] = 0.0
                continue
            if lv == rv:
                v = 0.0  # equal values failing a strict comparison
            elif cmp <= 2:
                v = lv - rv
            else:
                v = rv - lv
            m = fabs(v) if absolute else v * v
            if m == INFINITY:
                m = DBL_MAX
            metrics[i] = m

    cdef void _ulp_metrics(self, double* slots, double* metrics, uint8_t* fmetrics) nogil:
        cdef Py_ssize_t i
        cdef double lv, rv, fd
        cdef int64_t il, ir
        cdef uint64_t d
        for i in range(self.n_atoms):
            lv = slots[self.atom_lhs[i]]
            rv = slots[self.atom_rhs[i]]
            if isnan(lv) or isnan(rv):
                d = SENT32 if self.atom_f32[i] else SENT64
            else:
                if self.atom_f32[i]:
                    il = _ord32(lv)
                    ir = _ord32(rv)
                else:
                    il = _ord64(lv)
                    ir = _ord64(rv)
                d = _ord_dist(il, ir, self.atom_cmp[i])
            fd = <double>d
            metrics[i] = fd * fd
            fmetrics[i] = d == 0

    cdef double _fold(self, double* metrics, double* stack) nogil:
        cdef Py_ssize_t i, k, sp = 0
        cdef int32_t op, arg
        cdef double acc
        for i in range(self.n_agg):
            op = self.agg_op[i]
            arg = self.agg_arg[i]
            if op == 0:
                stack[sp] = metrics[arg]
                sp += 1
                continue
            if op == 1:
                acc = 1.0
                for k in range(sp - arg, sp):
                    acc = acc * stack[k]
                    if acc == INFINITY:
                        acc = DBL_MAX
            else:
                acc = 0.0
                for k in range(sp - arg, sp):
                    acc = acc + stack[k]
                    if acc == INFINITY:
                        acc = DBL_MAX
            sp -= arg
            stack[sp] = acc
            sp += 1
        return stack[0]

    cdef double _fold_exact(
        self,
        double* metrics,
        uint8_t* fmetrics,
        bint clause_sum,
        double* stack,
        uint8_t* fstack,
        bint* exact_out,
    ) nogil:
        cdef Py_ssize_t i, k, sp = 0
        cdef int32_t op, arg
        cdef double acc
        cdef uint8_t flag
        for i in range(self.n_agg):
            op = self.agg_op[i]
            arg = self.agg_arg[i]
            if op == 0:
                stack[sp] = metrics[arg]
                fstack[sp] = fmetrics[arg]
                sp += 1
                continue
            if op == 1 and not clause_sum:
                acc = 1.0
                for k in range(sp - arg, sp):
                    acc = acc * stack[k]
                    if acc == INFINITY:
                        acc = DBL_MAX
            else:
                acc = 0.0
                for k in range(sp - arg, sp):
                    acc = acc + stack[k]
                    if acc == INFINITY:
                        acc = DBL_MAX
            # exactness tracks satisfaction, independent of value folding
            if op == 1:
                flag = 0
                for k in range(sp - arg, sp):
                    flag = flag | fstack[k]
            else:
                flag = 1
                for k in range(sp - arg, sp):
                    flag = flag & fstack[k]
            sp -= arg
            stack[sp] = acc
            fstack[sp] = flag
            sp += 1
        exact_out[0] = fstack[0] != 0
        return stack[0]

    def stage1(self, double[::1] x, bint absolute):
        """Squared-residual objective: projection gap plus clause products."""
        cdef Py_ssize_t i, j
        cdef double sq = 0.0, acc, total
        cdef double* xp = NULL
        if x.shape[0] != self.n_vars:
            raise ValueError(f"point has {x.shape[0]} entries, program expects {self.n_vars}")
        cdef _Scratch s = self._alloc()
        try:
            if self.n_vars > 0:
                xp = &x[0]
            if self.has_sys:
                for i in range(self.m_rows):
                    acc = 0.0
                    for j in range(self.n_vars):
                        acc += self.a_mat[i, j] * xp[j]
                    s.resid[i] = acc - self.b_vec[i]
                for i in range(self.n_vars):
                    acc = 0.0
                    for j in range(self.m_rows):
                        acc += self.t_mat[i, j] * s.resid[j]
                    sq += acc * acc
                if not (sq <= DBL_MAX):  # also catches NaN from inf - inf
                    sq = DBL_MAX
            self._terms(xp, s.slots)
            self._residual_metrics(s.slots, absolute, s.metrics)
            total = sq + self._fold(s.metrics, s.stack)
            if not (total <= DBL_MAX):
                total = DBL_MAX
            return total
        finally:
            free(s.buf)

    def stage2(self, double[::1] x, bint clause_sum):
        """Squared ULP-distance objective; exact flag certifies satisfaction."""
        cdef double val
        cdef bint exact = 0
        cdef double* xp = NULL
        if x.shape[0] != self.n_vars:
            raise ValueError(f"point has {x.shape[0]} entries, program expects {self.n_vars}")
        cdef _Scratch s = self._alloc()
        try:
            if self.n_vars > 0:
                xp = &x[0]
            self._terms(xp, s.slots)
            self._ulp_metrics(s.slots, s.metrics, s.fmetrics)
            val = self._fold_exact(s.metrics, s.fmetrics, clause_sum, s.stack, s.fstack, &exact)
            return val, exact != 0
        finally:
            free(s.buf)

    def stage3(self, int64_t[::1] anchor_ords, int64_t[::1] offsets, bint clause_sum):
        """ULP objective at integer lattice steps away from an anchor point."""
        cdef Py_ssize_t i
        cdef int64_t o, off, lim, stepped
        cdef double val
        cdef bint exact = 0
        if anchor_ords.shape[0] != self.n_vars or offsets.shape[0] != self.n_vars:
            raise ValueError("anchor/offset length mismatch")
        cdef _Scratch s = self._alloc()
        try:
            for i in range(self.n_vars):
                o = anchor_ords[i]
                off = offsets[i]
                lim = LIM32 if self.var_f32[i] else LIM64
                # guarded add: |anchor| <= lim and |off| <= 2^63 - lim
                if off >= 0:
                    stepped = lim if o > lim - off else o + off
                else:
                    stepped = -lim if o < -lim - off else o + off
                s.xs[i] = _from_ord32(stepped) if self.var_f32[i] else _from_ord64(stepped)
            self._terms(s.xs, s.slots)
            self._ulp_metrics(s.slots, s.metrics, s.fmetrics)
            val = self._fold_exact(s.metrics, s.fmetrics, clause_sum, s.stack, s.fstack, &exact)
            return val, exact != 0
        finally:
            free(s.buf)
