"""Staged objective functions over assignment vectors.

Three objectives drive the search, all non-negative and all built on the
same compiled clause programs:

* squared-residual descent: squared distance to the affine equality
  manifold (through the cached projector) plus, for every remaining
  clause, the product of squared magnitude violations.  Cheap and smooth
  enough for coarse global search; it never decides satisfiability.
* ULP descent: per clause, the product of squared ULP distances computed
  on integer lattice ordinals.  Exactly zero on models and nowhere else.
* lattice offsets: the ULP objective evaluated at an integer-offset
  stepped copy of a frozen anchor assignment; the search variable is the
  offset vector, so binary32 and binary64 coordinates step uniformly.

Aggregation is sum over clauses, product within a clause (one satisfied
literal annihilates its clause).  Values saturate at the largest double;
satisfiability decisions use only the integer exact-zero flag, never a
float comparison.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ulpsat.kernels import Kernel, compile_formula
from ulpsat.lattice import from_index, round_to_float32, to_index
from ulpsat.linalg import (
    LinearSystem,
    Projector,
    ProjectorError,
    build_projector,
    extract_linear,
)
from ulpsat.smt.ast import Assignment, Formula

__all__ = [
    "ABLATION_FLAGS",
    "Objective",
    "ObjectiveKind",
    "build_offset_objective",
    "build_square_objective",
    "build_ulp_objective",
    "evaluate",
    "snap_point",
    "snapped_assignment",
    "stepped_assignment",
]

ABLATION_FLAGS = frozenset({"no_projection", "absolute_residuals", "no_clause_product"})

_DBL_MAX = sys.float_info.max

# Offsets are clamped to stay comfortably inside int64; any magnitude this
# large already steps past every finite lattice position anyway.
_OFFSET_LIMIT = 9_000_000_000_000_000_000


class ObjectiveKind(Enum):
    SQUARE = "square"
    ULP = "ulp"
    OFFSET = "offset"


@dataclass(frozen=True)
class Objective:
    """An immutable, reentrant stage objective bound to a compiled kernel."""

    kind: ObjectiveKind
    formula: Formula
    kernel: Kernel
    ablations: frozenset = frozenset()
    system: Optional[LinearSystem] = None
    projector: Optional[Projector] = None
    residual: Optional[Formula] = None  # clauses feeding the residual sum
    anchor: Optional[Assignment] = None
    anchor_ordinals: Optional[tuple] = field(default=None, repr=False)
    anchor_array: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.formula.dim


def _check_flags(ablations) -> frozenset:
    flags = frozenset(ablations)
    unknown = flags - ABLATION_FLAGS
    if unknown:
        raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
    return flags


def build_square_objective(
    f: Formula,
    system: Optional[LinearSystem] = None,
    projector: Optional[Projector] = None,
    ablations: Sequence[str] = (),
) -> Objective:
    """Residual-descent objective for a formula.

    Callers may pass a precomputed (system, projector) pair so the
    factorization happens once per solve; otherwise both are derived here.
    When no usable projector exists (no affine equalities, or the
    factorization degenerates) the projection term is dropped and every
    clause, extracted equalities included, contributes squared residuals.
    """
    flags = _check_flags(ablations)
    residual = f
    if "no_projection" in flags:
        system = projector = None
    else:
        if system is None:
            system, residual = extract_linear(f)
        else:
            _, residual = extract_linear(f)
        if system is not None and projector is None:
            try:
                projector = build_projector(system)
            except ProjectorError:
                system = projector = None
                residual = f
    prog = compile_formula(residual)
    if system is not None:
        kernel = Kernel(
            prog,
            np.ascontiguousarray(system.a, dtype=np.float64),
            np.ascontiguousarray(system.b, dtype=np.float64),
            np.ascontiguousarray(projector.p, dtype=np.float64),
        )
    else:
        kernel = Kernel(prog)
    return Objective(
        kind=ObjectiveKind.SQUARE,
        formula=f,
        kernel=kernel,
        ablations=flags,
        system=system,
        projector=projector,
        residual=residual,
    )


def build_ulp_objective(f: Formula, ablations: Sequence[str] = ()) -> Objective:
    """Bit-precise ULP objective over the full clause set."""
    flags = _check_flags(ablations)
    return Objective(
        kind=ObjectiveKind.ULP,
        formula=f,
        kernel=Kernel(compile_formula(f)),
        ablations=flags,
    )


def build_offset_objective(
    f: Formula, anchor: Assignment, ablations: Sequence[str] = ()
) -> Objective:
    """ULP objective reparameterized as integer lattice steps from an anchor."""
    flags = _check_flags(ablations)
    if len(anchor) != f.dim:
        raise ValueError(f"anchor has {len(anchor)} entries, formula has {f.dim} variables")
    ordinals = tuple(to_index(v) for v in anchor)
    return Objective(
        kind=ObjectiveKind.OFFSET,
        formula=f,
        kernel=Kernel(compile_formula(f)),
        ablations=flags,
        anchor=anchor,
        anchor_ordinals=ordinals,
        anchor_array=np.array(ordinals, dtype=np.int64),
    )


def snap_point(point: Sequence[float], formats) -> Optional[list]:
    """Round each coordinate to its variable's format (RNE).

    Infinities clamp to the format's largest finite value so every snapped
    point corresponds to a legal assignment.  A NaN coordinate has no
    nearest lattice point; the caller treats the whole point as maximally
    bad, so None is returned.
    """
    out = []
    for v, fmt in zip(point, formats):
        v = float(v)
        if math.isnan(v):
            return None
        if fmt.width == 32:
            v = round_to_float32(v)
        if math.isinf(v):
            v = math.copysign(fmt.max_finite, v)
        out.append(v)
    return out


def snapped_assignment(point: Sequence[float], formula: Formula) -> Optional[Assignment]:
    """Assignment at the snapped point, or None for NaN coordinates."""
    snapped = snap_point(point, formula.formats)
    if snapped is None:
        return None
    return Assignment.from_doubles(snapped, formula.formats)


def _round_offset(v) -> int:
    """Nearest integer, ties toward zero; NaN keeps the incumbent (0)."""
    v = float(v)
    if math.isnan(v):
        return 0
    if v >= _OFFSET_LIMIT:
        return _OFFSET_LIMIT
    if v <= -_OFFSET_LIMIT:
        return -_OFFSET_LIMIT
    return int(math.ceil(v - 0.5)) if v >= 0.0 else int(math.floor(v + 0.5))


def stepped_assignment(obj: Objective, offsets: Sequence) -> Assignment:
    """The assignment reached by stepping the anchor along integer offsets."""
    if obj.kind is not ObjectiveKind.OFFSET:
        raise ValueError("stepped_assignment requires an offset objective")
    vals = []
    for ordinal, off, fmt in zip(obj.anchor_ordinals, offsets, obj.formula.formats):
        vals.append(from_index(ordinal + _round_offset(off), fmt))
    return Assignment(vals)


def evaluate(obj: Objective, point: Sequence) -> tuple:
    """Evaluate an objective at a point; returns (value, exact_zero).

    The point is a vector of doubles (residual and ULP objectives, snapped
    per coordinate before evaluation) or an offset vector (lattice
    objective, rounded to integers ties-toward-zero).  The value is always
    finite and non-negative; exact_zero comes from integer distances and is
    never set by the residual objective.
    """
    if len(point) != obj.dim:
        raise ValueError(f"point has {len(point)} entries, formula has {obj.dim} variables")
    clause_sum = "no_clause_product" in obj.ablations
    if obj.kind is ObjectiveKind.OFFSET:
        offs = np.array([_round_offset(v) for v in point], dtype=np.int64)
        return obj.kernel.stage3(obj.anchor_array, offs, clause_sum)
    snapped = snap_point(point, obj.formula.formats)
    if snapped is None:
        return _DBL_MAX, False
    xs = np.array(snapped, dtype=np.float64)
    if obj.kind is ObjectiveKind.SQUARE:
        value = obj.kernel.stage1(xs, "absolute_residuals" in obj.ablations)
        return value, False
    return obj.kernel.stage2(xs, clause_sum)
