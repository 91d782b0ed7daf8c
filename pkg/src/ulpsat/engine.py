"""Solver pipeline: staged descent from smooth geometry to the bit lattice.

Each restart runs up to three rounds.  A squared-distance search pulls a
random start toward the constraint surface, a bit-distance search hunts for
an exact zero from there, and an integer offset search snaps the incumbent
onto nearby lattice points.  Only a revalidated exact zero may produce a
sat verdict; otherwise the engine reports the best score it saw, or a
timeout when the wall clock expires.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from ulpsat.linalg import project
from ulpsat.objectives import (
    ABLATION_FLAGS,
    build_offset_objective,
    build_square_objective,
    build_ulp_objective,
    evaluate,
    snap_point,
    snapped_assignment,
    stepped_assignment,
)
from ulpsat.optimizer import (
    OptimizerConfig,
    OptResult,
    OptStatus,
    basin_hop,
    lattice_refine,
    multi_start,
    sample_start_box,
)
from ulpsat.smt.ast import Assignment, Formula
from ulpsat.smt.evaluator import is_model

ALL_ABLATIONS = frozenset({"no_s1", "no_s3"}) | ABLATION_FLAGS

_STAGE_SQUARE = "square"
_STAGE_ULP = "ulp"
_STAGE_OFFSET = "offset"


class InternalInconsistencyError(RuntimeError):
    """An exact-zero claim failed revalidation; a kernel or objective is buggy."""


class VerdictKind(Enum):
    SAT = "sat"
    UNSAT_GUESS = "unsat-guess"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class StageRecord:
    """One optimizer run inside the pipeline, tagged by restart and stage."""

    restart: int
    stage: str
    result: OptResult


@dataclass(frozen=True)
class Verdict:
    """Outcome of a solve: exactly one kind, with kind-specific payload.

    Sat carries a validated model.  UnsatGuess carries the smallest
    bit-distance score seen across all restarts (positive; zero would have
    been a model).  Timeout carries neither, only the partial trace.
    """

    kind: VerdictKind
    model: Optional[Assignment] = None
    score: Optional[float] = None
    stage_trace: tuple[StageRecord, ...] = ()

    def __post_init__(self):
        if self.kind is VerdictKind.SAT:
            if self.model is None or self.score is not None:
                raise ValueError("sat verdicts carry a model and no score")
        elif self.kind is VerdictKind.UNSAT_GUESS:
            if self.model is not None or self.score is None or self.score < 0:
                raise ValueError("unsat-guess verdicts carry a score and no model")
        else:
            if self.model is not None or self.score is not None:
                raise ValueError("timeout verdicts carry neither model nor score")


def _stage_config(hops: int) -> OptimizerConfig:
    return OptimizerConfig(n_restarts=1, hops_per_restart=hops)


@dataclass(frozen=True)
class EngineConfig:
    """Knobs for the full pipeline.

    `restarts` is the outer loop count; each restart draws a fresh random
    start and runs all enabled rounds.  The per-stage optimizer configs
    control effort inside one restart.  `time_budget` is the global wall
    clock in seconds, enforced cooperatively between and inside stages.
    """

    square_opt: OptimizerConfig = field(default_factory=lambda: _stage_config(30))
    ulp_opt: OptimizerConfig = field(default_factory=lambda: _stage_config(10))
    offset_opt: OptimizerConfig = field(default_factory=lambda: _stage_config(10))
    restarts: int = 10
    time_budget: float = 1200.0
    ablations: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        unknown = self.ablations - ALL_ABLATIONS
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")
        if not self.time_budget > 0:
            raise ValueError("time_budget must be positive")


def validate_and_emit(f: Formula, candidate: Assignment) -> Assignment:
    """Recheck a candidate under real IEEE semantics before it leaves the engine.

    The optimizer only claims exact zeros after an integer-distance check,
    so a failure here means a kernel and the reference evaluator disagree.
    That is a bug, never a verdict.
    """
    if not is_model(f, candidate):
        raise InternalInconsistencyError(
            "exact-zero candidate failed model revalidation"
        )
    return candidate


def _stage_seed(base: int, restart: int, stage: int) -> int:
    # independent streams per (seed, restart, stage); stable and collision-free
    seq = np.random.SeedSequence((base, restart, stage))
    return int(seq.generate_state(1, np.uint64)[0])


def _refine_onto_equalities(point, square_obj, formats) -> Optional[list]:
    """Re-project a point until its snapped image stabilizes.

    One projection pass leaves an absolute error near eps * |x|, which
    swamps solution sets living at tiny magnitudes; projecting again from
    the refined point shrinks the floor with it, so a few dozen passes
    land within ulps of the equality manifold wherever it sits.
    """
    sys_, proj = square_obj.system, square_obj.projector
    p = np.asarray(point, dtype=float)
    snapped = snap_point(p, formats)
    for _ in range(60):
        q, _ = project(p, sys_, proj)
        if not np.all(np.isfinite(q)):
            break
        refined = snap_point(q, formats)
        p = q
        if refined == snapped:
            break
        snapped = refined
    return snapped


def solve(f: Formula, cfg: Optional[EngineConfig] = None) -> Verdict:
    """Decide `f` by staged descent; sound for sat, best-effort otherwise."""
    cfg = cfg if cfg is not None else EngineConfig()
    obj_flags = cfg.ablations & ABLATION_FLAGS
    deadline = time.monotonic() + cfg.time_budget
    trace: list[StageRecord] = []

    square_obj = None
    if "no_s1" not in cfg.ablations:
        square_obj = build_square_objective(f, ablations=obj_flags)
    ulp_obj = build_ulp_objective(f, ablations=obj_flags)

    def sampler(rng):
        return sample_start_box(f, rng)

    def timeout() -> Verdict:
        return Verdict(VerdictKind.TIMEOUT, stage_trace=tuple(trace))

    def sat(model: Assignment) -> Verdict:
        return Verdict(
            VerdictKind.SAT,
            model=validate_and_emit(f, model),
            stage_trace=tuple(trace),
        )

    best_score = math.inf
    for restart in range(cfg.restarts):
        if time.monotonic() >= deadline:
            return timeout()

        if square_obj is not None:
            sq_cfg = replace(
                cfg.square_opt,
                rng_seed=_stage_seed(cfg.square_opt.rng_seed, restart, 1),
            )
            sq_res = multi_start(
                square_obj, sq_cfg, box_sampler=sampler, deadline=deadline
            )
            trace.append(StageRecord(restart, _STAGE_SQUARE, sq_res))
            # squared distances never certify a model, whatever their value
            assert sq_res.status is not OptStatus.ZERO_FOUND
            start = list(sq_res.best_point)
            if square_obj.system is not None:
                refined = _refine_onto_equalities(start, square_obj, f.formats)
                if refined is not None:
                    held, _ = evaluate(ulp_obj, start)
                    polished, _ = evaluate(ulp_obj, refined)
                    if polished < held:
                        start = refined
        else:
            rng = np.random.default_rng(
                _stage_seed(cfg.square_opt.rng_seed, restart, 1)
            )
            start = sampler(rng)

        if time.monotonic() >= deadline:
            return timeout()

        ulp_cfg = replace(
            cfg.ulp_opt, rng_seed=_stage_seed(cfg.ulp_opt.rng_seed, restart, 2)
        )
        ulp_res = basin_hop(ulp_obj, start, ulp_cfg, deadline=deadline)
        trace.append(StageRecord(restart, _STAGE_ULP, ulp_res))
        if ulp_res.exact_zero:
            snapped = snapped_assignment(ulp_res.best_point, f)
            assert snapped is not None
            return sat(snapped)
        best_score = min(best_score, ulp_res.best_value)

        if time.monotonic() >= deadline:
            return timeout()

        if "no_s3" not in cfg.ablations:
            anchor = snapped_assignment(ulp_res.best_point, f)
            if anchor is not None:
                offset_obj = build_offset_objective(f, anchor, ablations=obj_flags)
                off_cfg = replace(
                    cfg.offset_opt,
                    rng_seed=_stage_seed(cfg.offset_opt.rng_seed, restart, 3),
                )
                off_res = lattice_refine(offset_obj, off_cfg, deadline=deadline)
                trace.append(StageRecord(restart, _STAGE_OFFSET, off_res))
                if off_res.exact_zero:
                    return sat(stepped_assignment(offset_obj, off_res.best_point))
                best_score = min(best_score, off_res.best_value)

            if time.monotonic() >= deadline:
                return timeout()

    return Verdict(
        VerdictKind.UNSAT_GUESS, score=best_score, stage_trace=tuple(trace)
    )
