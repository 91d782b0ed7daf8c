"""Derivative-free global minimization for the stage objectives.

The global strategy is multi-start basin hopping: repeated Powell local
minimization with Gaussian perturbation of the incumbent between hops,
accepting strictly better values only.  Stage-3 search additionally runs a
bounded coordinate descent over integer lattice offsets before relaxing to
the continuous hop search.

Termination is threefold: an integer-exact zero (unwound immediately, the
only path that can declare satisfiability), convergence of the planned
hops or sweeps, or a cooperative deadline checked every 1024 objective
evaluations.  Everything is deterministic for a fixed seed; multi-start
runs are driven by independent per-start RNG streams so the loop could be
parallelized without changing any single start's trajectory.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from ulpsat.objectives import Objective, ObjectiveKind, _round_offset, evaluate
from ulpsat.smt.ast import Formula

__all__ = [
    "OptResult",
    "OptStatus",
    "OptimizerConfig",
    "basin_hop",
    "lattice_refine",
    "local_minimize",
    "multi_start",
    "sample_start_box",
]

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0  # golden-section interior ratio
_PHI = (math.sqrt(5.0) + 1.0) / 2.0  # bracket expansion factor
_LINE_TOL = 1e-10  # relative line-search tolerance
_DEADLINE_STRIDE = 1024  # evaluations between clock checks
_SCALE_MIN = 1e-9
_SCALE_MAX = 1e9


class OptStatus(Enum):
    ZERO_FOUND = "zero-found"
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for one optimization stage.

    hops_per_restart may be zero (a degenerate run that only evaluates the
    start); every other count is at least one.
    """

    n_restarts: int = 10
    hops_per_restart: int = 30
    perturbation_scale: float = 1.0
    local_max_iters: int = 50
    local_tol: float = 1e-10
    rng_seed: int = 0
    s3_bound: int = 8
    time_budget: float = math.inf

    def __post_init__(self):
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be positive")
        if self.hops_per_restart < 0:
            raise ValueError("hops_per_restart must be nonnegative")
        if not self.perturbation_scale > 0.0:
            raise ValueError("perturbation_scale must be positive")
        if self.local_max_iters < 1:
            raise ValueError("local_max_iters must be positive")
        if not self.local_tol > 0.0:
            raise ValueError("local_tol must be positive")
        if self.s3_bound < 1:
            raise ValueError("s3_bound must be positive")
        if not self.time_budget > 0.0:
            raise ValueError("time_budget must be positive")


@dataclass(frozen=True)
class OptResult:
    """Outcome of one optimization run; exact_zero implies best_value == 0."""

    best_point: tuple
    best_value: float
    exact_zero: bool
    evaluations: int
    elapsed: float
    status: OptStatus


class _ZeroHit(Exception):
    """Unwinds the search the moment an integer-exact zero is evaluated."""


class _OutOfTime(Exception):
    """Unwinds the search when the cooperative deadline passes."""


def _pair_fn(obj) -> Callable:
    """Normalize an Objective or plain callable to point -> (value, exact)."""
    if isinstance(obj, Objective):
        return lambda point: evaluate(obj, point)

    def fn(point):
        out = obj(point)
        if isinstance(out, tuple):
            return float(out[0]), bool(out[1])
        return float(out), False

    return fn


class _Search:
    """Shared evaluation bookkeeping for one run: best point, counts, clock."""

    def __init__(self, fn: Callable, deadline: Optional[float]):
        self.fn = fn
        self.deadline = deadline
        self.evaluations = 0
        self.best_value = math.inf
        self.best_point = None

    def __call__(self, point) -> float:
        self.evaluations += 1
        if (
            self.deadline is not None
            and self.evaluations % _DEADLINE_STRIDE == 0
            and time.monotonic() >= self.deadline
        ):
            raise _OutOfTime
        value, exact = self.fn(point)
        if math.isnan(value):
            return math.inf
        if exact:
            self.best_value = 0.0
            self.best_point = tuple(float(v) for v in point)
            raise _ZeroHit
        if value < self.best_value:
            self.best_value = value
            self.best_point = tuple(float(v) for v in point)
        return value

    def out_of_time(self) -> bool:
        return self.deadline is not None and time.monotonic() >= self.deadline


def _effective_deadline(cfg: OptimizerConfig, deadline: Optional[float]) -> Optional[float]:
    own = None if math.isinf(cfg.time_budget) else time.monotonic() + cfg.time_budget
    if own is None:
        return deadline
    if deadline is None:
        return own
    return min(own, deadline)


def _result(search: _Search, start, status: OptStatus, t0: float) -> OptResult:
    point = search.best_point
    if point is None:  # every evaluation came back non-finite
        point = tuple(float(v) for v in start)
    return OptResult(
        best_point=point,
        best_value=search.best_value,
        exact_zero=status is OptStatus.ZERO_FOUND,
        evaluations=search.evaluations,
        elapsed=time.monotonic() - t0,
        status=status,
    )


def _line_min(search: _Search, x: list, u: Sequence, fx: float) -> tuple:
    """Minimize along x + t*u by bracketing plus golden-section refinement."""
    n = len(x)

    def g(t):
        return search([x[j] + t * u[j] for j in range(n)])

    best_t, best_f = 0.0, fx

    def note(t, ft):
        nonlocal best_t, best_f
        if ft < best_f:
            best_t, best_f = t, ft

    # seed the bracket at the point's own scale so minima hundreds of
    # decades away stay reachable within the geometric expansion
    proj = math.fsum(x[j] * u[j] for j in range(n))
    scale = abs(proj) if math.isfinite(proj) else 1e306
    a, fa = 0.0, fx
    b = 1.0 + 1e-3 * min(scale, 1e306)
    fb = g(b)
    note(b, fb)
    if fb > fa:  # downhill is the other way
        a, b, fa, fb = b, a, fb, fa
    c = b + _PHI * (b - a)
    if not math.isfinite(c):
        c = math.copysign(1e308, b - a)
    fc = g(c)
    note(c, fc)
    for _ in range(80):
        if fc >= fb or abs(c) >= 1e308:
            break
        a, fa = b, fb
        b, fb = c, fc
        c = b + _PHI * (b - a)
        if not math.isfinite(c):
            c = math.copysign(1e308, b - a)
        fc = g(c)
        note(c, fc)
    lo, hi = (a, c) if a <= c else (c, a)
    t1 = hi - _GOLD * (hi - lo)
    t2 = lo + _GOLD * (hi - lo)
    f1, f2 = g(t1), g(t2)
    note(t1, f1)
    note(t2, f2)
    for _ in range(120):
        if abs(hi - lo) <= _LINE_TOL * (abs(t1) + abs(t2)) + 1e-14:
            break
        if f1 <= f2:
            hi, t2, f2 = t2, t1, f1
            t1 = hi - _GOLD * (hi - lo)
            f1 = g(t1)
            note(t1, f1)
        else:
            lo, t1, f1 = t1, t2, f2
            t2 = lo + _GOLD * (hi - lo)
            f2 = g(t2)
            note(t2, f2)
    if best_t == 0.0:
        return x, fx
    return [x[j] + best_t * u[j] for j in range(n)], best_f


def _powell(search: _Search, start: Sequence, cfg: OptimizerConfig) -> tuple:
    """Powell conjugate-direction descent; returns (point, value)."""
    x = [float(v) for v in start]
    fx = search(x)
    n = len(x)
    if n == 0:
        return x, fx
    dirs = [[1.0 if j == i else 0.0 for j in range(n)] for i in range(n)]
    for sweep in range(cfg.local_max_iters):
        f_start = fx
        x_start = list(x)
        drop, drop_idx = 0.0, 0
        for i in range(n):
            f_prev = fx
            x, fx = _line_min(search, x, dirs[i], fx)
            if f_prev - fx > drop:
                drop, drop_idx = f_prev - fx, i
        if not f_start - fx > cfg.local_tol * (abs(f_start) + abs(fx) + 1e-300):
            break
        net = [x[j] - x_start[j] for j in range(n)]
        norm = math.hypot(*net)  # overflow-safe for components near 1e308
        if norm > 0.0 and math.isfinite(norm):
            unit = [v / norm for v in net]
            x, fx = _line_min(search, x, unit, fx)
            dirs[drop_idx] = unit
        if (sweep + 1) % (2 * n) == 0:  # periodic reset against degeneration
            dirs = [[1.0 if j == i else 0.0 for j in range(n)] for i in range(n)]
    return x, fx


def local_minimize(
    obj, start: Sequence, cfg: Optional[OptimizerConfig] = None, deadline: Optional[float] = None
) -> OptResult:
    """One Powell descent from start; stops on exact zero, stall, or cap."""
    cfg = cfg or OptimizerConfig()
    t0 = time.monotonic()
    search = _Search(_pair_fn(obj), _effective_deadline(cfg, deadline))
    status = OptStatus.CONVERGED
    try:
        _powell(search, start, cfg)
    except _ZeroHit:
        status = OptStatus.ZERO_FOUND
    except _OutOfTime:
        status = OptStatus.BUDGET_EXHAUSTED
    return _result(search, start, status, t0)


def basin_hop(
    obj,
    init: Sequence,
    cfg: Optional[OptimizerConfig] = None,
    deadline: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> OptResult:
    """Perturb-and-descend loop from init, keeping strict improvements.

    The Gaussian step scale doubles after two consecutive rejections and
    halves after two consecutive acceptances, clamped to sane bounds.
    """
    cfg = cfg or OptimizerConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    t0 = time.monotonic()
    search = _Search(_pair_fn(obj), _effective_deadline(cfg, deadline))
    status = OptStatus.CONVERGED
    try:
        incumbent = [float(v) for v in init]
        f_inc = search(incumbent)
        start_pt = incumbent
        scale = cfg.perturbation_scale
        accepts = rejects = 0
        n = len(incumbent)
        for _ in range(cfg.hops_per_restart):
            if search.out_of_time():
                raise _OutOfTime
            x, fx = _powell(search, start_pt, cfg)
            if fx < f_inc:
                incumbent, f_inc = x, fx
                accepts, rejects = accepts + 1, 0
                if accepts >= 2:
                    scale, accepts = max(scale / 2.0, _SCALE_MIN), 0
            else:
                rejects, accepts = rejects + 1, 0
                if rejects >= 2:
                    scale, rejects = min(scale * 2.0, _SCALE_MAX), 0
            step = rng.normal(size=n) * scale
            start_pt = [incumbent[j] + step[j] for j in range(n)]
    except _ZeroHit:
        status = OptStatus.ZERO_FOUND
    except _OutOfTime:
        status = OptStatus.BUDGET_EXHAUSTED
    return _result(search, init, status, t0)


def multi_start(
    obj,
    cfg: Optional[OptimizerConfig] = None,
    box_sampler: Optional[Callable] = None,
    deadline: Optional[float] = None,
) -> OptResult:
    """Sequential basin hops from n_restarts sampled starts; best of all.

    Start k draws from an independent RNG stream seeded by (rng_seed, k),
    so a concurrent implementation would reproduce the same per-start
    trajectories.  Short-circuits on the first exact zero.
    """
    cfg = cfg or OptimizerConfig()
    if box_sampler is None:
        raise ValueError("multi_start requires a box_sampler")
    t0 = time.monotonic()
    stage_deadline = _effective_deadline(cfg, deadline)
    run_cfg = replace(cfg, time_budget=math.inf)  # the stage deadline governs
    best: Optional[OptResult] = None
    evaluations = 0
    status = OptStatus.CONVERGED
    for k in range(cfg.n_restarts):
        rng = np.random.default_rng((cfg.rng_seed, k))
        start = box_sampler(rng)
        r = basin_hop(obj, start, run_cfg, deadline=stage_deadline, rng=rng)
        evaluations += r.evaluations
        if best is None or r.best_value < best.best_value:
            best = r
        if r.status is OptStatus.ZERO_FOUND:
            status = OptStatus.ZERO_FOUND
            break
        if r.status is OptStatus.BUDGET_EXHAUSTED:
            status = OptStatus.BUDGET_EXHAUSTED
            break
    return OptResult(
        best_point=best.best_point,
        best_value=best.best_value,
        exact_zero=status is OptStatus.ZERO_FOUND,
        evaluations=evaluations,
        elapsed=time.monotonic() - t0,
        status=status,
    )


def lattice_refine(
    obj: Objective, cfg: Optional[OptimizerConfig] = None, deadline: Optional[float] = None
) -> OptResult:
    """Bounded discrete offset search around the anchor, then relaxation.

    Phase one sweeps coordinates, trying offsets -1, +1, -2, +2, ...,
    +/-s3_bound and keeping strict improvements until a full sweep changes
    nothing.  Phase two, if still nonzero, hops over real-valued offsets
    (rounding happens inside evaluation).  Offsets in the result are
    integers either way.
    """
    cfg = cfg or OptimizerConfig()
    if obj.kind is not ObjectiveKind.OFFSET:
        raise ValueError("lattice_refine requires an offset objective")
    t0 = time.monotonic()
    stage_deadline = _effective_deadline(cfg, deadline)
    search = _Search(_pair_fn(obj), stage_deadline)
    n = obj.dim
    candidates = []
    for k in range(1, cfg.s3_bound + 1):
        candidates.extend((-k, k))
    status = OptStatus.CONVERGED
    offs = [0.0] * n
    try:
        f_cur = search(offs)
        changed = True
        while changed:
            changed = False
            for j in range(n):
                if search.out_of_time():
                    raise _OutOfTime
                kept = offs[j]
                for cand in candidates:
                    if cand == kept:
                        continue
                    trial = list(offs)
                    trial[j] = float(cand)
                    f_trial = search(trial)
                    if f_trial < f_cur:
                        offs, f_cur = trial, f_trial
                        kept = cand
                        changed = True
        run_cfg = replace(cfg, time_budget=math.inf)
        rng = np.random.default_rng((cfg.rng_seed, 3))
        hop = basin_hop(obj, offs, run_cfg, deadline=stage_deadline, rng=rng)
        search.evaluations += hop.evaluations
        if hop.best_value < search.best_value:
            search.best_value = hop.best_value
            search.best_point = hop.best_point
        if hop.status is OptStatus.ZERO_FOUND:
            status = OptStatus.ZERO_FOUND
        elif hop.status is OptStatus.BUDGET_EXHAUSTED:
            status = OptStatus.BUDGET_EXHAUSTED
    except _ZeroHit:
        status = OptStatus.ZERO_FOUND
    except _OutOfTime:
        status = OptStatus.BUDGET_EXHAUSTED
    result = _result(search, [0.0] * n, status, t0)
    # evaluation rounds continuous offsets the same way, so the value is kept
    rounded = tuple(float(_round_offset(v)) for v in result.best_point)
    return replace(result, best_point=rounded)


def sample_start_box(f: Formula, rng: np.random.Generator) -> list:
    """Mixture start sampler: special values, a local box, and wide decades.

    Per coordinate: 20% exact specials (0, +/-1, +/-smallest-normal, plus
    any constant of the same format appearing in the formula), 40% uniform
    in [-10, 10], 40% sign * 10^u with u uniform in [-300, 300], clamped
    to the variable's format range.
    """
    point = []
    consts = f.constants()
    for fmt in f.formats:
        specials = [0.0, 1.0, -1.0, fmt.smallest_normal, -fmt.smallest_normal]
        specials.extend(c.to_float() for c in consts if c.fmt is fmt)
        r = rng.random()
        if r < 0.2:
            v = specials[int(rng.integers(len(specials)))]
        elif r < 0.6:
            v = float(rng.uniform(-10.0, 10.0))
        else:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            v = sign * 10.0 ** float(rng.uniform(-300.0, 300.0))
        v = max(-fmt.max_finite, min(fmt.max_finite, v))
        point.append(v)
    return point
