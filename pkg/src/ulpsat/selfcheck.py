"""Bundled self-checks: property suites and the desk-scale corpus run.

Each check is a named callable returning (ok, detail).  The CLI selftest
subcommand runs them, prints one row per check, and fails the process if
any row fails.  Checks accept a seed so reruns can vary the randomness;
the bundled corpus must keep its verdict classes under any seed.
"""

from __future__ import annotations

import math
from importlib import resources
from typing import Callable, Iterator

import numpy as np

from ulpsat.engine import EngineConfig, VerdictKind, solve
from ulpsat.kernels import available_backends, compile_formula
from ulpsat.lattice import (
    BINARY32,
    BINARY64,
    CmpOp,
    FpScalar,
    from_index,
    n_ulp,
    to_index,
    ulp_distance,
)
from ulpsat.objectives import (
    build_square_objective,
    build_ulp_objective,
    evaluate,
    snap_point,
)
from ulpsat.optimizer import OptimizerConfig
from ulpsat.smt.ast import Assignment, Atom, Const, Formula, Var
from ulpsat.smt.evaluator import is_model
from ulpsat.smt.parser import parse

Check = Callable[[int], tuple[bool, str]]

_REGISTRY: list[tuple[str, Check]] = []


def _check(name: str):
    def deco(fn: Check) -> Check:
        _REGISTRY.append((name, fn))
        return fn

    return deco


def checks() -> list[tuple[str, Check]]:
    return list(_REGISTRY)


def corpus_dir():
    return resources.files("ulpsat") / "corpus"


def corpus_config(seed: int = 0) -> EngineConfig:
    """Engine settings for the bundled corpus: small, fast, seed-stable."""
    return EngineConfig(
        square_opt=OptimizerConfig(n_restarts=1, hops_per_restart=12, rng_seed=seed),
        ulp_opt=OptimizerConfig(n_restarts=1, hops_per_restart=8, rng_seed=seed),
        offset_opt=OptimizerConfig(n_restarts=1, hops_per_restart=6, rng_seed=seed),
        restarts=8,
        time_budget=20.0,
    )


def _toy() -> Formula:
    x, y = Var("x", BINARY64), Var("y", BINARY64)
    one = Const(FpScalar.finite(1.0, BINARY64))
    return Formula(
        [("x", BINARY64), ("y", BINARY64)],
        clauses=[(Atom(x, one, CmpOp.EQ),), (Atom(y, x, CmpOp.EQ),)],
    )


@_check("lattice-roundtrip")
def _lattice_roundtrip(seed: int):
    rng = np.random.default_rng(seed)
    for i in range(4000):
        x = float(rng.normal() * 10.0 ** rng.integers(-200, 201))
        v = FpScalar.from_float(x, BINARY64)
        if not v.is_finite:
            continue
        k = int(rng.integers(-(10**6), 10**6 + 1))
        stepped = n_ulp(k, v)
        if to_index(stepped) != to_index(v) + k:
            continue  # clamped at a finite extreme; round trip not promised
        back = n_ulp(-k, stepped)
        if back.to_float() != v.to_float():
            return False, f"roundtrip broke at x={x!r} k={k}"
    return True, "4000 round trips"


@_check("lattice-monotone")
def _lattice_monotone(seed: int):
    rng = np.random.default_rng(seed)
    base = int(rng.integers(0, 2**22))
    prev = None
    for i in range(base, base + 20000):
        v = from_index(i, BINARY32)
        if prev is not None and not v.to_float() > prev:
            return False, f"ordinal {i} not increasing"
        if to_index(v) != i:
            return False, f"ordinal {i} does not invert"
        prev = v.to_float()
    return True, "20000 consecutive ordinals"


_HOLDS = {
    CmpOp.EQ: lambda l, r: l == r,
    CmpOp.LE: lambda l, r: l <= r,
    CmpOp.LT: lambda l, r: l < r,
    CmpOp.GE: lambda l, r: l >= r,
    CmpOp.GT: lambda l, r: l > r,
}


@_check("ulp-distance-minimal")
def _ulp_distance_minimal(seed: int):
    rng = np.random.default_rng(seed)
    ops = list(_HOLDS)
    f32 = np.float32
    up, down = f32(np.inf), f32(-np.inf)
    for i in range(2000):
        a = f32(rng.normal() * 10.0 ** rng.integers(-3, 4))
        b = a
        for _ in range(int(rng.integers(0, 12))):
            b = np.nextafter(b, up if rng.random() < 0.5 else down)
        op = ops[rng.integers(len(ops))]
        got = ulp_distance(
            FpScalar.from_float(float(a), BINARY32),
            FpScalar.from_float(float(b), BINARY32),
            op,
        )
        # walk the left operand one lattice step at a time until it holds
        holds = _HOLDS[op]
        if op is CmpOp.EQ:
            toward = b
        elif op in (CmpOp.LE, CmpOp.LT):
            toward = down
        else:
            toward = up
        steps, cur = 0, a
        while not holds(cur, b):
            cur = np.nextafter(cur, toward)
            steps += 1
            if steps > 64:
                return False, f"walk did not terminate at ({a!r}, {b!r}, {op})"
        if got != steps:
            return False, f"atom ({a!r} {op} {b!r}): got {got}, brute {steps}"
    return True, "2000 atoms against brute-force walk"


@_check("square-toy-table")
def _square_toy(seed: int):
    f = _toy()
    obj = build_square_objective(f)
    pts = {(2.0, 2.0): 2.0, (2.0, 1.0): 1.0, (1.0, 1.0): 0.0}
    for pt, want in pts.items():
        got, _ = evaluate(obj, list(pt))
        if got != want:
            return False, f"projection objective at {pt}: {got} != {want}"
    naive = build_square_objective(f, ablations={"no_projection"})
    table = {(2.0, 2.0): 1.0, (2.0, 1.0): 2.0, (1.0, 1.0): 0.0, (0.0, 1.0): 2.0, (0.0, 0.0): 1.0}
    for pt, want in table.items():
        got, _ = evaluate(naive, list(pt))
        if got != want:
            return False, f"naive objective at {pt}: {got} != {want}"
    return True, "8 reference values exact"


@_check("ulp-near-miss")
def _ulp_near_miss(seed: int):
    f = _toy()
    obj = build_ulp_objective(f)
    x = math.nextafter(1.0, 2.0)
    y = math.nextafter(math.nextafter(x, 2.0), 2.0)
    got, exact = evaluate(obj, [x, y])
    if got != 5.0 or exact:
        return False, f"near-miss value {got}, exact={exact}"
    return True, "1 ulp + 2 ulp = 5 exactly"


def _mini_formula(rng) -> Formula:
    fmts = [BINARY32 if rng.random() < 0.5 else BINARY64 for _ in range(2)]
    variables = [(f"v{i}", fmts[i]) for i in range(2)]
    ops = [CmpOp.EQ, CmpOp.LE, CmpOp.LT, CmpOp.GE, CmpOp.GT]
    clauses = []
    for _ in range(int(rng.integers(1, 4))):
        i = int(rng.integers(2))
        fmt = fmts[i]
        lhs = Var(f"v{i}", fmt)
        c = FpScalar.from_float(float(rng.normal() * 10.0 ** rng.integers(-2, 3)), fmt)
        if not c.is_finite:
            c = FpScalar.finite(1.0, fmt)
        clauses.append((Atom(lhs, Const(c), ops[rng.integers(len(ops))]),))
    return Formula(variables, clauses=clauses)


@_check("zero-iff-model")
def _zero_iff_model(seed: int):
    rng = np.random.default_rng(seed)
    zeros = 0
    for i in range(2500):
        f = _mini_formula(rng)
        doubles = []
        for fmt in f.formats:
            v = FpScalar.from_float(float(rng.normal() * 10.0 ** rng.integers(-2, 3)), fmt)
            doubles.append(v.to_float() if v.is_finite else 1.0)
        a = Assignment.from_doubles(doubles, f.formats)
        obj = build_ulp_objective(f)
        val, exact = evaluate(obj, a.to_doubles())
        if exact != is_model(f, a) or (val == 0.0) != exact:
            return False, f"mismatch on instance {i}"
        zeros += exact
    if zeros == 0:
        return False, "no exact zeros sampled; generator too wild"
    return True, f"2500 pairs, {zeros} exact zeros"


@_check("kernel-backends-agree")
def _backends_agree(seed: int):
    mods = available_backends()
    if len(mods) < 2:
        return True, "single backend present; nothing to compare"
    rng = np.random.default_rng(seed)
    for i in range(400):
        f = _mini_formula(rng)
        prog = compile_formula(f)
        raw = [float(rng.normal() * 10.0 ** rng.integers(-2, 3)) for _ in f.formats]
        pt = snap_point(raw, f.formats)
        xs = np.ascontiguousarray(pt, dtype=np.float64)
        vals = set()
        for mod in mods.values():
            k = mod.Kernel(prog)
            vals.add(k.stage2(xs, False))
        if len(vals) != 1:
            return False, f"backends disagree on instance {i}: {vals}"
    return True, f"{len(mods)} backends bit-identical on 400 instances"


@_check("engine-toy")
def _engine_toy(seed: int):
    v = solve(_toy(), corpus_config(seed))
    if v.kind is not VerdictKind.SAT:
        return False, f"verdict {v.kind.value}"
    if v.model.to_doubles() != [1.0, 1.0]:
        return False, f"model {v.model.to_doubles()}"
    return True, "sat with exact model (1, 1)"


@_check("engine-subnormal-interval")
def _engine_interval(seed: int):
    x = Var("x", BINARY64)
    f = Formula(
        [("x", BINARY64)],
        clauses=[
            (Atom(x, Const(FpScalar.finite(0.0, BINARY64)), CmpOp.GT),),
            (Atom(x, Const(FpScalar.finite(1e-160, BINARY64)), CmpOp.LE),),
        ],
    )
    v = solve(f, corpus_config(seed))
    if v.kind is not VerdictKind.SAT:
        return False, f"verdict {v.kind.value}"
    m = v.model.to_doubles()[0]
    if not 0.0 < m <= 1e-160:
        return False, f"witness {m!r} outside (0, 1e-160]"
    return True, f"witness {m!r}"


def corpus_expected() -> dict[str, str]:
    text = (corpus_dir() / "expected.csv").read_text(encoding="utf-8")
    out = {}
    for line in text.strip().splitlines()[1:]:
        path, status = line.rsplit(",", 1)
        out[path.strip()] = status.strip()
    return out


def corpus_files() -> Iterator:
    for entry in sorted(corpus_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".smt2"):
            yield entry


@_check("corpus-verdicts")
def _corpus_verdicts(seed: int):
    expected = corpus_expected()
    cfg = corpus_config(seed)
    ran = 0
    for entry in corpus_files():
        want = expected.get(entry.name)
        if want is None:
            return False, f"{entry.name} missing from expected.csv"
        f = parse(entry.read_text(encoding="utf-8"))
        v = solve(f, cfg)
        if want == "sat":
            if v.kind is not VerdictKind.SAT:
                return False, f"{entry.name}: expected sat, got {v.kind.value}"
            if not is_model(f, v.model):
                return False, f"{entry.name}: emitted non-model"
        else:
            if v.kind is not VerdictKind.UNSAT_GUESS:
                return False, f"{entry.name}: expected unsat-guess, got {v.kind.value}"
        ran += 1
    return True, f"{ran} corpus files in class"


def run(seed: int = 0, name_filter: str = "") -> list[tuple[str, bool, str]]:
    """Run all (or filtered) checks; returns (name, ok, detail) rows."""
    rows = []
    for name, fn in _REGISTRY:
        if name_filter and name_filter not in name:
            continue
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"crashed: {exc!r}"
        rows.append((name, ok, detail))
    return rows
