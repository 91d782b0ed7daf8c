"""Command-line front door: solve files, benchmark corpora, run self-checks.

Exit codes: 0 for a decided verdict (or a clean benchmark/self-check run),
2 for timeout, 1 for any error, argument problems included.  The first
stdout line of `solve` is always one of the verdict strings `sat`,
`unsat-guess`, `timeout`, `unknown`, `error`.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ulpsat import selfcheck
from ulpsat.engine import EngineConfig, VerdictKind, solve
from ulpsat.kernels import available_backends
from ulpsat.kernels.program import compile_formula
from ulpsat.lattice import BINARY32, BINARY64, CmpOp, FpScalar, round_to_float32, to_index
from ulpsat.linalg import ProjectorError, build_projector, extract_linear
from ulpsat.objectives import ABLATION_FLAGS, snap_point
from ulpsat.optimizer import OptimizerConfig
from ulpsat.smt.ast import Atom, Const, Formula, Var
from ulpsat.smt.evaluator import is_model
from ulpsat.smt.parser import ParseError, parse_script
from ulpsat.smt.printer import format_model

__all__ = ["main"]

SUMMARY_FIELDS = [
    "n",
    "n_sat",
    "n_unsat_guess",
    "n_timeout",
    "n_error",
    "sat_recall",
    "timeout_rate",
    "mean_time_s",
    "median_time_s",
]

RUN_FIELDS = ["path", "run", "verdict", "time", "seed"]


@dataclass(frozen=True)
class RunRecord:
    """One solver invocation inside a benchmark suite."""

    path: str
    run: int
    verdict: str
    time: float
    model_text: Optional[str]
    seed: int
    config_digest: str


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 by default, which collides with the
        # timeout exit code; fold usage problems into the error code
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _split_ablation(text: Optional[str]) -> frozenset:
    if not text:
        return frozenset()
    return frozenset(t.strip() for t in text.split(",") if t.strip())


def _engine_config(args, seed: Optional[int] = None, ablations=None) -> EngineConfig:
    base_seed = args.seed if seed is None else seed

    def stage(hops: int) -> OptimizerConfig:
        return OptimizerConfig(
            n_restarts=1,
            hops_per_restart=hops,
            rng_seed=base_seed,
            s3_bound=args.s3_bound,
        )

    if ablations is None:
        ablations = _split_ablation(getattr(args, "ablation", None))
    return EngineConfig(
        square_opt=stage(args.hops1),
        ulp_opt=stage(args.hops2),
        offset_opt=stage(args.hops3),
        restarts=args.starts,
        time_budget=args.timeout,
        ablations=ablations,
    )


def _config_digest(cfg: EngineConfig) -> str:
    blob = "|".join(
        [
            repr(cfg.time_budget),
            str(cfg.restarts),
            ",".join(sorted(cfg.ablations)),
            str(cfg.square_opt.hops_per_restart),
            str(cfg.ulp_opt.hops_per_restart),
            str(cfg.offset_opt.hops_per_restart),
            str(cfg.offset_opt.s3_bound),
            str(cfg.square_opt.rng_seed),
        ]
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fail(message: str) -> int:
    print("error")
    print(message, file=sys.stderr)
    return 1


# ---------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot read {args.file}: {exc}")
    try:
        formula, info = parse_script(text)
    except ParseError as exc:
        return _fail(f"{args.file}: {exc}")
    try:
        cfg = _engine_config(args)
    except ValueError as exc:
        return _fail(str(exc))

    if not info.saw_check_sat:
        # the script never asked for a verdict, so none is offered
        print("unknown")
        return 0

    t0 = time.perf_counter()
    verdict = solve(formula, cfg)
    elapsed = time.perf_counter() - t0

    print(verdict.kind.value)
    status = 0
    if verdict.kind is VerdictKind.SAT:
        block = format_model(formula, verdict.model)
        print(block)
        if args.model_out:
            try:
                Path(args.model_out).write_text(block + "\n", encoding="utf-8")
            except OSError as exc:
                print(f"cannot write {args.model_out}: {exc}", file=sys.stderr)
                status = 1
    elif verdict.kind is VerdictKind.UNSAT_GUESS:
        if args.verbose:
            print(f"score {verdict.score!r}")
    else:
        status = 2
    if args.verbose:
        print(f"time {elapsed:.3f}s")
    if args.stats:
        for rec in verdict.stage_trace:
            r = rec.result
            print(
                f"restart {rec.restart} {rec.stage}: {r.status.name.lower()}"
                f" value {r.best_value!r} evals {r.evaluations}"
            )
    return status


# ---------------------------------------------------------------- bench


def _read_expected(path: str) -> dict:
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "status"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected CSV needs a path,status header")
        for row in reader:
            status = row["status"].strip()
            if status not in ("sat", "unsat"):
                raise ValueError(f"{path}: status must be sat or unsat, got {status!r}")
            table[Path(row["path"]).name] = status
    return table


def _run_file(path: Path, args, ablations) -> tuple[list, Optional[str]]:
    """All repeats of one file; returns (records, soundness_violation)."""
    try:
        formula, _ = parse_script(path.read_text(encoding="utf-8"))
    except (OSError, ParseError) as exc:
        print(f"{path.name}: {exc}", file=sys.stderr)
        digest = "unparsed"
        records = [
            RunRecord(path.name, run, "error", 0.0, None, args.seed + run, digest)
            for run in range(args.repeats)
        ]
        return records, None

    records = []
    for run in range(args.repeats):
        run_seed = args.seed + run
        cfg = _engine_config(args, seed=run_seed, ablations=ablations)
        t0 = time.perf_counter()
        verdict = solve(formula, cfg)
        elapsed = time.perf_counter() - t0
        model_text = None
        if verdict.kind is VerdictKind.SAT:
            # tripwire: recheck with the independent evaluator before counting
            if not is_model(formula, verdict.model):
                return records, (
                    f"{path.name} run {run} (seed {run_seed}): sat model failed"
                    " independent revalidation"
                )
            model_text = format_model(formula, verdict.model)
        records.append(
            RunRecord(
                path.name,
                run,
                verdict.kind.value,
                elapsed,
                model_text,
                run_seed,
                _config_digest(cfg),
            )
        )
    return records, None


def _aggregate_instance(records: list, cap: float) -> tuple[str, float]:
    """Instance verdict and time under the any-repeat-decides rule."""
    verdicts = [r.verdict for r in records]
    decided = [r.time for r in records if r.verdict in ("sat", "unsat-guess")]
    if "sat" in verdicts:
        return "sat", math.fsum(decided) / len(decided)
    if "unsat-guess" in verdicts:
        return "unsat-guess", math.fsum(decided) / len(decided)
    if "timeout" in verdicts:
        return "timeout", cap
    return "error", math.fsum(r.time for r in records) / len(records)


def _summarize(instances: dict, expected: Optional[dict], cap: float) -> dict:
    n = len(instances)
    counts = {"sat": 0, "unsat-guess": 0, "timeout": 0, "error": 0}
    times = []
    for verdict, t in instances.values():
        counts[verdict] += 1
        times.append(t)
    times.sort()
    recall = ""
    if expected is not None:
        covered = [name for name in instances if name in expected]
        gt_sat = [name for name in covered if expected[name] == "sat"]
        if gt_sat:
            hits = sum(1 for name in gt_sat if instances[name][0] == "sat")
            recall = repr(hits / len(gt_sat))
    return {
        "n": n,
        "n_sat": counts["sat"],
        "n_unsat_guess": counts["unsat-guess"],
        "n_timeout": counts["timeout"],
        "n_error": counts["error"],
        "sat_recall": recall,
        "timeout_rate": repr(counts["timeout"] / n),
        "mean_time_s": f"{math.fsum(times) / n:.6f}",
        # lower-middle median: even counts take the smaller central element
        "median_time_s": f"{times[(n - 1) // 2]:.6f}",
    }


def _bench_variants(ablation_arg: Optional[str]) -> Optional[list]:
    """(label, flags) rows to run; None means a plain single-config suite."""
    if ablation_arg is None:
        return None
    if ablation_arg == "all":
        names = sorted(ABLATION_FLAGS | {"no_s1", "no_s3"})
    else:
        names = sorted(_split_ablation(ablation_arg))
    return [("full", frozenset())] + [(name, frozenset({name})) for name in names]


def cmd_bench(args) -> int:
    bench_dir = Path(args.dir)
    files = sorted(bench_dir.glob("*.smt2"))
    if not files:
        print(f"no .smt2 files under {args.dir}", file=sys.stderr)
        return 1
    if args.repeats < 1:
        print("--repeats must be positive", file=sys.stderr)
        return 1
    expected = None
    if args.expected:
        try:
            expected = _read_expected(args.expected)
        except (OSError, ValueError) as exc:
            print(str(exc), file=sys.stderr)
            return 1
        missing = [p.name for p in files if p.name not in expected]
        if missing:
            print(
                f"warning: {len(missing)} of {len(files)} files have no expected"
                " status; sat_recall covers the rest",
                file=sys.stderr,
            )
    try:
        _engine_config(args, ablations=frozenset())
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 1

    variants = _bench_variants(args.ablation)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    summary_rows = []
    for label, flags in variants if variants is not None else [("full", frozenset())]:
        instances = {}
        suffix = f"_{label}" if variants is not None else ""
        runs_path = out_dir / f"runs{suffix}.csv"
        with open(runs_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RUN_FIELDS)
            for path in files:
                records, violation = _run_file(path, args, flags)
                if violation is None and expected is not None:
                    for rec in records:
                        if rec.verdict == "sat" and expected.get(rec.path) == "unsat":
                            violation = (
                                f"{rec.path} run {rec.run} (seed {rec.seed}):"
                                " reported sat but expected unsat"
                            )
                            break
                if violation is not None:
                    print(f"soundness violation: {violation}", file=sys.stderr)
                    print("suite aborted", file=sys.stderr)
                    return 1
                for rec in records:
                    writer.writerow(
                        [rec.path, rec.run, rec.verdict, f"{rec.time:.6f}", rec.seed]
                    )
                instances[path.name] = _aggregate_instance(records, args.timeout)
        summary = _summarize(instances, expected, args.timeout)
        summary_rows.append((label, summary))
        shown = " ".join(f"{k}={summary[k]}" for k in SUMMARY_FIELDS if k != "n")
        print(f"{label}: n={summary['n']} {shown}")

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if variants is not None:
            writer.writerow(["variant"] + SUMMARY_FIELDS)
            for label, summary in summary_rows:
                writer.writerow([label] + [summary[k] for k in SUMMARY_FIELDS])
        else:
            writer.writerow(SUMMARY_FIELDS)
            writer.writerow([summary_rows[0][1][k] for k in SUMMARY_FIELDS])
    print(f"wrote {summary_path}")
    return 0


# ---------------------------------------------------------------- selftest


def cmd_selftest(args) -> int:
    rows = selfcheck.run(seed=args.seed, name_filter=args.filter)
    if not rows:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return 1
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name:<{width}} {detail}")
    passed = sum(1 for _, ok, _ in rows if ok)
    print(f"{passed}/{len(rows)} checks passed")
    return 0 if passed == len(rows) else 1


# ---------------------------------------------------------------- kernels


def _kernel_bench_formula(rng: np.random.Generator, n_vars: int, n_clauses: int) -> Formula:
    """Synthetic mixed-format formula with an affine part for the projector."""
    formats = [BINARY32 if i % 3 == 2 else BINARY64 for i in range(n_vars)]
    variables = [(f"v{i}", formats[i]) for i in range(n_vars)]

    def const(i: int) -> Const:
        c = float(rng.normal(0.0, 4.0))
        if formats[i].width == 32:
            c = round_to_float32(c)
        return Const(FpScalar.finite(c, formats[i]))

    clauses = [
        (Atom(Var("v0", formats[0]), const(0), CmpOp.EQ),),
        (Atom(Var("v1", formats[1]), Var("v0", formats[0]), CmpOp.EQ),),
    ]
    ops = [CmpOp.LE, CmpOp.LT, CmpOp.GE, CmpOp.GT, CmpOp.EQ]
    while len(clauses) < n_clauses:
        width = int(rng.integers(1, 4))
        atoms = []
        for _ in range(width):
            i = int(rng.integers(0, n_vars))
            atoms.append(Atom(Var(f"v{i}", formats[i]), const(i), ops[int(rng.integers(0, 5))]))
        clauses.append(tuple(atoms))
    return Formula(variables, clauses=clauses)


def cmd_kernels(args) -> int:
    backends = available_backends()
    rng = np.random.default_rng(args.seed)
    formula = _kernel_bench_formula(rng, args.vars, args.clauses)
    prog = compile_formula(formula)

    system, _ = extract_linear(formula)
    arrays = ()
    if system is not None:
        try:
            projector = build_projector(system)
            arrays = (
                np.ascontiguousarray(system.a, dtype=np.float64),
                np.ascontiguousarray(system.b, dtype=np.float64),
                np.ascontiguousarray(projector.p, dtype=np.float64),
            )
        except ProjectorError:
            arrays = ()

    points = []
    anchors = []
    offsets = []
    for _ in range(args.evals):
        raw = rng.uniform(-20.0, 20.0, size=args.vars)
        snapped = snap_point(raw, formula.formats)
        points.append(np.ascontiguousarray(snapped, dtype=np.float64))
        anchors.append(
            np.array(
                [to_index(FpScalar.finite(v, fmt)) for v, fmt in zip(snapped, formula.formats)],
                dtype=np.int64,
            )
        )
        offsets.append(rng.integers(-8, 9, size=args.vars).astype(np.int64))

    stages = ("stage1", "stage2", "stage3")
    rates = {}
    sums = {}
    for name, mod in sorted(backends.items()):
        kernel = mod.Kernel(prog, *arrays)
        rates[name] = {}
        sums[name] = {}
        t0 = time.perf_counter()
        acc = [kernel.stage1(x, False) for x in points]
        rates[name]["stage1"] = args.evals / (time.perf_counter() - t0)
        sums[name]["stage1"] = (math.fsum(acc), 0)
        t0 = time.perf_counter()
        out = [kernel.stage2(x, False) for x in points]
        rates[name]["stage2"] = args.evals / (time.perf_counter() - t0)
        sums[name]["stage2"] = (math.fsum(v for v, _ in out), sum(e for _, e in out))
        t0 = time.perf_counter()
        out = [kernel.stage3(a, o, False) for a, o in zip(anchors, offsets)]
        rates[name]["stage3"] = args.evals / (time.perf_counter() - t0)
        sums[name]["stage3"] = (math.fsum(v for v, _ in out), sum(e for _, e in out))

    names = sorted(backends)
    for stage in stages:
        if len({sums[name][stage] for name in names}) != 1:
            print(f"backend disagreement on {stage}: {sums}", file=sys.stderr)
            return 1

    print(f"{args.evals} evaluations, {args.vars} variables, {args.clauses} clauses")
    header = f"{'backend':<10}" + "".join(f"{s + ' ev/s':>16}" for s in stages)
    print(header)
    for name in names:
        print(f"{name:<10}" + "".join(f"{rates[name][s]:>16.3g}" for s in stages))
    if "compiled" in rates and "python" in rates:
        print(
            f"{'speedup':<10}"
            + "".join(
                f"{rates['compiled'][s] / rates['python'][s]:>15.1f}x" for s in stages
            )
        )
    else:
        print("compiled backend unavailable; python only")
    print("backends agree bit-for-bit on all three stages")
    return 0


# ---------------------------------------------------------------- parser


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timeout", type=float, default=1200.0, metavar="SECS",
                   help="wall-clock budget in seconds (default 1200)")
    p.add_argument("--seed", type=_u64, default=0, help="base RNG seed")
    p.add_argument("--starts", type=int, default=10, metavar="N",
                   help="outer restart count (default 10)")
    p.add_argument("--hops1", type=int, default=30, metavar="N",
                   help="basin hops in the squared-residual stage")
    p.add_argument("--hops2", type=int, default=10, metavar="N",
                   help="basin hops in the ULP-distance stage")
    p.add_argument("--hops3", type=int, default=10, metavar="N",
                   help="basin hops in the lattice-offset stage")
    p.add_argument("--s3-bound", type=int, default=8, dest="s3_bound", metavar="N",
                   help="single-coordinate sweep radius in the offset stage")


def _build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="ulpsat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="decide one SMT-LIB file")
    p.add_argument("file")
    _add_engine_flags(p)
    p.add_argument("--ablation", default=None, metavar="FLAG[,FLAG...]",
                   help="disable pipeline pieces (no_s1, no_s3, no_projection,"
                        " absolute_residuals, no_clause_product)")
    p.add_argument("--stats", action="store_true", help="print the stage trace")
    p.add_argument("--model-out", default=None, dest="model_out", metavar="FILE",
                   help="also write a sat model block to FILE")
    p.add_argument("--verbose", action="store_true",
                   help="print score and timing lines")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="run a directory of .smt2 files")
    p.add_argument("dir")
    p.add_argument("--expected", default=None, metavar="CSV",
                   help="ground-truth statuses (path,status with sat|unsat)")
    p.add_argument("--repeats", type=int, default=1, metavar="R",
                   help="solver runs per file (default 1)")
    p.add_argument("--out", default=".", metavar="DIR",
                   help="directory for runs/summary CSVs (default .)")
    _add_engine_flags(p)
    p.add_argument("--ablation", nargs="?", const="all", default=None,
                   metavar="FLAG[,FLAG...]",
                   help="compare the full pipeline against ablated variants"
                        " (bare flag means all five)")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("selftest", help="run the bundled property checks")
    p.add_argument("--filter", default="", metavar="SUBSTR",
                   help="run only checks whose name contains SUBSTR")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("kernels", help="benchmark the evaluation backends")
    p.add_argument("--evals", type=int, default=20000, metavar="N",
                   help="evaluations per stage (default 20000)")
    p.add_argument("--vars", type=int, default=6, metavar="N")
    p.add_argument("--clauses", type=int, default=12, metavar="N")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(fn=cmd_kernels)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
