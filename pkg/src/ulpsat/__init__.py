"""ulpsat: floating-point SMT solving by staged numerical optimization.

The package decides quantifier-free IEEE-754 formulas by minimizing
representing functions: a projection-aided squared objective for fast
descent, a squared-ULP objective whose zeros are exactly the models, and
a discrete per-variable ULP-offset refinement.  Sat verdicts carry a
model revalidated by a bit-exact evaluator; unsat verdicts are guesses
scored by the best residual seen, never proofs.

Typical use:

    from ulpsat import parse_script, solve
    formula, info = parse_script(open("query.smt2").read())
    verdict = solve(formula)
"""

from ulpsat.engine import (
    ALL_ABLATIONS,
    EngineConfig,
    InternalInconsistencyError,
    Verdict,
    VerdictKind,
    solve,
)
from ulpsat.lattice import BINARY32, BINARY64, CmpOp, FpFormat, FpScalar
from ulpsat.optimizer import OptimizerConfig
from ulpsat.smt.ast import Assignment, Formula
from ulpsat.smt.evaluator import is_model
from ulpsat.smt.parser import ParseError, UnsupportedFeatureError, parse, parse_script

__version__ = "0.1.0"

__all__ = [
    "ALL_ABLATIONS",
    "Assignment",
    "BINARY32",
    "BINARY64",
    "CmpOp",
    "EngineConfig",
    "Formula",
    "FpFormat",
    "FpScalar",
    "InternalInconsistencyError",
    "OptimizerConfig",
    "ParseError",
    "UnsupportedFeatureError",
    "Verdict",
    "VerdictKind",
    "__version__",
    "is_model",
    "parse",
    "parse_script",
    "solve",
]
