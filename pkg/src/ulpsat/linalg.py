"""Linear-equality extraction and orthogonal projection onto {x : Ax = b}.

Unit clauses whose atom is an equality of affine terms are compiled into a
real matrix system; the projection closed form x - A^T (A A^T)^+ (Ax - b)
then gives the closest point on the equality manifold and the squared gap,
which the squared-residual objective uses as its geometry-aware term.

The pseudoinverse is computed by cyclic Jacobi eigendecomposition of the
(small, symmetric PSD) Gram matrix A A^T, treating eigenvalues below
tol * lambda_max as zero, so rank deficiency and inconsistent systems are
handled without special cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from ulpsat.lattice import CmpOp
from ulpsat.smt.ast import Add, Const, Div, Formula, Mul, Neg, Sub, Term, Var

__all__ = [
    "LinearSystem",
    "Projector",
    "ProjectorError",
    "build_projector",
    "extract_linear",
    "project",
    "pseudoinverse",
]

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class LinearSystem:
    """Rows of A x = b over the full variable vector (d columns)."""

    a: np.ndarray
    b: np.ndarray
    var_map: tuple[int, ...]  # variable indices with a nonzero column

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]


class ProjectorError(Exception):
    """Factorization produced non-finite entries; callers skip projection."""


@dataclass(frozen=True)
class Projector:
    """Cached projection operator P = A^T (A A^T)^+ for a LinearSystem."""

    p: np.ndarray  # (d, m)
    gram: np.ndarray  # (m, m), kept for diagnostics
    rank: int
    tol: float


def _affine(term: Term, var_index: dict) -> Optional[tuple[dict, Fraction]]:
    """term -> (coefficients by variable index, constant), or None if nonlinear.

    Coefficients are exact rationals; FP rounding of the source arithmetic is
    deliberately ignored (the system describes real-valued geometry).
    """
    if isinstance(term, Var):
        return {var_index[term.name]: Fraction(1)}, Fraction(0)
    if isinstance(term, Const):
        v = term.value.to_float()
        if not math.isfinite(v):
            return None
        return {}, Fraction(v)
    if isinstance(term, Neg):
        sub = _affine(term.arg, var_index)
        if sub is None:
            return None
        coeffs, const = sub
        return {k: -c for k, c in coeffs.items()}, -const
    if isinstance(term, (Add, Sub)):
        left = _affine(term.lhs, var_index)
        right = _affine(term.rhs, var_index)
        if left is None or right is None:
            return None
        (lc, lk), (rc, rk) = left, right
        sign = 1 if isinstance(term, Add) else -1
        coeffs = dict(lc)
        for k, c in rc.items():
            coeffs[k] = coeffs.get(k, Fraction(0)) + sign * c
        return coeffs, lk + sign * rk
    if isinstance(term, Mul):
        left = _affine(term.lhs, var_index)
        right = _affine(term.rhs, var_index)
        if left is None or right is None:
            return None
        (lc, lk), (rc, rk) = left, right
        if not lc:
            return {k: lk * c for k, c in rc.items()}, lk * rk
        if not rc:
            return {k: rk * c for k, c in lc.items()}, rk * lk
        return None  # bilinear
    if isinstance(term, Div):
        left = _affine(term.lhs, var_index)
        right = _affine(term.rhs, var_index)
        if left is None or right is None:
            return None
        (lc, lk), (rc, rk) = left, right
        if rc or rk == 0:
            return None  # variable or zero divisor
        return {k: c / rk for k, c in lc.items()}, lk / rk
    return None


def extract_linear(f: Formula) -> tuple[Optional[LinearSystem], Formula]:
    """Split unit-clause affine equalities into (system, remainder formula).

    Only single-atom clauses feed the system; equalities inside disjunctions
    and anything nonlinear stay in the remainder.  Rows whose coefficients
    all cancel are left in the remainder too.
    """
    if f.clauses is None:
        return None, f
    d = f.dim
    rows, rhs, rest = [], [], []
    for clause in f.clauses:
        extracted = False
        if len(clause) == 1 and clause[0].op is CmpOp.EQ:
            atom = clause[0]
            left = _affine(atom.lhs, f.var_index)
            right = _affine(atom.rhs, f.var_index)
            if left is not None and right is not None:
                (lc, lk), (rc, rk) = left, right
                coeffs = dict(lc)
                for k, c in rc.items():
                    coeffs[k] = coeffs.get(k, Fraction(0)) - c
                coeffs = {k: c for k, c in coeffs.items() if c != 0}
                if coeffs:
                    row = np.zeros(d)
                    for k, c in coeffs.items():
                        row[k] = float(c)
                    rows.append(row)
                    rhs.append(float(rk - lk))
                    extracted = True
        if not extracted:
            rest.append(clause)
    remainder = Formula(f.variables, clauses=rest)
    if not rows:
        return None, remainder
    a = np.array(rows)
    b = np.array(rhs)
    participating = tuple(int(j) for j in range(d) if np.any(a[:, j] != 0.0))
    return LinearSystem(a, b, participating), remainder


def _jacobi_eigh(g: np.ndarray, sweep_cap: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix: G = V diag(w) V^T."""
    m = g.shape[0]
    a = g.astype(float).copy()
    v = np.eye(m)
    if m == 1:
        return np.array([a[0, 0]]), v
    scale = float(np.max(np.abs(a))) or 1.0
    for _ in range(sweep_cap):
        # measure off-diagonal mass directly; a subtractive formula cancels
        off = float(np.abs(a - np.diag(np.diag(a))).max())
        if off <= 1e-15 * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(m)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    return np.diag(a).copy(), v


def _penrose_residual(g: np.ndarray, x: np.ndarray) -> float:
    """Scale-normalized sum of all four Penrose condition residuals."""
    gx = g @ x
    xg = x @ g
    ng = max(1.0, float(np.abs(g).max()))
    nx = max(1.0, float(np.abs(x).max()))
    return float(
        np.abs(gx @ g - g).max() / ng
        + np.abs(xg @ x - x).max() / nx
        + np.abs(gx.T - gx).max()
        + np.abs(xg.T - xg).max()
    )


def _pinv_sym(g: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    w, v = _jacobi_eigh(g)
    lam_max = float(np.max(np.abs(w))) if w.size else 0.0
    cut = tol * lam_max
    inv = np.where(np.abs(w) > cut, np.divide(1.0, w, out=np.zeros_like(w), where=w != 0), 0.0)
    rank = int(np.count_nonzero(inv))
    x = (v * inv) @ v.T
    x = (x + x.T) / 2.0
    # Newton polish: X <- X(2I - GX) squares the reconstruction residual,
    # so one or two steps push well-conditioned cases onto the correctly
    # rounded values (integer systems typically land exactly).  The gate
    # covers all four Penrose conditions: on ill-conditioned input the
    # update's rounding breaks commutation with G even as reconstruction
    # improves, and those steps are rejected in favor of the spectral form.
    eye = np.eye(g.shape[0])
    best = _penrose_residual(g, x)
    for _ in range(2):
        x_next = x @ (2.0 * eye - g @ x)
        x_next = (x_next + x_next.T) / 2.0
        if not np.isfinite(x_next).all() or np.array_equal(x_next, x):
            break
        res = _penrose_residual(g, x_next)
        if res > best:
            break
        x, best = x_next, res
    return x, rank


def pseudoinverse(g: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    Eigenvalues below tol * lambda_max are treated as zero.  Raises on
    input that is not symmetric within a fixed relative tolerance.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    scale = float(np.max(np.abs(g))) if g.size else 0.0
    if g.size and float(np.max(np.abs(g - g.T))) > 1e-10 * (1.0 + scale):
        raise ValueError("matrix is not symmetric")
    sym = (g + g.T) / 2.0
    return _pinv_sym(sym, tol)[0]


def build_projector(sys: LinearSystem, tol: float = DEFAULT_TOL) -> Projector:
    """Projection operator for a system; raises ProjectorError if degenerate."""
    if not (np.isfinite(sys.a).all() and np.isfinite(sys.b).all()):
        raise ProjectorError("system contains non-finite entries")
    with np.errstate(over="ignore", invalid="ignore"):
        gram = sys.a @ sys.a.T
        if not np.isfinite(gram).all():
            raise ProjectorError("Gram matrix overflowed")
        gram_pinv, rank = _pinv_sym((gram + gram.T) / 2.0, tol)
        p = sys.a.T @ gram_pinv
    if not np.isfinite(p).all():
        raise ProjectorError("projection operator is non-finite")
    return Projector(p, gram, rank, tol)


def project(x: np.ndarray, sys: LinearSystem, proj: Projector) -> tuple[np.ndarray, float]:
    """Closest point of {x : Ax = b} to x, and the squared Euclidean gap."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.d,):
        raise ValueError(f"point has shape {x.shape}, system expects ({sys.d},)")
    # saturation to inf is expected for extreme inputs; callers screen
    # non-finite output, so the overflow warning is pure noise
    with np.errstate(over="ignore", invalid="ignore"):
        residual = sys.a @ x - sys.b
        correction = proj.p @ residual
        return x - correction, float(correction @ correction)
