"""Recursive-descent parser for the SMT-LIB 2 QF_FP subset.

Supported surface: declare-fun/declare-const over (_ FloatingPoint 8 24),
(_ FloatingPoint 11 53), Float32 and Float64; fp bit literals and the
indexed constants (_ +zero/-zero/+oo/-oo/NaN e s); correctly-rounded
((_ to_fp e s) RNE <numeral|decimal|rational>) literals and the bit
reinterpretation form ((_ to_fp e s) #x...); the operations fp.eq, fp.leq,
fp.lt, fp.geq, fp.gt, fp.neg, fp.add, fp.sub, fp.mul (alias fp.mult),
fp.div with rounding mode RNE; the connectives and/or/not; simple let
inlining.  Everything else raises a structured unsupported-feature error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from ulpsat.lattice import BINARY32, BINARY64, CmpOp, FpFormat, FpScalar, from_index, n_ulp
from ulpsat.smt.ast import (
    Add,
    Atom,
    BAnd,
    BAtom,
    BConst,
    BNot,
    BOr,
    BoolNode,
    ClauseExplosionError,
    Const,
    Div,
    Formula,
    Mul,
    Neg,
    Sub,
    Term,
    Var,
    nnf_formula,
    normalize,
)

__all__ = ["ParseError", "UnsupportedFeatureError", "ScriptInfo", "parse", "parse_script"]


class ParseError(Exception):
    """Malformed input, with source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class UnsupportedFeatureError(ParseError):
    """Syntactically valid SMT-LIB outside the supported QF_FP subset."""

    def __init__(self, symbol: str, line: int, col: int, hint: str = ""):
        extra = f" ({hint})" if hint else ""
        super().__init__(f"unsupported feature: {symbol}{extra}", line, col)
        self.symbol = symbol


@dataclass
class ScriptInfo:
    """Commands recorded while parsing a script."""

    logic: Optional[str] = None
    saw_check_sat: bool = False
    saw_get_model: bool = False
    saw_exit: bool = False
    used_nnf_fallback: bool = False


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


_Sexpr = Union[_Tok, list]

_ROUNDING_MODES = {
    "RNE", "RNA", "RTP", "RTN", "RTZ",
    "roundNearestTiesToEven", "roundNearestTiesToAway",
    "roundTowardPositive", "roundTowardNegative", "roundTowardZero",
}
_RNE = {"RNE", "roundNearestTiesToEven"}

_CMP_OPS = {
    "fp.eq": CmpOp.EQ,
    "fp.leq": CmpOp.LE,
    "fp.lt": CmpOp.LT,
    "fp.geq": CmpOp.GE,
    "fp.gt": CmpOp.GT,
}
_ARITH_OPS = {"fp.add": Add, "fp.sub": Sub, "fp.mul": Mul, "fp.mult": Mul, "fp.div": Div}

_REJECTED_FP_OPS = {
    "fp.fma", "fp.sqrt", "fp.rem", "fp.abs", "fp.min", "fp.max",
    "fp.roundToIntegral", "fp.isNormal", "fp.isSubnormal", "fp.isZero",
    "fp.isInfinite", "fp.isNaN", "fp.isNegative", "fp.isPositive",
    "fp.to_real", "fp.to_sbv", "fp.to_ubv",
}


def _tokenize(source: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col, i, n = 1, 1, 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            i += 1
            col += 1
        elif ch == ";":
            while i < n and source[i] != "\n":
                i += 1
        elif ch in "()":
            toks.append(_Tok(ch, line, col))
            i += 1
            col += 1
        elif ch == "|":
            j = source.find("|", i + 1)
            if j < 0:
                raise ParseError("unterminated |symbol|", line, col)
            text = source[i + 1 : j]
            toks.append(_Tok(text, line, col))
            col += j + 1 - i
            line += text.count("\n")
            i = j + 1
        elif ch == '"':
            j = i + 1
            while j < n:
                if source[j] == '"':
                    if j + 1 < n and source[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise ParseError("unterminated string literal", line, col)
            toks.append(_Tok(source[i : j + 1], line, col))
            col += j + 1 - i
            i = j + 1
        else:
            j = i
            while j < n and source[j] not in ' \t\r\n();"|':
                j += 1
            toks.append(_Tok(source[i:j], line, col))
            col += j - i
            i = j
    return toks


def _read_all(toks: list[_Tok]) -> list[_Sexpr]:
    out: list[_Sexpr] = []
    pos = 0

    def read() -> _Sexpr:
        nonlocal pos
        tok = toks[pos]
        pos += 1
        if tok.text == "(":
            items: list[_Sexpr] = [tok]  # keep the open paren for positions
            while True:
                if pos >= len(toks):
                    raise ParseError("unbalanced '('", tok.line, tok.col)
                if toks[pos].text == ")":
                    pos += 1
                    return items
                items.append(read())
        if tok.text == ")":
            raise ParseError("unbalanced ')'", tok.line, tok.col)
        return tok

    while pos < len(toks):
        out.append(read())
    return out


def _pos(e: _Sexpr) -> tuple[int, int]:
    t = e[0] if isinstance(e, list) else e
    return t.line, t.col


def _items(e: list) -> list[_Sexpr]:
    return e[1:]  # drop the stored open paren


def _head_symbol(e: list) -> Optional[str]:
    body = _items(e)
    if body and isinstance(body[0], _Tok):
        return body[0].text
    return None


def _parse_bits_token(tok: _Tok) -> tuple[int, int]:
    """#b/#x literal -> (value, bit width)."""
    t = tok.text
    if t.startswith("#b") and len(t) > 2 and all(c in "01" for c in t[2:]):
        return int(t[2:], 2), len(t) - 2
    if t.startswith("#x") and len(t) > 2:
        try:
            return int(t[2:], 16), (len(t) - 2) * 4
        except ValueError:
            pass
    raise ParseError(f"expected a #b/#x literal, got {t!r}", tok.line, tok.col)


def _scalar_from_fraction(fr: Fraction, negative: bool, fmt: FpFormat) -> FpScalar:
    """Correctly-rounded (RNE) conversion of an exact rational to fmt."""
    if fr == 0:
        return FpScalar(fmt.sign_mask if negative else 0, fmt)
    try:
        approx = float(fr)
    except OverflowError:
        approx = float("inf")
    if fmt is BINARY64:
        return FpScalar.from_float(-approx if negative else approx, fmt)
    # binary32: the double is within one single-precision ULP of the true
    # result, so exact rational comparison of the snap and its lattice
    # neighbors recovers the correctly rounded value
    mid = Fraction((2.0 - 2.0**-24) * 2.0**127)
    if fr >= mid:
        bits = 0x7F800000
        return FpScalar(bits | (fmt.sign_mask if negative else 0), fmt)
    seed = FpScalar.from_float(approx, fmt)
    if not seed.is_finite:
        seed = from_index(fmt.max_finite_ord, fmt)
    best, best_err = None, None
    for k in (-1, 0, 1):
        cand = n_ulp(k, seed)
        if cand.is_negative:
            continue
        err = abs(fr - Fraction(cand.to_float()))
        if best is None or err < best_err or (err == best_err and cand.bits % 2 == 0):
            best, best_err = cand, err
    bits = best.bits
    return FpScalar(bits | (fmt.sign_mask if negative else 0), fmt)


_DECIMAL_CHARS = set("0123456789.eE+-")


def _numeric_fraction(e: _Sexpr) -> tuple[Fraction, bool]:
    """Literal s-expr -> (magnitude, negative); handles (- x) and (/ p q)."""
    if isinstance(e, _Tok):
        t = e.text
        digits = t[1:] if t.startswith("-") else t
        if digits and digits[0].isdigit() and set(digits) <= _DECIMAL_CHARS:
            try:
                fr = Fraction(digits)
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"bad numeric literal {t!r}", e.line, e.col) from None
            return fr, t.startswith("-")
        raise ParseError(f"expected a numeric literal, got {t!r}", e.line, e.col)
    body = _items(e)
    head = _head_symbol(e)
    if head == "-" and len(body) == 2:
        fr, neg = _numeric_fraction(body[1])
        return fr, not neg
    if head == "/" and len(body) == 3:
        num, nn = _numeric_fraction(body[1])
        den, dn = _numeric_fraction(body[2])
        if den == 0:
            raise ParseError("rational literal with zero denominator", *_pos(e))
        return num / den, nn != dn
    raise ParseError("expected a numeric literal", *_pos(e))


class _Parser:
    def __init__(self, source: str):
        self.commands = _read_all(_tokenize(source))
        self.variables: dict[str, FpFormat] = {}
        self.asserts: list[BoolNode] = []
        self.info = ScriptInfo()

    # sorts

    def _parse_sort(self, e: _Sexpr) -> FpFormat:
        if isinstance(e, _Tok):
            if e.text == "Float32":
                return BINARY32
            if e.text == "Float64":
                return BINARY64
            raise UnsupportedFeatureError(e.text, e.line, e.col, "sort")
        body = _items(e)
        if (
            len(body) == 4
            and isinstance(body[0], _Tok) and body[0].text == "_"
            and isinstance(body[1], _Tok) and body[1].text == "FloatingPoint"
            and isinstance(body[2], _Tok) and isinstance(body[3], _Tok)
        ):
            try:
                return FpFormat.from_widths(int(body[2].text), int(body[3].text))
            except ValueError as exc:
                raise UnsupportedFeatureError(
                    f"(_ FloatingPoint {body[2].text} {body[3].text})", *_pos(e), hint=str(exc)
                ) from None
        raise UnsupportedFeatureError(self._shape(e), *_pos(e), hint="sort")

    @staticmethod
    def _shape(e: _Sexpr) -> str:
        if isinstance(e, _Tok):
            return e.text
        parts = [_Parser._shape(x) for x in _items(e)]
        return "(" + " ".join(parts) + ")"

    # terms

    def _indexed_constant(self, e: list) -> FpScalar:
        body = _items(e)
        name = body[1].text if len(body) > 1 and isinstance(body[1], _Tok) else "?"
        if len(body) != 4 or not all(isinstance(x, _Tok) for x in body[1:]):
            raise ParseError("malformed indexed constant", *_pos(e))
        try:
            fmt = FpFormat.from_widths(int(body[2].text), int(body[3].text))
        except ValueError as exc:
            raise UnsupportedFeatureError(self._shape(e), *_pos(e), hint=str(exc)) from None
        sig = fmt.sig_bits - 1
        exp_all_ones = ((1 << fmt.exp_bits) - 1) << sig
        if name == "+zero":
            return FpScalar(0, fmt)
        if name == "-zero":
            return FpScalar(fmt.sign_mask, fmt)
        if name == "+oo":
            return FpScalar(exp_all_ones, fmt)
        if name == "-oo":
            return FpScalar(fmt.sign_mask | exp_all_ones, fmt)
        if name == "NaN":
            return FpScalar(exp_all_ones | (1 << (sig - 1)), fmt)
        raise UnsupportedFeatureError(name, *_pos(e), hint="indexed constant")

    def _fp_literal(self, e: list) -> FpScalar:
        body = _items(e)
        if len(body) != 4:
            raise ParseError("fp literal needs sign, exponent, significand", *_pos(e))
        fields = []
        for part in body[1:]:
            if not isinstance(part, _Tok):
                raise ParseError("fp literal components must be #b/#x literals", *_pos(e))
            fields.append(_parse_bits_token(part))
        (sv, sw), (ev, ew), (mv, mw) = fields
        if sw != 1:
            raise ParseError("fp literal sign must be a single bit", *_pos(e))
        try:
            fmt = FpFormat.from_widths(ew, mw + 1)
        except ValueError as exc:
            raise UnsupportedFeatureError(self._shape(e), *_pos(e), hint=str(exc)) from None
        return FpScalar((sv << (fmt.width - 1)) | (ev << mw) | mv, fmt)

    def _to_fp(self, e: list) -> FpScalar:
        head = _items(e)[0]
        idx = _items(head)
        if len(idx) != 4 or not all(isinstance(x, _Tok) for x in idx):
            raise ParseError("malformed (_ to_fp e s)", *_pos(e))
        try:
            fmt = FpFormat.from_widths(int(idx[2].text), int(idx[3].text))
        except ValueError as exc:
            raise UnsupportedFeatureError(self._shape(head), *_pos(e), hint=str(exc)) from None
        args = _items(e)[1:]
        if len(args) == 1 and isinstance(args[0], _Tok) and args[0].text.startswith(("#b", "#x")):
            value, width = _parse_bits_token(args[0])
            if width != fmt.width:
                raise ParseError(
                    f"bit-pattern width {width} does not match {fmt.name}", *_pos(e)
                )
            return FpScalar(value, fmt)
        if len(args) == 2:
            rm = args[0]
            if not (isinstance(rm, _Tok) and rm.text in _ROUNDING_MODES):
                raise ParseError("expected a rounding mode in to_fp", *_pos(e))
            if rm.text not in _RNE:
                raise UnsupportedFeatureError(rm.text, rm.line, rm.col, "rounding mode")
            fr, negative = _numeric_fraction(args[1])
            return _scalar_from_fraction(fr, negative, fmt)
        raise UnsupportedFeatureError(self._shape(e), *_pos(e), hint="to_fp form")

    def _require_rne(self, e: list, body: list[_Sexpr]) -> None:
        rm = body[1]
        if not (isinstance(rm, _Tok) and rm.text in _ROUNDING_MODES):
            raise ParseError(f"expected a rounding mode, got {self._shape(rm)}", *_pos(rm))
        if rm.text not in _RNE:
            raise UnsupportedFeatureError(rm.text, rm.line, rm.col, "rounding mode")

    def _parse_term(self, e: _Sexpr, env: dict) -> Term:
        if isinstance(e, _Tok):
            t = e.text
            if t in env:  # let bindings shadow declarations
                bound = env[t]
                if not isinstance(bound, (Var, Const, Neg, Add, Sub, Mul, Div)):
                    raise ParseError(f"let binding {t!r} is boolean, not a term", e.line, e.col)
                return bound
            if t in self.variables:
                return Var(t, self.variables[t])
            if t and t[0].isdigit():
                raise ParseError(
                    f"bare numeral {t!r}: use ((_ to_fp e s) RNE {t}) or an fp literal",
                    e.line,
                    e.col,
                )
            raise ParseError(f"unknown symbol {t!r}", e.line, e.col)
        head = _head_symbol(e)
        body = _items(e)
        if head == "fp":
            return Const(self._fp_literal(e))
        if head == "_":
            return Const(self._indexed_constant(e))
        if head is None and isinstance(body[0], list) and _head_symbol(body[0]) == "_":
            inner = _items(body[0])
            if len(inner) >= 2 and isinstance(inner[1], _Tok) and inner[1].text == "to_fp":
                return Const(self._to_fp(e))
            raise UnsupportedFeatureError(self._shape(body[0]), *_pos(e))
        if head == "fp.neg":
            if len(body) != 2:
                raise ParseError("fp.neg takes one argument", *_pos(e))
            return Neg(self._parse_term(body[1], env))
        if head in _ARITH_OPS:
            if len(body) != 4:
                raise ParseError(f"{head} takes a rounding mode and two arguments", *_pos(e))
            self._require_rne(e, body)
            cls = _ARITH_OPS[head]
            lhs = self._parse_term(body[2], env)
            rhs = self._parse_term(body[3], env)
            try:
                return cls(lhs, rhs)
            except ValueError as exc:
                raise ParseError(str(exc), *_pos(e)) from None
        if head == "let":
            return self._parse_let(e, env, self._parse_term)
        if head in _REJECTED_FP_OPS:
            raise UnsupportedFeatureError(head, *_pos(e))
        raise UnsupportedFeatureError(head or self._shape(e), *_pos(e), hint="term")

    def _parse_let(self, e: list, env: dict, continuation):
        body = _items(e)
        if len(body) != 3 or not isinstance(body[1], list):
            raise ParseError("malformed let", *_pos(e))
        new_env = dict(env)
        for binding in _items(body[1]):
            if not (isinstance(binding, list) and len(_items(binding)) == 2):
                raise ParseError("malformed let binding", *_pos(e))
            name_tok, value = _items(binding)
            if not isinstance(name_tok, _Tok):
                raise ParseError("malformed let binding", *_pos(e))
            # a binding may be a term or a boolean; try term first
            try:
                bound = self._parse_term(value, env)
            except ParseError:
                bound = self._parse_bool(value, env)
            new_env[name_tok.text] = bound
        return continuation(body[2], new_env)

    def _parse_bool(self, e: _Sexpr, env: dict) -> BoolNode:
        if isinstance(e, _Tok):
            t = e.text
            if t == "true":
                return BConst(True)
            if t == "false":
                return BConst(False)
            if t in env:
                bound = env[t]
                if isinstance(bound, (Var, Const, Neg, Add, Sub, Mul, Div)):
                    raise ParseError(f"let binding {t!r} is a term, not boolean", e.line, e.col)
                return bound
            if t in self.variables:
                raise ParseError(f"variable {t!r} used as a boolean", e.line, e.col)
            raise ParseError(f"unknown boolean symbol {t!r}", e.line, e.col)
        head = _head_symbol(e)
        body = _items(e)
        if head == "and":
            kids = tuple(self._parse_bool(x, env) for x in body[1:])
            return BAnd(kids) if kids else BConst(True)
        if head == "or":
            kids = tuple(self._parse_bool(x, env) for x in body[1:])
            return BOr(kids) if kids else BConst(False)
        if head == "not":
            if len(body) != 2:
                raise ParseError("not takes one argument", *_pos(e))
            return BNot(self._parse_bool(body[1], env))
        if head in _CMP_OPS:
            if len(body) < 3:
                raise ParseError(f"{head} needs at least two arguments", *_pos(e))
            args = [self._parse_term(x, env) for x in body[1:]]
            try:
                atoms = [
                    BAtom(Atom(a, b, _CMP_OPS[head])) for a, b in zip(args, args[1:])
                ]
            except ValueError as exc:
                raise ParseError(str(exc), *_pos(e)) from None
            return atoms[0] if len(atoms) == 1 else BAnd(tuple(atoms))
        if head == "let":
            return self._parse_let(e, env, self._parse_bool)
        if head == "=":
            raise UnsupportedFeatureError(
                "=", *_pos(e), hint="core equality over FP sorts; use fp.eq"
            )
        if head in ("=>", "xor", "ite", "distinct", "forall", "exists"):
            raise UnsupportedFeatureError(head, *_pos(e))
        raise UnsupportedFeatureError(head or self._shape(e), *_pos(e), hint="boolean")

    # commands

    def run(self) -> tuple[Formula, ScriptInfo]:
        for cmd in self.commands:
            if not isinstance(cmd, list):
                raise ParseError(f"expected a command, got {cmd.text!r}", cmd.line, cmd.col)
            head = _head_symbol(cmd)
            body = _items(cmd)
            if head == "set-logic":
                if len(body) == 2 and isinstance(body[1], _Tok):
                    self.info.logic = body[1].text
            elif head in ("set-info", "set-option"):
                pass
            elif head == "declare-fun":
                if len(body) != 4 or not isinstance(body[1], _Tok):
                    raise ParseError("malformed declare-fun", *_pos(cmd))
                if not (isinstance(body[2], list) and len(_items(body[2])) == 0):
                    raise UnsupportedFeatureError(
                        body[1].text, *_pos(cmd), hint="uninterpreted functions with arguments"
                    )
                self._declare(body[1], body[3])
            elif head == "declare-const":
                if len(body) != 3 or not isinstance(body[1], _Tok):
                    raise ParseError("malformed declare-const", *_pos(cmd))
                self._declare(body[1], body[2])
            elif head == "assert":
                if len(body) != 2:
                    raise ParseError("assert takes one argument", *_pos(cmd))
                self.asserts.append(self._parse_bool(body[1], {}))
            elif head == "check-sat":
                self.info.saw_check_sat = True
            elif head == "get-model":
                self.info.saw_get_model = True
            elif head == "exit":
                self.info.saw_exit = True
            elif head is None:
                raise ParseError("malformed command", *_pos(cmd))
            else:
                raise UnsupportedFeatureError(head, *_pos(cmd), hint="command")
        variables = list(self.variables.items())
        tree = BAnd(tuple(self.asserts)) if self.asserts else BConst(True)
        try:
            formula = normalize(tree, variables)
        except ClauseExplosionError:
            formula = nnf_formula(tree, variables)
            self.info.used_nnf_fallback = True
        return formula, self.info

    def _declare(self, name_tok: _Tok, sort: _Sexpr) -> None:
        name = name_tok.text
        if name in self.variables:
            raise ParseError(f"duplicate declaration of {name!r}", name_tok.line, name_tok.col)
        self.variables[name] = self._parse_sort(sort)


def parse_script(source: str) -> tuple[Formula, ScriptInfo]:
    """Parse an SMT-LIB script into a normalized Formula plus script info."""
    return _Parser(source).run()


def parse(source: str) -> Formula:
    """Parse an SMT-LIB script into a normalized Formula (all asserts conjoined)."""
    return parse_script(source)[0]
