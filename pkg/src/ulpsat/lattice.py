"""Bit-exact IEEE-754 lattice arithmetic for binary32 and binary64.

Every finite float of a format is assigned a signed integer ordinal that is
strictly monotone in the IEEE ordering, with +0 and -0 sharing ordinal 0.
Stepping a value by n ULPs is then a single integer add on its ordinal, and
the ULP distance between two values is an ordinal difference.  Infinities
sit at the ordinal range endpoints so distances involving them are defined;
NaN has no ordinal and is handled by a sentinel that dominates every
finite-operand distance.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "BINARY32",
    "BINARY64",
    "CmpOp",
    "FpFormat",
    "FpScalar",
    "float32_from_ordinal",
    "float32_ordinal",
    "float64_from_ordinal",
    "float64_ordinal",
    "from_index",
    "n_ulp",
    "round_to_float32",
    "to_index",
    "ulp_distance",
    "ulp_distance_cmp",
    "ulp_distance_eq",
]

_F32 = struct.Struct("<f")
_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")
_U64 = struct.Struct("<Q")

# Correctly-rounded double->binary32 overflow midpoint: values at or above
# it round to infinity under RNE, values below round to the max finite.
_F32_OVERFLOW_MID = (2.0 - 2.0**-24) * 2.0**127


class CmpOp(Enum):
    """Comparison operators of FP atoms."""

    EQ = "eq"
    LE = "le"
    LT = "lt"
    GE = "ge"
    GT = "gt"


@dataclass(frozen=True)
class FpFormat:
    """An IEEE-754 binary interchange format (binary32 or binary64)."""

    name: str
    width: int
    exp_bits: int
    sig_bits: int  # counts the hidden bit: 24 for binary32, 53 for binary64

    @property
    def bias(self) -> int:
        return (1 << (self.exp_bits - 1)) - 1

    @property
    def sign_mask(self) -> int:
        return 1 << (self.width - 1)

    @property
    def mag_mask(self) -> int:
        return self.sign_mask - 1

    @property
    def ord_inf(self) -> int:
        # biased exponent all ones, significand zero
        return ((1 << self.exp_bits) - 1) << (self.sig_bits - 1)

    @property
    def max_finite_ord(self) -> int:
        return self.ord_inf - 1

    @property
    def sentinel(self) -> int:
        """Distance reported for NaN operands; exceeds any finite-operand gap."""
        return 2 * self.ord_inf + 1

    @property
    def max_finite(self) -> float:
        return from_index(self.max_finite_ord, self).to_float()

    @property
    def smallest_normal(self) -> float:
        return math.ldexp(1.0, 1 - self.bias)

    @staticmethod
    def from_widths(exp_bits: int, sig_bits: int) -> "FpFormat":
        if (exp_bits, sig_bits) == (8, 24):
            return BINARY32
        if (exp_bits, sig_bits) == (11, 53):
            return BINARY64
        raise ValueError(f"unsupported floating-point format (_ FloatingPoint {exp_bits} {sig_bits})")


BINARY32 = FpFormat("binary32", 32, 8, 24)
BINARY64 = FpFormat("binary64", 64, 11, 53)


def round_to_float32(value: float) -> float:
    """Round a double to the nearest binary32 value (RNE), widened back to double."""
    try:
        return _F32.unpack(_F32.pack(value))[0]
    except OverflowError:
        # struct refuses conversions whose rounded result is infinite
        return math.inf if value > 0 else -math.inf


def _f32_bits(value: float) -> int:
    """Bits of the binary32 nearest (RNE) to a double."""
    try:
        return _U32.unpack(_F32.pack(value))[0]
    except OverflowError:
        return 0x7F800000 if value > 0 else 0xFF800000


def _f64_bits(value: float) -> int:
    return _U64.unpack(_F64.pack(value))[0]


def _f32_value(bits: int) -> float:
    return _F32.unpack(_U32.pack(bits))[0]


def _f64_value(bits: int) -> float:
    return _F64.unpack(_U64.pack(bits))[0]


def _ordinal_from_bits(bits: int, fmt: FpFormat) -> int:
    # sign-magnitude bit pattern -> signed ordinal; -0 and +0 both map to 0
    mag = bits & fmt.mag_mask
    return -mag if bits & fmt.sign_mask else mag


def _bits_from_ordinal(i: int, fmt: FpFormat) -> int:
    return (fmt.sign_mask | -i) if i < 0 else i


def float64_ordinal(value: float) -> int:
    """Ordinal of a double; NaN is a domain error."""
    bits = _f64_bits(value)
    if bits & BINARY64.mag_mask > BINARY64.ord_inf:
        raise ValueError("NaN has no lattice ordinal")
    return _ordinal_from_bits(bits, BINARY64)


def float32_ordinal(value: float) -> int:
    """Ordinal of a binary32 value given as its exact widened double."""
    bits = _f32_bits(value)
    if bits & BINARY32.mag_mask > BINARY32.ord_inf:
        raise ValueError("NaN has no lattice ordinal")
    return _ordinal_from_bits(bits, BINARY32)


def float64_from_ordinal(i: int) -> float:
    """Double at ordinal i, clamped to the finite range."""
    m = BINARY64.max_finite_ord
    i = m if i > m else (-m if i < -m else i)
    return _f64_value(_bits_from_ordinal(i, BINARY64))


def float32_from_ordinal(i: int) -> float:
    """Binary32 value at ordinal i (as a widened double), clamped to the finite range."""
    m = BINARY32.max_finite_ord
    i = m if i > m else (-m if i < -m else i)
    return _f32_value(_bits_from_ordinal(i, BINARY32))


@dataclass(frozen=True)
class FpScalar:
    """A floating-point value as raw bits plus its format."""

    bits: int
    fmt: FpFormat

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.fmt.width):
            raise ValueError(f"bits out of range for {self.fmt.name}: {self.bits:#x}")

    @classmethod
    def from_float(cls, value: float, fmt: FpFormat) -> "FpScalar":
        """Nearest value of fmt under RNE (binary64 input is taken exactly)."""
        bits = _f32_bits(value) if fmt is BINARY32 else _f64_bits(value)
        return cls(bits, fmt)

    @classmethod
    def finite(cls, value: float, fmt: FpFormat) -> "FpScalar":
        """Solver-facing constructor: rejects values that snap to NaN or infinity."""
        x = cls.from_float(value, fmt)
        if not x.is_finite:
            raise ValueError(f"non-finite value not allowed in a search point: {value!r}")
        return x

    def to_float(self) -> float:
        """The value as a double (exact widening for binary32)."""
        return _f32_value(self.bits) if self.fmt is BINARY32 else _f64_value(self.bits)

    @property
    def is_nan(self) -> bool:
        return self.bits & self.fmt.mag_mask > self.fmt.ord_inf

    @property
    def is_inf(self) -> bool:
        return self.bits & self.fmt.mag_mask == self.fmt.ord_inf

    @property
    def is_finite(self) -> bool:
        return self.bits & self.fmt.mag_mask < self.fmt.ord_inf

    @property
    def is_negative(self) -> bool:
        return bool(self.bits & self.fmt.sign_mask)

    def fp_eq(self, other: "FpScalar") -> bool:
        """IEEE equality: +0 == -0, NaN unequal to everything."""
        if self.is_nan or other.is_nan:
            return False
        return _ordinal_from_bits(self.bits, self.fmt) == _ordinal_from_bits(other.bits, other.fmt)

    def bit_fields(self) -> tuple[str, str, str]:
        """(sign, exponent, significand) as binary strings, for model printing."""
        f = self.fmt
        sig = f.sig_bits - 1
        return (
            format(self.bits >> (f.width - 1), "b"),
            format((self.bits >> sig) & ((1 << f.exp_bits) - 1), f"0{f.exp_bits}b"),
            format(self.bits & ((1 << sig) - 1), f"0{sig}b"),
        )

    def __repr__(self) -> str:
        return f"FpScalar({self.to_float()!r}, {self.fmt.name})"


def to_index(x: FpScalar) -> int:
    """Monotone signed ordinal of x; +0/-0 share 0, infinities sit at the endpoints."""
    if x.is_nan:
        raise ValueError("NaN has no lattice ordinal")
    return _ordinal_from_bits(x.bits, x.fmt)


def from_index(i: int, fmt: FpFormat) -> FpScalar:
    """Inverse of to_index on the finite range; out-of-range ordinals clamp."""
    m = fmt.max_finite_ord
    i = m if i > m else (-m if i < -m else i)
    return FpScalar(_bits_from_ordinal(i, fmt), fmt)


def n_ulp(k: int, x: FpScalar) -> FpScalar:
    """Step x by k lattice positions, clamping at the finite extremes."""
    return from_index(to_index(x) + k, x.fmt)


def ulp_distance_eq(a: FpScalar, b: FpScalar) -> int:
    """Lattice steps between a and b; 0 iff fp.eq(a, b) holds."""
    if a.is_nan or b.is_nan:
        return a.fmt.sentinel
    return abs(to_index(a) - to_index(b))


def ulp_distance_cmp(a: FpScalar, b: FpScalar, op: CmpOp) -> int:
    """Minimal lattice steps to make the comparison a <op> b hold; 0 if it holds.

    Strict comparisons add one step at equality: making a < b true from a == b
    requires moving one lattice position.
    """
    if a.is_nan or b.is_nan:
        return a.fmt.sentinel
    ia, ib = to_index(a), to_index(b)
    if op is CmpOp.LE:
        return ia - ib if ia > ib else 0
    if op is CmpOp.LT:
        return ia - ib + 1 if ia >= ib else 0
    if op is CmpOp.GE:
        return ib - ia if ib > ia else 0
    if op is CmpOp.GT:
        return ib - ia + 1 if ib >= ia else 0
    raise ValueError(f"not an inequality operator: {op}")


def ulp_distance(a: FpScalar, b: FpScalar, op: CmpOp) -> int:
    """ULP distance for any atom operator (equality or inequality)."""
    if op is CmpOp.EQ:
        return ulp_distance_eq(a, b)
    return ulp_distance_cmp(a, b, op)
