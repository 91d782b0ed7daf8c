"""Unit tests for the ordinal lattice: indexing, stepping, ULP distances."""

import math

import numpy as np
import pytest

from ulpsat.lattice import (
    BINARY32,
    BINARY64,
    CmpOp,
    FpFormat,
    FpScalar,
    from_index,
    n_ulp,
    to_index,
    ulp_distance_cmp,
    ulp_distance_eq,
)

from oracles import brute_steps_cmp, brute_steps_eq

TINY64 = 5e-324  # smallest positive binary64 subnormal


def s64(v: float) -> FpScalar:
    return FpScalar.from_float(v, BINARY64)


def s32(v: float) -> FpScalar:
    return FpScalar.from_float(v, BINARY32)


class TestIndexing:
    def test_signed_zeros_share_ordinal_zero(self):
        assert to_index(s64(0.0)) == 0
        assert to_index(s64(-0.0)) == 0

    def test_smallest_subnormal_is_first_step(self):
        assert to_index(s64(TINY64)) == 1
        assert to_index(s64(-TINY64)) == -1

    def test_nan_is_a_domain_error(self):
        with pytest.raises(ValueError):
            to_index(s64(math.nan))

    def test_infinities_at_range_endpoints(self):
        assert to_index(s64(math.inf)) == BINARY64.ord_inf
        assert to_index(s64(-math.inf)) == -BINARY64.ord_inf
        assert to_index(s64(BINARY64.max_finite)) == BINARY64.ord_inf - 1

    def test_from_index_inverts_to_index(self):
        assert from_index(0, BINARY64).to_float() == 0.0
        assert not from_index(0, BINARY64).is_negative
        succ = from_index(to_index(s64(1.0)) + 1, BINARY64)
        assert succ.to_float() == 1.0 + 2.0**-52

    def test_from_index_clamps_to_finite_range(self):
        huge = BINARY64.ord_inf + 12345
        assert from_index(huge, BINARY64).to_float() == BINARY64.max_finite
        assert from_index(-huge, BINARY64).to_float() == -BINARY64.max_finite

    def test_round_trip_is_fp_equal(self):
        rng = np.random.default_rng(7)
        for _ in range(2000):
            v = float(np.float64(rng.normal()) * 10.0 ** rng.integers(-300, 300))
            x = s64(v)
            assert from_index(to_index(x), BINARY64).fp_eq(x)
        # the one non-bit-equal case: -0 canonicalizes to +0
        assert from_index(to_index(s64(-0.0)), BINARY64).bits == 0

    def test_monotone_on_random_binary64_pairs(self):
        rng = np.random.default_rng(11)
        vals = [float(rng.normal() * 10.0 ** rng.integers(-300, 300)) for _ in range(4000)]
        vals += [0.0, -0.0, TINY64, -TINY64, 1.0, -1.0, BINARY64.max_finite]
        for a, b in zip(vals, reversed(vals)):
            if a < b:
                assert to_index(s64(a)) < to_index(s64(b))
            elif a > b:
                assert to_index(s64(a)) > to_index(s64(b))

    def test_monotone_exhaustive_on_binary32_window(self):
        # contiguous bit window straddling the subnormal/normal boundary
        start = to_index(s32(2.0**-127))
        prev = from_index(start - 1, BINARY32).to_float()
        for i in range(start, start + 4096):
            cur = from_index(i, BINARY32).to_float()
            assert prev < cur
            prev = cur


class TestStepping:
    def test_zero_step_is_identity(self):
        for v in (0.0, 1.5, -2.75, TINY64, 1e300):
            x = s64(v)
            assert n_ulp(0, x).fp_eq(x)

    def test_single_step_above_one(self):
        assert n_ulp(1, s64(1.0)).to_float() == 1.0 + 2.0**-52

    def test_steps_invert_when_unclamped(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            x = s64(float(rng.normal() * 10.0 ** rng.integers(-30, 30)))
            k = int(rng.integers(-10**6, 10**6))
            assert n_ulp(-k, n_ulp(k, x)).fp_eq(x)

    def test_step_consistency_with_distance(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            x = s32(float(np.float32(rng.normal())))
            k = int(rng.integers(-10**4, 10**4))
            assert ulp_distance_eq(x, n_ulp(k, x)) == abs(k)

    def test_clamps_at_finite_extremes(self):
        top = s64(BINARY64.max_finite)
        assert n_ulp(10, top).fp_eq(top)
        assert n_ulp(-BINARY64.ord_inf * 3, top).to_float() == -BINARY64.max_finite

    def test_subnormals_and_zero_crossing_preserved(self):
        assert n_ulp(1, s64(0.0)).to_float() == TINY64
        assert n_ulp(-1, s64(0.0)).to_float() == -TINY64
        assert n_ulp(2, s64(-TINY64)).to_float() == TINY64


class TestDistanceEq:
    def test_reflexive(self):
        assert ulp_distance_eq(s64(1.0), s64(1.0)) == 0

    def test_signed_zeros_at_distance_zero(self):
        assert ulp_distance_eq(s64(0.0), s64(-0.0)) == 0

    def test_two_steps_above_one(self):
        b = 1.0 + 2.0 * 2.0**-52
        assert brute_steps_eq(1.0, b, bits32=False) == 2
        assert ulp_distance_eq(s64(1.0), s64(b)) == 2

    def test_nan_gets_sentinel(self):
        assert ulp_distance_eq(s64(math.nan), s64(1.0)) == BINARY64.sentinel
        assert ulp_distance_eq(s32(1.0), s32(math.nan)) == BINARY32.sentinel

    def test_sentinel_dominates_finite_gaps(self):
        widest = ulp_distance_eq(s32(BINARY32.max_finite), s32(-BINARY32.max_finite))
        assert BINARY32.sentinel > widest


class TestDistanceCmp:
    def test_satisfied_atom_is_zero(self):
        assert ulp_distance_cmp(s64(1.0), s64(2.0), CmpOp.LE) == 0
        assert ulp_distance_cmp(s64(2.0), s64(1.0), CmpOp.GT) == 0

    def test_strictness_offset_at_equality(self):
        x = s64(3.5)
        assert ulp_distance_cmp(x, x, CmpOp.LT) == 1
        assert ulp_distance_cmp(x, x, CmpOp.GT) == 1
        assert ulp_distance_cmp(x, x, CmpOp.LE) == 0

    def test_two_steps_for_double_nextup(self):
        y = 1.0
        a = math.nextafter(math.nextafter(y, math.inf), math.inf)
        assert brute_steps_cmp(a, y, "le", bits32=False) == 2
        assert ulp_distance_cmp(s64(a), s64(y), CmpOp.LE) == 2

    def test_matches_brute_force_on_nearby_binary32(self):
        rng = np.random.default_rng(5)
        ops = [("le", CmpOp.LE), ("lt", CmpOp.LT), ("ge", CmpOp.GE), ("gt", CmpOp.GT)]
        for _ in range(400):
            base = float(np.float32(rng.normal() * 10.0 ** rng.integers(-20, 20)))
            a = s32(base)
            b = n_ulp(int(rng.integers(-60, 60)), a)
            name, op = ops[rng.integers(len(ops))]
            got = ulp_distance_cmp(a, b, op)
            want = brute_steps_cmp(a.to_float(), b.to_float(), name, bits32=True)
            assert got == want, (base, b.to_float(), name)

    def test_zero_iff_atom_holds(self):
        rng = np.random.default_rng(6)
        checks = {
            CmpOp.LE: lambda x, y: x <= y,
            CmpOp.LT: lambda x, y: x < y,
            CmpOp.GE: lambda x, y: x >= y,
            CmpOp.GT: lambda x, y: x > y,
        }
        pool = [0.0, -0.0, 1.0, -1.0, TINY64, math.inf, -math.inf]
        for _ in range(2000):
            if rng.random() < 0.3:
                a, b = (pool[rng.integers(len(pool))] for _ in range(2))
            else:
                a, b = (float(rng.normal() * 10.0 ** rng.integers(-10, 10)) for _ in range(2))
            op = list(checks)[rng.integers(4)]
            d = ulp_distance_cmp(s64(a), s64(b), op)
            assert (d == 0) == checks[op](a, b)

    def test_eq_operator_rejected(self):
        with pytest.raises(ValueError):
            ulp_distance_cmp(s64(1.0), s64(1.0), CmpOp.EQ)

    def test_nan_gets_sentinel(self):
        assert ulp_distance_cmp(s64(math.nan), s64(0.0), CmpOp.LT) == BINARY64.sentinel


class TestFormatAndScalar:
    def test_widths(self):
        assert (BINARY32.exp_bits, BINARY32.sig_bits) == (8, 24)
        assert (BINARY64.exp_bits, BINARY64.sig_bits) == (11, 53)
        assert FpFormat.from_widths(8, 24) is BINARY32
        assert FpFormat.from_widths(11, 53) is BINARY64
        with pytest.raises(ValueError):
            FpFormat.from_widths(5, 11)

    def test_finite_constructor_rejects_non_finite(self):
        with pytest.raises(ValueError):
            FpScalar.finite(math.inf, BINARY64)
        with pytest.raises(ValueError):
            FpScalar.finite(math.nan, BINARY32)
        with pytest.raises(ValueError):
            FpScalar.finite(1e39, BINARY32)  # overflows binary32 on snap

    def test_binary32_snap_is_rne(self):
        rng = np.random.default_rng(9)
        with np.errstate(over="ignore"):
            for _ in range(3000):
                v = float(rng.normal() * 10.0 ** rng.integers(-50, 50))
                assert s32(v).to_float() == float(np.float32(v))

    def test_bit_fields_for_model_printing(self):
        sign, exp, sig = FpScalar.from_float(1.0, BINARY32).bit_fields()
        assert (sign, exp, sig) == ("0", "01111111", "0" * 23)
        sign, exp, sig = FpScalar.from_float(-2.0, BINARY64).bit_fields()
        assert sign == "1" and exp == "10000000000" and sig == "0" * 52

    def test_format_constants(self):
        assert BINARY64.smallest_normal == 2.0**-1022
        assert BINARY32.smallest_normal == 2.0**-126
        assert BINARY32.max_finite == float(np.finfo(np.float32).max)
        assert BINARY64.max_finite == float(np.finfo(np.float64).max)
