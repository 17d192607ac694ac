import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iterl2norm.fpformat import (
    BF16,
    FP16,
    FP32,
    FormatSpec,
    FpScalar,
    bits_to_values,
    compose,
    decompose,
    emu_add,
    emu_mul,
    emu_sub,
    round_array,
    round_binary,
    round_value,
    split_bits,
    tree_sum,
    tree_sum_values,
    values_to_bits,
)

from oracles import oracle_op, oracle_round

ALL_FORMATS = [FP32, FP16, BF16]


def finite_bits(fmt, rng, n):
    """n random finite bit patterns of fmt."""
    bits = rng.integers(0, 1 << fmt.total_bits, size=2 * n, dtype=np.uint64)
    exp = (bits >> fmt.mant_bits) & fmt.exp_mask
    bits = bits[exp != fmt.exp_mask][:n]
    return bits.astype(np.int64)


class TestFormatSpec:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            FormatSpec("bad", exp_bits=8, mant_bits=23, bias=127, total_bits=16)
        with pytest.raises(ValueError):
            FormatSpec("bad", exp_bits=8, mant_bits=23, bias=126, total_bits=32)

    def test_known_layouts(self):
        assert (FP32.exp_bits, FP32.mant_bits, FP32.bias, FP32.total_bits) == (8, 23, 127, 32)
        assert (FP16.exp_bits, FP16.mant_bits, FP16.bias, FP16.total_bits) == (5, 10, 15, 16)
        assert (BF16.exp_bits, BF16.mant_bits, BF16.bias, BF16.total_bits) == (8, 7, 127, 16)

    def test_max_finite(self):
        assert FP16.max_finite == 65504.0
        assert FP32.max_finite == float(np.finfo(np.float32).max)


class TestDecomposeCompose:
    def test_fp32_five(self):
        assert decompose(round_binary(5.0, FP32)) == (0, 129, 0x200000)

    def test_fp32_one(self):
        assert decompose(round_binary(1.0, FP32)) == (0, 127, 0)

    def test_bf16_one(self):
        # BF16 shares the 8-bit exponent and bias 127
        assert decompose(round_binary(1.0, BF16)) == (0, 127, 0)

    def test_rejects_non_finite(self):
        for fmt in ALL_FORMATS:
            with pytest.raises(ValueError):
                decompose(round_binary(math.inf, fmt))
            with pytest.raises(ValueError):
                decompose(round_binary(math.nan, fmt))

    @pytest.mark.parametrize("fmt", [FP16, BF16])
    def test_roundtrip_exhaustive_16bit(self, fmt):
        # split/compose must reproduce every one of the 2^16 patterns
        mismatches = 0
        for bits in range(1 << 16):
            s, e, f = split_bits(bits, fmt)
            if compose(s, e, f, fmt).bits != bits:
                mismatches += 1
        assert mismatches == 0

    def test_compose_validates_fields(self):
        with pytest.raises(ValueError):
            compose(2, 0, 0, FP16)
        with pytest.raises(ValueError):
            compose(0, 1 << FP16.exp_bits, 0, FP16)
        with pytest.raises(ValueError):
            compose(0, 0, 1 << FP16.mant_bits, FP16)


class TestRounding:
    def test_exact_one_fp16(self):
        assert round_binary(1.0, FP16).bits == 0x3C00

    def test_one_third_bf16(self):
        r = round_binary(1.0 / 3.0, BF16)
        assert r.value == 0.333984375
        assert r.bits == 0x3EAB

    def test_fp16_overflow_to_inf(self):
        # 65520 is the exact overflow threshold (65504 + half an ulp, tie up)
        assert round_binary(65520.0, FP16).is_inf
        assert round_binary(65519.999, FP16).value == 65504.0
        assert round_binary(-65520.0, FP16).value == -math.inf

    def test_subnormals_preserved(self):
        tiny = math.ldexp(1.0, -24)  # smallest positive fp16 subnormal
        assert round_binary(tiny, FP16).value == tiny
        assert round_binary(tiny / 2, FP16).value == 0.0  # tie to even -> 0
        assert round_binary(tiny * 0.75, FP16).value == tiny

    def test_nan_canonical(self):
        for fmt in ALL_FORMATS:
            r = round_binary(math.nan, fmt)
            assert r.is_nan

    @pytest.mark.parametrize("fmt", ALL_FORMATS)
    def test_matches_fraction_oracle_on_randoms(self, fmt):
        rng = np.random.default_rng(42)
        exps = rng.uniform(-30, 18, size=2000)
        vals = np.sign(rng.standard_normal(2000)) * np.exp2(exps) * rng.uniform(1, 2, 2000)
        for v in vals:
            mine = round_binary(float(v), fmt).bits
            assert mine == oracle_round(Fraction(float(v)), fmt)

    @given(x=st.floats(allow_nan=False, allow_infinity=False, width=64))
    @settings(max_examples=300)
    def test_idempotent(self, x):
        for fmt in ALL_FORMATS:
            once = round_binary(x, fmt)
            twice = round_binary(once.value, fmt)
            assert once.bits == twice.bits

    @pytest.mark.parametrize("fmt", [FP16, BF16])
    def test_encode_decode_roundtrip_exhaustive(self, fmt):
        bits = np.arange(1 << 16, dtype=np.uint64)
        vals = bits_to_values(bits, fmt)
        back = values_to_bits(vals, fmt)
        finite = ((bits >> fmt.mant_bits) & fmt.exp_mask) != fmt.exp_mask
        assert np.array_equal(back[finite].astype(np.uint64), bits[finite])
        # scalar decode agrees with the vectorized one
        for b in [0, 1, 0x3C00, 0x7BFF, 0x8001, 0x83FF]:
            assert FpScalar(b, fmt).value == vals[b] or (
                math.isnan(FpScalar(b, fmt).value) and math.isnan(vals[b]))

    def test_round_array_matches_scalar(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(500) * np.exp2(rng.uniform(-20, 10, 500))
        for fmt in ALL_FORMATS:
            arr = round_array(x, fmt)
            for xi, ai in zip(x, arr):
                assert round_binary(float(xi), fmt).value == ai


class TestEmulatedOps:
    def test_format_mismatch_rejected(self):
        with pytest.raises(ValueError):
            emu_add(round_binary(1.0, FP16), round_binary(1.0, BF16))

    def test_fp16_absorbs_small_addend(self):
        a = round_binary(1.0, FP16)
        b = round_binary(2.0 ** -24, FP16)
        assert emu_add(a, b).value == 1.0

    def test_mul_identity(self):
        rng = np.random.default_rng(3)
        for fmt in ALL_FORMATS:
            one = round_binary(1.0, fmt)
            for _ in range(50):
                x = round_binary(float(rng.standard_normal() * 2.0 ** rng.integers(-8, 8)), fmt)
                assert emu_mul(x, one).bits == x.bits

    def test_bf16_exact_product(self):
        x = round_binary(1.5, BF16)
        assert emu_mul(x, x).value == 2.25

    def test_inf_and_nan_follow_ieee(self):
        inf = round_binary(math.inf, FP16)
        one = round_binary(1.0, FP16)
        nan = round_binary(math.nan, FP16)
        assert emu_add(inf, one).is_inf
        assert emu_sub(one, inf).value == -math.inf
        assert emu_mul(nan, one).is_nan
        assert emu_sub(inf, inf).is_nan

    @given(st.integers(0, (1 << 16) - 1), st.integers(0, (1 << 16) - 1))
    @settings(max_examples=400)
    def test_add_commutes_bitexact_fp16(self, ba, bb):
        a, b = FpScalar(ba, FP16), FpScalar(bb, FP16)
        r1, r2 = emu_add(a, b), emu_add(b, a)
        if r1.is_nan or r2.is_nan:
            assert r1.is_nan and r2.is_nan
        else:
            assert r1.bits == r2.bits

    @pytest.mark.parametrize("fmt", ALL_FORMATS)
    @pytest.mark.parametrize("op,fn", [("add", emu_add), ("sub", emu_sub), ("mul", emu_mul)])
    def test_ops_match_rational_oracle(self, fmt, op, fn):
        rng = np.random.default_rng(hash((fmt.name, op)) % 2 ** 31)
        ab = finite_bits(fmt, rng, 4000).reshape(-1, 2)
        for a_bits, b_bits in ab:
            a = FpScalar(int(a_bits), fmt)
            b = FpScalar(int(b_bits), fmt)
            got = fn(a, b)
            want = oracle_op(int(a_bits), int(b_bits), op, fmt)
            assert got.bits == want, (
                f"{fmt.name} {op}: {a.value!r} {b.value!r} -> {got.bits:#x}, oracle {want:#x}")


class TestTreeSum:
    def test_sixty_four_ones(self):
        xs = [round_binary(1.0, FP32)] * 64
        assert tree_sum(xs).value == 64.0

    def test_single_element(self):
        x = round_binary(3.7, FP16)
        assert tree_sum([x]).bits == x.bits

    def test_empty_returns_zero(self):
        z = tree_sum([], fmt=BF16)
        assert z.bits == 0 and z.value == 0.0
        with pytest.raises(ValueError):
            tree_sum([])

    def test_arity_validated(self):
        with pytest.raises(ValueError):
            tree_sum_values(np.ones(4), FP32, arity=1)

    def test_order_sensitivity_fp16(self):
        # 1.0 followed by 63 copies of 2^-11: sequential accumulation ties to
        # even at every step and stays at 1.0; the chunk tree keeps all but
        # the first small addend.
        vals = [1.0] + [2.0 ** -11] * 63
        xs = [round_binary(v, FP16) for v in vals]
        tree = tree_sum(xs).value
        seq = np.float16(0.0)
        for v in vals:
            seq = np.float16(seq + np.float16(v))
        assert float(seq) == 1.0
        assert tree == 1.0302734375
        assert tree != float(seq)

    def test_chunked_accumulation_is_sequential_over_chunks(self):
        # 128 elements = 2 chunks; total = chunk1 + chunk2 with one rounding
        rng = np.random.default_rng(5)
        vals = round_array(rng.uniform(-1, 1, 128), FP16)
        whole = tree_sum_values(vals, FP16)
        c1 = tree_sum_values(vals[:64], FP16)
        c2 = tree_sum_values(vals[64:], FP16)
        assert whole == round_value(float(c1) + float(c2), FP16)

    @pytest.mark.parametrize("fmt", ALL_FORMATS)
    @pytest.mark.parametrize("d", [1, 2, 7, 63, 64, 65, 100, 128, 200])
    def test_scalar_and_batch_paths_agree(self, fmt, d):
        rng = np.random.default_rng(d)
        vals = round_array(rng.uniform(-2, 2, d), fmt)
        xs = [round_binary(float(v), fmt) for v in vals]
        assert tree_sum(xs).value == float(tree_sum_values(vals, fmt))

    def test_batch_rows_match_single_rows(self):
        rng = np.random.default_rng(11)
        batch = round_array(rng.uniform(-1, 1, (10, 100)), FP16)
        out = tree_sum_values(batch, FP16)
        for row, tot in zip(batch, out):
            assert float(tree_sum_values(row, FP16)) == tot
