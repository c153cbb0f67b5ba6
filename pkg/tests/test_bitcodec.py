from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distwave.bitcodec import (
    BudgetLedger,
    expected_length_audit,
    fractional_digits,
    int_bit_count,
    parse_stream,
    payload_length,
    trans_approx_decode,
    trans_approx_encode,
)
from distwave.errors import FramingError


def oracle(x: float, n: int, D: float):
    """Exact truncation with rationals: (decoded value, nominal payload length)."""
    F = math.ceil(Fraction(D) * Fraction(math.log2(n)) - Fraction(1, 10 ** 12))
    X = Fraction(abs(x))
    scaled = math.floor(X * 2 ** F)
    c = (scaled >> F).bit_length()
    y = Fraction(scaled, 2 ** F) * (1 if x >= 0 else -1)
    return y, 1 + max(1, c) + F


def test_zero():
    msg = trans_approx_encode(0.0, 1024, 0.5)
    assert trans_approx_decode(msg) == 0.0
    # gamma(1) = "1", sign 1, five fractional zeros
    assert msg.bits == "1" + "1" + "0" * 5
    assert msg.payload_bits == 2 + 5


def test_truncation_example():
    msg = trans_approx_encode(2.6875, 16, 0.5)
    assert trans_approx_decode(msg) == 2.5
    assert abs(2.6875 - 2.5) <= 16 ** -0.5


def test_negative_three():
    msg = trans_approx_encode(-3.0, 4, 0.5)
    # gamma(3) = 011, sign 0, integer 11, one fractional 0
    assert msg.bits == "011" + "0" + "11" + "0"
    assert trans_approx_decode(msg) == -3.0
    assert msg.payload_bits == 4 and msg.framing_bits == 3


def test_fractional_digits_ceiling():
    assert fractional_digits(16, 0.5) == 2
    assert fractional_digits(2 ** 20, 0.5) == 10
    assert fractional_digits(2 ** 13, 0.5) == 7
    assert fractional_digits(10, 1.0) == 4


@given(st.integers(-(2 ** 40), 2 ** 40), st.integers(1, 20))
def test_dyadic_round_trip_lossless(p, F):
    x = p / 2 ** F
    if abs(x) >= 2 ** 20:
        return
    n = 2 ** (2 * F)
    msg = trans_approx_encode(x, n, 0.5)
    assert msg.frac_bits == F
    assert trans_approx_decode(msg) == x


def test_codec_bound_1e5_magnitudes():
    rng = np.random.default_rng(20240501)
    mags = 2.0 ** rng.uniform(-30, 30, size=100_000)
    signs = rng.choice([-1.0, 1.0], size=mags.size)
    xs = mags * signs
    ns = 2 ** rng.integers(2, 25, size=xs.size)
    Ds = rng.choice([0.25, 0.5, 1.0, 1.5], size=xs.size)
    violations = 0
    for x, n, D in zip(xs, ns, Ds):
        n, D = int(n), float(D)
        msg = trans_approx_encode(x, n, D)
        y = trans_approx_decode(msg)
        want, payload = oracle(x, n, D)
        exact_err = abs(Fraction(x) - Fraction(y))
        if Fraction(y) != want or msg.payload_bits != payload:
            violations += 1
        elif exact_err > Fraction(2) ** -fractional_digits(n, D) or abs(x - y) > n ** -D:
            violations += 1
        elif abs(y) > abs(x):
            violations += 1
    assert violations == 0


@given(st.floats(allow_nan=False, allow_infinity=False, min_value=-1e12, max_value=1e12),
       st.integers(1, 30), st.sampled_from([0.5, 1.0, 2.0]))
def test_bound_and_accounting(x, logn, D):
    n = 2 ** logn
    msg = trans_approx_encode(x, n, D)
    y = trans_approx_decode(msg)
    assert abs(x - y) <= n ** -D
    assert abs(y) <= abs(x)
    assert msg.payload_bits == payload_length(x, fractional_digits(n, D))
    assert msg.payload_bits == 1 + max(1, int_bit_count(x)) + fractional_digits(n, D)
    assert len(msg.bits) == msg.payload_bits + msg.framing_bits
    assert msg.payload_bits <= 1 + max(1, math.floor(math.log2(abs(x))) + 1 if x else 1) + fractional_digits(n, D)


def test_concatenation_10k_messages():
    rng = np.random.default_rng(7)
    xs = rng.standard_normal(10_000) * 2.0 ** rng.integers(-8, 12, size=10_000)
    msgs = [trans_approx_encode(x, 2 ** 14, 0.5) for x in xs]
    parsed = parse_stream("".join(m.bits for m in msgs), 7)
    assert len(parsed) == 10_000
    assert [p.bits for p in parsed] == [m.bits for m in msgs]
    assert [p.payload_bits for p in parsed] == [m.payload_bits for m in msgs]


@given(st.lists(st.floats(-1e6, 1e6), max_size=50), st.integers(1, 12))
def test_framing_self_delimiting(xs, F):
    n = 2 ** (2 * F)
    msgs = [trans_approx_encode(x, n, 0.5) for x in xs]
    parsed = parse_stream("".join(m.bits for m in msgs), F, expected=len(xs))
    assert [trans_approx_decode(p) for p in parsed] == [trans_approx_decode(m) for m in msgs]


def test_truncated_stream_raises():
    msgs = [trans_approx_encode(x, 2 ** 10, 0.5) for x in (1.5, -2.25, 7.0)]
    bits = "".join(m.bits for m in msgs)
    with pytest.raises(FramingError):
        parse_stream(bits[:-2], 5)
    with pytest.raises(FramingError):
        parse_stream(bits, 5, expected=4)
    with pytest.raises(FramingError):
        parse_stream("01x", 5)


def test_ledger_and_audit():
    n, D = 2 ** 20, 0.5
    rng = np.random.default_rng(1)
    led = BudgetLedger(0)
    for x in rng.uniform(-2, 2, size=500):
        led.record(trans_approx_encode(x, n, D))
    audit = expected_length_audit([led], n, D)
    assert audit.messages == 500
    assert audit.mean_payload_bits <= 2 + fractional_digits(n, D)
    assert audit.mean_payload_bits <= 0.5 * 20 + 3
    assert not audit.violated
    assert led.wire_bits == audit.total_payload_bits + audit.total_framing_bits
    empty = expected_length_audit([BudgetLedger(0)], n, D)
    assert empty.total_payload_bits == 0 and empty.total_framing_bits == 0 and not empty.violated
