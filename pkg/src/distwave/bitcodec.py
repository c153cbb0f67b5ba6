"""Finite-bit transmission of a real number and bit-length accounting.

A number ``x`` is sent as its sign and the binary digits of ``|x|`` down to
``F = ceil(D log2 n)`` places after the binary point, truncated toward zero,
so the receiver's value ``y`` satisfies ``|x - y| < 2^-F <= n^-D``.

Wire format of one message::

    gamma(c + 1) | sign | c integer bits, MSB first | F fractional bits

where ``c`` is the bit length of ``floor(|x|)`` and ``gamma`` is the Elias
gamma code.  ``F`` is shared configuration and never transmitted.

Two bit counts are tracked.  *Payload* follows the nominal length formula
``1 + max(1, c) + F``; *framing* is whatever the wire adds on top, so that
``payload + framing`` is always the exact wire length.  For ``c = 0`` the
one-bit gamma code ``"1"`` stands in for the integer digit the payload
formula charges, and framing is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import FramingError

__all__ = [
    "BitMessage",
    "BudgetLedger",
    "LengthAudit",
    "fractional_digits",
    "payload_length",
    "elias_gamma",
    "read_elias_gamma",
    "trans_approx_encode",
    "trans_approx_decode",
    "parse_stream",
    "expected_length_audit",
]


def fractional_digits(n: int, D: float) -> int:
    """``F = ceil(D log2 n)``; the tiny offset absorbs float noise when it is an integer."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if D <= 0:
        raise ValueError("D must be positive")
    return max(0, math.ceil(D * math.log2(n) - 1e-12))


def int_bit_count(x: float) -> int:
    """Number of binary digits of ``floor(|x|)`` (0 when ``|x| < 1``)."""
    return int(abs(x)).bit_length()


def payload_length(x: float, frac_bits: int) -> int:
    """Nominal accounting for one message: ``1 + max(1, c) + F``."""
    return 1 + max(1, int_bit_count(x)) + frac_bits


def elias_gamma(value: int) -> str:
    if value < 1:
        raise ValueError("Elias gamma encodes integers >= 1")
    body = bin(value)[2:]
    return "0" * (len(body) - 1) + body


def read_elias_gamma(bits: str, pos: int) -> tuple[int, int]:
    """Decode one gamma codeword starting at ``pos``; return ``(value, new_pos)``."""
    zeros = 0
    while pos + zeros < len(bits) and bits[pos + zeros] == "0":
        zeros += 1
    end = pos + 2 * zeros + 1
    if end > len(bits):
        raise FramingError(f"truncated Elias gamma code at bit {pos}")
    return int(bits[pos + zeros:end], 2), end


@dataclass(frozen=True)
class BitMessage:
    """One encoded coefficient.

    ``frac_bits`` is carried for convenience only; on the wire it is implied
    by the protocol configuration.
    """

    bits: str
    frac_bits: int
    payload_bits: int
    framing_bits: int

    def __len__(self) -> int:
        return len(self.bits)


def trans_approx_encode(x: float, n: int, D: float) -> BitMessage:
    """Encode ``x`` keeping ``ceil(D log2 n)`` fractional binary digits.

    >>> trans_approx_decode(trans_approx_encode(2.6875, 16, 0.5))
    2.5
    """
    return _encode(x, fractional_digits(n, D))


def _encode(x: float, frac_bits: int) -> BitMessage:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite value {x!r}")
    sign = "1" if x >= 0 else "0"
    num, den = abs(x).as_integer_ratio()
    scaled = (num << frac_bits) // den
    integer = scaled >> frac_bits
    c = integer.bit_length()
    parts = [elias_gamma(c + 1), sign]
    if c:
        parts.append(bin(integer)[2:])
    if frac_bits:
        parts.append(format(scaled & ((1 << frac_bits) - 1), f"0{frac_bits}b"))
    bits = "".join(parts)
    payload = 1 + max(1, c) + frac_bits
    return BitMessage(bits, frac_bits, payload, len(bits) - payload)


def _read_one(bits: str, pos: int, frac_bits: int) -> tuple[float, BitMessage, int]:
    start = pos
    c_plus_1, pos = read_elias_gamma(bits, pos)
    c = c_plus_1 - 1
    end = pos + 1 + c + frac_bits
    if end > len(bits):
        raise FramingError(f"message starting at bit {start} truncated ({len(bits) - start} of {end - start} bits)")
    sign = bits[pos]
    digits = bits[pos + 1:end]
    if c and digits[0] != "1":
        raise FramingError(f"integer part at bit {pos + 1} has a leading zero")
    scaled = int(digits, 2) if digits else 0
    value = scaled / (1 << frac_bits)
    if sign == "0":
        value = -value
    payload = 1 + max(1, c) + frac_bits
    msg = BitMessage(bits[start:end], frac_bits, payload, end - start - payload)
    return value, msg, end


def trans_approx_decode(msg: BitMessage) -> float:
    """Reconstruct ``y = (2 sign - 1) sum_k b_k 2^k`` from one message."""
    value, _, end = _read_one(msg.bits, 0, msg.frac_bits)
    if end != len(msg.bits):
        raise FramingError(f"{len(msg.bits) - end} trailing bits after message")
    return value


def parse_stream(bits: str, frac_bits: int, expected: int | None = None) -> list[BitMessage]:
    """Split a concatenation of messages back into messages."""
    if frac_bits < 0:
        raise ValueError("frac_bits must be >= 0")
    if any(ch not in "01" for ch in bits):
        raise FramingError("bit stream contains characters other than 0/1")
    out = []
    pos = 0
    while pos < len(bits):
        _, msg, pos = _read_one(bits, pos, frac_bits)
        out.append(msg)
    if expected is not None and len(out) != expected:
        raise FramingError(f"expected {expected} messages, parsed {len(out)}")
    return out


@dataclass
class BudgetLedger:
    """Running bit totals for one machine."""

    machine_id: int
    payload_bits: int = 0
    framing_bits: int = 0
    messages: int = 0

    def record(self, msg: BitMessage) -> None:
        self.payload_bits += msg.payload_bits
        self.framing_bits += msg.framing_bits
        self.messages += 1

    def record_all(self, msgs: Iterable[BitMessage]) -> None:
        for msg in msgs:
            self.record(msg)

    @property
    def wire_bits(self) -> int:
        return self.payload_bits + self.framing_bits


@dataclass(frozen=True)
class LengthAudit:
    messages: int
    total_payload_bits: int
    total_framing_bits: int
    mean_payload_bits: float
    bound_bits: float
    slack_bits: float
    violated: bool
    per_machine_payload: tuple[int, ...] = field(default=())


def expected_length_audit(ledgers: Sequence[BudgetLedger], n: int, D: float) -> LengthAudit:
    """Compare the mean payload per message with ``D log2 n + slack``.

    ``slack = 2 + 2 log2(1 + log2 n)`` covers the sign bit, the integer digit
    and the gamma prefix of bounded values.
    """
    lg = math.log2(n)
    msgs = sum(led.messages for led in ledgers)
    payload = sum(led.payload_bits for led in ledgers)
    framing = sum(led.framing_bits for led in ledgers)
    mean = payload / msgs if msgs else 0.0
    slack = 2.0 + 2.0 * math.log2(1.0 + lg)
    bound = D * lg + slack
    return LengthAudit(
        messages=msgs,
        total_payload_bits=payload,
        total_framing_bits=framing,
        mean_payload_bits=mean,
        bound_bits=bound,
        slack_bits=slack,
        violated=bool(msgs) and mean > bound,
        per_machine_payload=tuple(led.payload_bits for led in ledgers),
    )
