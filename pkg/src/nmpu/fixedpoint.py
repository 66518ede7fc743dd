"""Exact fixed-point numbers in arbitrary Q(int, frac) formats.

A value is an integer ``raw`` interpreted as ``raw * 2**-frac_bits``.  For
signed formats ``int_bits`` counts the sign bit, so ``Qs(7,1)`` is an 8-bit
two's complement word covering [-64, 63.5].  Raw integers are kept as plain
Python ints with their signed value; :attr:`FixedValue.bits` gives the
two's complement bit pattern when the hardware view is needed.

All arithmetic is exact: multiplication and addition widen the result
format, the right shift only moves the binary point, and precision is lost
solely through :func:`fx_cut_msb`, :func:`fx_trunc_lsb` and
:func:`fx_quantize`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational, Real

from .errors import FormatError, RangeError, WidthError

MAX_WIDTH = 64

ROUND_HALF_UP = "round-half-up"
ROUND_NEAREST_EVEN = "round-nearest-even"
TRUNCATE = "truncate"
QUANTIZE_MODES = (ROUND_HALF_UP, ROUND_NEAREST_EVEN, TRUNCATE)

SATURATE = "saturate"
ASSERT = "assert"

_TEXT_RE = re.compile(r"^Q([su])\((\d+),(\d+)\):(-?\d+)$")
_FMT_RE = re.compile(r"^Q([su])\((\d+),(\d+)\)$")


@dataclass(frozen=True)
class FixedFormat:
    int_bits: int
    frac_bits: int
    signed: bool = False

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0:
            raise FormatError(f"negative field width in {self!r}")
        if self.width < 1:
            raise FormatError("format needs at least one bit")
        if self.signed and self.int_bits < 1:
            raise FormatError("signed format needs a sign bit in int_bits")
        if self.width > MAX_WIDTH:
            raise WidthError(f"{self} is {self.width} bits wide (max {MAX_WIDTH})")

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.width - 1)) if self.signed else 0

    @property
    def raw_max(self) -> int:
        return (1 << (self.width - 1)) - 1 if self.signed else (1 << self.width) - 1

    @property
    def lsb(self) -> Fraction:
        return Fraction(1, 1 << self.frac_bits)

    @property
    def min_value(self) -> Fraction:
        return self.raw_min * self.lsb

    @property
    def max_value(self) -> Fraction:
        return self.raw_max * self.lsb

    def fits(self, raw: int) -> bool:
        return self.raw_min <= raw <= self.raw_max

    def __str__(self):
        return f"Q{'s' if self.signed else 'u'}({self.int_bits},{self.frac_bits})"

    @classmethod
    def parse(cls, text: str) -> "FixedFormat":
        m = _FMT_RE.match(text.strip())
        if not m:
            raise FormatError(f"cannot parse format {text!r}")
        return cls(int(m.group(2)), int(m.group(3)), m.group(1) == "s")


def Qu(int_bits: int, frac_bits: int) -> FixedFormat:
    return FixedFormat(int_bits, frac_bits, False)


def Qs(int_bits: int, frac_bits: int) -> FixedFormat:
    return FixedFormat(int_bits, frac_bits, True)


@dataclass(frozen=True)
class FixedValue:
    """A raw integer tagged with its format.

    ``overflow`` is sticky: it is set by a saturating MSB cut and carried
    through every later operation that consumes the value.
    """

    raw: int
    fmt: FixedFormat
    overflow: bool = False

    def __post_init__(self):
        if not isinstance(self.raw, int) or isinstance(self.raw, bool):
            raise TypeError(f"raw must be int, got {type(self.raw).__name__}")
        if not self.fmt.fits(self.raw):
            raise RangeError(f"raw {self.raw} does not fit {self.fmt}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.fmt.frac_bits)

    @property
    def bits(self) -> int:
        """Two's complement bit pattern of ``raw`` in ``fmt.width`` bits."""
        return self.raw & ((1 << self.fmt.width) - 1)

    def bit(self, weight_exp: int) -> int:
        """Bit carrying weight ``2**weight_exp`` (e.g. -3 for 2^-3)."""
        pos = weight_exp + self.fmt.frac_bits
        if not 0 <= pos < self.fmt.width:
            raise FormatError(f"{self.fmt} has no bit of weight 2^{weight_exp}")
        return (self.raw >> pos) & 1

    def __float__(self):
        return self.raw / (1 << self.fmt.frac_bits)

    def __str__(self):
        return f"{self.fmt}:{self.raw}"

    @classmethod
    def parse(cls, text: str) -> "FixedValue":
        """Inverse of ``str()``: ``"Qu(1,7):150"``."""
        m = _TEXT_RE.match(text.strip())
        if not m:
            raise FormatError(f"cannot parse fixed value {text!r}")
        fmt = FixedFormat(int(m.group(2)), int(m.group(3)), m.group(1) == "s")
        return cls(int(m.group(4)), fmt)


def fx_from_int(n: int, fmt: FixedFormat) -> FixedValue:
    return FixedValue(int(n) << fmt.frac_bits, fmt)


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, Real):
        if not math.isfinite(float(x)):
            raise RangeError(f"cannot quantize non-finite value {x}")
        return Fraction(float(x))
    return Fraction(x)


def fx_quantize(x, fmt: FixedFormat, mode: str = ROUND_HALF_UP) -> FixedValue:
    """Quantize a real number to ``fmt``.

    Floats are converted exactly (``Fraction(float)``), so 1.17 is treated
    as its binary64 value; this matters only at exact ties.

    Raises
    ------
    RangeError
        If the rounded value lies outside the format's range.
    """
    scaled = _as_fraction(x) * (1 << fmt.frac_bits)
    if mode == TRUNCATE:
        raw = math.floor(scaled)
    elif mode == ROUND_HALF_UP:
        raw = math.floor(scaled + Fraction(1, 2))
    elif mode == ROUND_NEAREST_EVEN:
        raw = round(scaled)
    else:
        raise ValueError(f"unknown quantization mode {mode!r}")
    if not fmt.fits(raw):
        raise RangeError(f"{x} overflows {fmt} (range {float(fmt.min_value)}..{float(fmt.max_value)})")
    return FixedValue(raw, fmt)


def _signed_int_bits(fmt: FixedFormat) -> int:
    # integer bits the format needs once reinterpreted as two's complement
    return fmt.int_bits if fmt.signed else fmt.int_bits + 1


def fx_mul(a: FixedValue, b: FixedValue) -> FixedValue:
    """Exact product in Q(ia+ib, fa+fb), signed if either operand is."""
    fmt = FixedFormat(
        a.fmt.int_bits + b.fmt.int_bits,
        a.fmt.frac_bits + b.fmt.frac_bits,
        a.fmt.signed or b.fmt.signed,
    )
    return FixedValue(a.raw * b.raw, fmt, a.overflow or b.overflow)


def _align(a: FixedValue, frac: int) -> int:
    return a.raw << (frac - a.fmt.frac_bits)


def _sum_format(a: FixedFormat, b: FixedFormat, signed: bool) -> FixedFormat:
    if signed:
        ib = max(_signed_int_bits(a), _signed_int_bits(b))
    else:
        ib = max(a.int_bits, b.int_bits)
    return FixedFormat(ib + 1, max(a.frac_bits, b.frac_bits), signed)


def fx_add(a: FixedValue, b: FixedValue) -> FixedValue:
    """Exact sum with one carry bit over the wider aligned operand."""
    fmt = _sum_format(a.fmt, b.fmt, a.fmt.signed or b.fmt.signed)
    raw = _align(a, fmt.frac_bits) + _align(b, fmt.frac_bits)
    return FixedValue(raw, fmt, a.overflow or b.overflow)


def fx_sub(a: FixedValue, b: FixedValue) -> FixedValue:
    """Exact difference; always signed."""
    fmt = _sum_format(a.fmt, b.fmt, True)
    raw = _align(a, fmt.frac_bits) - _align(b, fmt.frac_bits)
    return FixedValue(raw, fmt, a.overflow or b.overflow)


def fx_shift_right(a: FixedValue, k: int) -> FixedValue:
    """Divide by ``2**k`` by moving the binary point; raw bits unchanged."""
    if k < 0:
        raise ValueError("shift must be non-negative")
    fmt = FixedFormat(a.fmt.int_bits, a.fmt.frac_bits + k, a.fmt.signed)
    return FixedValue(a.raw, fmt, a.overflow)


def fx_cut_msb(a: FixedValue, n: int, policy: str = SATURATE) -> FixedValue:
    """Drop ``n`` integer MSBs.

    Under ``saturate`` an unrepresentable value is clamped to the narrowed
    format's min/max and flagged; under ``assert`` it raises OverflowError.
    """
    if not 0 <= n <= a.fmt.int_bits:
        raise FormatError(f"cannot cut {n} MSBs from {a.fmt}")
    fmt = FixedFormat(a.fmt.int_bits - n, a.fmt.frac_bits, a.fmt.signed)
    if fmt.fits(a.raw):
        return FixedValue(a.raw, fmt, a.overflow)
    if policy == ASSERT:
        raise OverflowError(f"{a} does not fit {fmt}")
    if policy != SATURATE:
        raise ValueError(f"unknown overflow policy {policy!r}")
    raw = min(max(a.raw, fmt.raw_min), fmt.raw_max)
    return FixedValue(raw, fmt, True)


def _weight_exponent(weight) -> int:
    w = _as_fraction(weight)
    if w <= 0:
        raise ValueError(f"weight must be positive, got {weight}")
    num, den = w.numerator, w.denominator
    if num == 1 and den & (den - 1) == 0:
        return -(den.bit_length() - 1)
    if den == 1 and num & (num - 1) == 0:
        return num.bit_length() - 1
    raise ValueError(f"weight {weight} is not a power of two")


def fx_trunc_lsb(a: FixedValue, keep_down_to) -> FixedValue:
    """Discard every bit with weight below ``keep_down_to`` (floor).

    ``keep_down_to`` is a power-of-two weight such as ``Fraction(1, 32)``;
    the result keeps ``-log2(keep_down_to)`` fractional bits.
    """
    new_frac = -_weight_exponent(keep_down_to)
    if new_frac < 0:
        raise FormatError("truncation above the binary point is not supported")
    if new_frac > a.fmt.frac_bits:
        raise FormatError(f"{a.fmt} has no bits down to weight {keep_down_to}")
    fmt = FixedFormat(a.fmt.int_bits, new_frac, a.fmt.signed)
    return FixedValue(a.raw >> (a.fmt.frac_bits - new_frac), fmt, a.overflow)


def fx_saturate_int(raw: int, fmt: FixedFormat) -> tuple[int, bool]:
    """Clamp an integer raw value into ``fmt``; returns ``(raw, clamped)``."""
    clamped = min(max(raw, fmt.raw_min), fmt.raw_max)
    return clamped, clamped != raw
