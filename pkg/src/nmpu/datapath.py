"""Bit-exact model of the fixed-point NMPU.

Per branch (positive and negative ADC count) the unit computes::

    count (Qu(10,0)) x scale (Qu(1,7))  -> Qu(11,7)
    >> shift (0..3)                       -> Qu(11,7+shift)
    cut 3 MSBs (saturating)               -> Qu(8,7+shift)
    truncate below 2^-5                   -> Qu(8,5)
    first cut/round stage                 -> Qu(9,2)

then ``s = branch_p - branch_n + offset`` (exact, Qs(12,2)), the second
cut/round stage reduces ``s`` to an integer, ReLU is applied when enabled and
the result saturates to an 8-bit signed output.

Rounding convention for the second stage: "cut" is floor (two's complement
truncation) and "round" is round-half-up, i.e. ``floor(s + 1/2)``.  For
negative ties this rounds toward +inf (-3.5 -> -3).

Two implementations are provided and cross-checked in the tests: the scalar
:func:`nmpu_process` composed from :mod:`nmpu.fixedpoint` operations, and the
vectorized :func:`nmpu_process_array` working on raw int64 arrays.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, RangeError
from .fixedpoint import (
    ASSERT,
    ROUND_HALF_UP,
    SATURATE,
    FixedValue,
    Qs,
    Qu,
    fx_add,
    fx_cut_msb,
    fx_from_int,
    fx_mul,
    fx_quantize,
    fx_saturate_int,
    fx_shift_right,
    fx_sub,
    fx_trunc_lsb,
)

INPUT_FMT = Qu(10, 0)
SCALE_FMT = Qu(1, 7)
OFFSET_FMT = Qs(7, 1)
OUTPUT_FMT = Qs(8, 0)
MAX_SHIFT = 3
MSB_CUT = 3
BRANCH_LSB = Fraction(1, 32)
STAGE1_FRAC = 2
ROUND_CONVENTION = "half-up"

INPUT_MAX = INPUT_FMT.raw_max
OUT_MIN = OUTPUT_FMT.raw_min
OUT_MAX = OUTPUT_FMT.raw_max


class FirstStageMethod(enum.Enum):
    """Cut/round after the scaling; bits 2^-3..2^-5 are always removed.

    Pattern legend: ``G`` guard bit (cut when set), ``R`` round bits (round up
    when any is set), ``x`` ignored, ``|`` the cut point below 2^-2.
    """

    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"

    @property
    def pattern(self) -> str:
        return _FIRST_PATTERNS[self]


_FIRST_PATTERNS = {
    FirstStageMethod.M1: "x.xx|Rxx",
    FirstStageMethod.M2: "x.xG|RRx",
    FirstStageMethod.M3: "x.xG|Rxx",
    FirstStageMethod.M4: "x.xG|RRR",
    FirstStageMethod.M5: "x.xx|xxx",
}

# (uses guard bit, mask of the three dropped bits that trigger a round-up)
_FIRST_RULES = {
    FirstStageMethod.M1: (False, 0b100),
    FirstStageMethod.M2: (True, 0b110),
    FirstStageMethod.M3: (True, 0b100),
    FirstStageMethod.M4: (True, 0b111),
    FirstStageMethod.M5: (False, 0b000),
}


class SecondStageMethod(enum.Enum):
    """Cut/round after the branch sum: removes all fractional bits."""

    S1 = "S1"  # cut both signs
    S2 = "S2"  # round positive, cut negative
    S3 = "S3"  # round both signs


def _first(method) -> FirstStageMethod:
    return method if isinstance(method, FirstStageMethod) else FirstStageMethod(method)


def _second(method) -> SecondStageMethod:
    return method if isinstance(method, SecondStageMethod) else SecondStageMethod(method)


@dataclass(frozen=True)
class NmpuConfig:
    scale_p: FixedValue
    scale_n: FixedValue
    shift: int
    offset: FixedValue
    first_stage: FirstStageMethod = FirstStageMethod.M5
    second_stage: SecondStageMethod = SecondStageMethod.S1
    relu_enabled: bool = True
    msb_cut_policy: str = SATURATE

    def __post_init__(self):
        object.__setattr__(self, "first_stage", _first(self.first_stage))
        object.__setattr__(self, "second_stage", _second(self.second_stage))
        for name in ("scale_p", "scale_n"):
            if getattr(self, name).fmt != SCALE_FMT:
                raise FormatError(f"{name} must be {SCALE_FMT}")
        if self.offset.fmt != OFFSET_FMT:
            raise FormatError(f"offset must be {OFFSET_FMT}")
        if not 0 <= self.shift <= MAX_SHIFT:
            raise RangeError(f"shift {self.shift} does not fit 2 bits")
        if self.msb_cut_policy not in (SATURATE, ASSERT):
            raise ValueError(f"unknown MSB cut policy {self.msb_cut_policy!r}")

    @classmethod
    def from_raw(cls, scale_p_raw: int, scale_n_raw: int, shift: int = 0,
                 offset_raw: int = 0, first_stage="M5", second_stage="S1",
                 relu_enabled: bool = True, msb_cut_policy: str = SATURATE) -> "NmpuConfig":
        return cls(
            FixedValue(int(scale_p_raw), SCALE_FMT),
            FixedValue(int(scale_n_raw), SCALE_FMT),
            int(shift),
            FixedValue(int(offset_raw), OFFSET_FMT),
            first_stage,
            second_stage,
            bool(relu_enabled),
            msb_cut_policy,
        )

    @property
    def arch_id(self) -> str:
        return f"{self.first_stage.value}-{self.second_stage.value}"

    def real_params(self) -> "RealParams":
        """Effective real parameters with the shift folded into the scales."""
        div = 1 << self.shift
        return RealParams(
            float(self.scale_p) / div,
            float(self.scale_n) / div,
            float(self.offset),
            self.relu_enabled,
        )

    def to_dict(self) -> dict:
        return {
            "scale_p_raw": self.scale_p.raw,
            "scale_n_raw": self.scale_n.raw,
            "shift": self.shift,
            "offset_raw": self.offset.raw,
            "first_stage": self.first_stage.value,
            "second_stage": self.second_stage.value,
            "relu": self.relu_enabled,
            "msb_cut_policy": self.msb_cut_policy,
            "round_convention": ROUND_CONVENTION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NmpuConfig":
        conv = d.get("round_convention", ROUND_CONVENTION)
        if conv != ROUND_CONVENTION:
            raise ValueError(f"unsupported rounding convention {conv!r}")
        return cls.from_raw(
            d["scale_p_raw"], d["scale_n_raw"], d.get("shift", 0), d.get("offset_raw", 0),
            d.get("first_stage", "M5"), d.get("second_stage", "S1"),
            _parse_bool(d.get("relu", True)), d.get("msb_cut_policy", SATURATE),
        )


def _parse_bool(v) -> bool:
    if isinstance(v, str):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    return bool(v)


def dump_config(cfg: NmpuConfig) -> str:
    """Serialize as ``key=value`` lines (stable key order)."""
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def load_config(text: str) -> NmpuConfig:
    """Parse either a ``key=value`` document or a JSON object."""
    stripped = text.strip()
    if stripped.startswith("{"):
        return NmpuConfig.from_dict(json.loads(stripped))
    d = {}
    for line in stripped.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        k, _, v = line.partition("=")
        v = v.strip()
        d[k.strip()] = int(v) if v.lstrip("-").isdigit() else v
    return NmpuConfig.from_dict(d)


@dataclass(frozen=True)
class NmpuOutput:
    value: int
    overflow: bool = False


@dataclass(frozen=True)
class RealParams:
    """Unquantized periphery parameters (shift already folded into scales)."""

    scale_p: float
    scale_n: float
    offset: float = 0.0
    relu: bool = True


# ---------------------------------------------------------------------------
# scalar golden path

def first_stage_round(v: FixedValue, method) -> FixedValue:
    """Reduce a non-negative Q(i,5) value to Q(i+1,2) per ``method``."""
    method = _first(method)
    if v.fmt.frac_bits != 5:
        raise FormatError(f"first stage expects 5 fractional bits, got {v.fmt}")
    if v.raw < 0:
        raise DomainError("first stage operates on non-negative branch values")
    kept = fx_trunc_lsb(v, Fraction(1, 4))
    dropped = v.raw & 0b111
    use_guard, mask = _FIRST_RULES[method]
    guard = kept.raw & 1
    up = bool(dropped & mask) and not (use_guard and guard)
    fmt = Qs(kept.fmt.int_bits + 1, 2) if kept.fmt.signed else Qu(kept.fmt.int_bits + 1, 2)
    return FixedValue(kept.raw + int(up), fmt, v.overflow)


def second_stage_round(v: FixedValue, method) -> int:
    """Drop all fractional bits of a signed value; returns the integer."""
    method = _second(method)
    f = v.fmt.frac_bits
    if f < 1:
        raise FormatError("second stage expects at least one fractional bit")
    floor = v.raw >> f
    half_up = (v.raw + (1 << (f - 1))) >> f
    if method is SecondStageMethod.S1:
        return floor
    if method is SecondStageMethod.S2:
        return half_up if v.raw >= 0 else floor
    return half_up


def _branch(count: int, scale: FixedValue, cfg: NmpuConfig) -> dict:
    x = fx_from_int(count, INPUT_FMT)
    prod = fx_mul(x, scale)
    shifted = fx_shift_right(prod, cfg.shift)
    narrowed = fx_cut_msb(shifted, MSB_CUT, cfg.msb_cut_policy)
    trunc = fx_trunc_lsb(narrowed, BRANCH_LSB)
    rounded = first_stage_round(trunc, cfg.first_stage)
    return {"product": prod, "shifted": shifted, "narrowed": narrowed,
            "truncated": trunc, "rounded": rounded}


def nmpu_trace(in_p: int, in_n: int, cfg: NmpuConfig) -> dict:
    """Run the datapath and return every intermediate value."""
    for name, v in (("in_p", in_p), ("in_n", in_n)):
        if not 0 <= v <= INPUT_MAX:
            raise RangeError(f"{name}={v} is not a 10-bit unsigned count")
    bp = _branch(int(in_p), cfg.scale_p, cfg)
    bn = _branch(int(in_n), cfg.scale_n, cfg)
    diff = fx_sub(bp["rounded"], bn["rounded"])
    s = fx_add(diff, cfg.offset)
    stage2 = second_stage_round(s, cfg.second_stage)
    act = max(stage2, 0) if cfg.relu_enabled else stage2
    out, clamped = fx_saturate_int(act, OUTPUT_FMT)
    return {"p": bp, "n": bn, "sum": s, "stage2": stage2, "activated": act,
            "output": NmpuOutput(out, s.overflow or clamped)}


def nmpu_process(in_p: int, in_n: int, cfg: NmpuConfig) -> NmpuOutput:
    return nmpu_trace(in_p, in_n, cfg)["output"]


# ---------------------------------------------------------------------------
# vectorized path

def _first_stage_raw(t: np.ndarray, method: FirstStageMethod) -> np.ndarray:
    kept = t >> 3
    use_guard, mask = _FIRST_RULES[method]
    up = (t & mask) != 0
    if use_guard:
        up &= (kept & 1) == 0
    return kept + up


def _second_stage_raw(s: np.ndarray, method: SecondStageMethod) -> np.ndarray:
    floor = s >> STAGE1_FRAC
    if method is SecondStageMethod.S1:
        return floor
    half_up = (s + (1 << (STAGE1_FRAC - 1))) >> STAGE1_FRAC
    if method is SecondStageMethod.S2:
        return np.where(s >= 0, half_up, floor)
    return half_up


def _branch_raw(count, scale_raw, shift):
    prod = count * scale_raw  # frac 7 + shift after the (format-only) shift
    limit = (np.int64(1) << (15 + shift)) - 1
    over = prod > limit
    prod = np.minimum(prod, limit)
    return prod >> (2 + shift), over


def nmpu_process_array(in_p, in_n, scale_p_raw, scale_n_raw, shift, offset_raw,
                       first_stage="M5", second_stage="S1", relu: bool = True,
                       msb_cut_policy: str = SATURATE):
    """Vectorized datapath over broadcastable integer arrays.

    Parameters may be scalars or per-column arrays (raw integers of the
    Qu(1,7) scales and Qs(7,1) offset).  Returns ``(values, overflow)`` as
    int64 and bool arrays.
    """
    first, second = _first(first_stage), _second(second_stage)
    in_p = np.asarray(in_p, dtype=np.int64)
    in_n = np.asarray(in_n, dtype=np.int64)
    if in_p.size and (in_p.min() < 0 or in_p.max() > INPUT_MAX):
        raise RangeError("in_p outside the 10-bit unsigned range")
    if in_n.size and (in_n.min() < 0 or in_n.max() > INPUT_MAX):
        raise RangeError("in_n outside the 10-bit unsigned range")
    shift = np.asarray(shift, dtype=np.int64)
    if shift.size and (shift.min() < 0 or shift.max() > MAX_SHIFT):
        raise RangeError("shift outside 0..3")
    sp = np.asarray(scale_p_raw, dtype=np.int64)
    sn = np.asarray(scale_n_raw, dtype=np.int64)
    off = np.asarray(offset_raw, dtype=np.int64)
    tp, op = _branch_raw(in_p, sp, shift)
    tn, on = _branch_raw(in_n, sn, shift)
    over = op | on
    if msb_cut_policy == ASSERT and np.any(over):
        raise OverflowError("branch value exceeds the 8 integer bits left after the MSB cut")
    s = _first_stage_raw(tp, first) - _first_stage_raw(tn, first) + (off << 1)
    out = _second_stage_raw(s, second)
    if relu:
        out = np.maximum(out, 0)
    sat = (out < OUT_MIN) | (out > OUT_MAX)
    return np.clip(out, OUT_MIN, OUT_MAX), over | sat


def process_config_array(in_p, in_n, cfg: NmpuConfig):
    """:func:`nmpu_process_array` with parameters taken from ``cfg``."""
    return nmpu_process_array(
        in_p, in_n, cfg.scale_p.raw, cfg.scale_n.raw, cfg.shift, cfg.offset.raw,
        cfg.first_stage, cfg.second_stage, cfg.relu_enabled, cfg.msb_cut_policy,
    )


# ---------------------------------------------------------------------------
# real-valued reference and parameter preparation

def nmpu_reference(in_p, in_n, params: RealParams):
    """``ReLU?(in_p*scale_p - in_n*scale_n + offset)`` in float64.

    No rounding or saturation; works elementwise on arrays.
    """
    v = (np.asarray(in_p, dtype=np.float64) * params.scale_p
         - np.asarray(in_n, dtype=np.float64) * params.scale_n
         + params.offset)
    if params.relu:
        v = np.maximum(v, 0.0)
    return v if np.ndim(v) else float(v)


@dataclass(frozen=True)
class BatchNorm:
    gamma: float = 1.0
    beta: float = 0.0
    mean: float = 0.0
    var: float = 1.0
    eps: float = 0.0


def fold_bn(scale_aff, offset_aff, bn: BatchNorm):
    """Fold batch-norm into an affine correction.

    Returns ``(scale, offset)`` with ``d*scale + offset == BN(d*scale_aff + offset_aff)``.
    Arrays (per-column parameters) are accepted.
    """
    denom = np.asarray(bn.var, dtype=np.float64) + bn.eps
    if np.any(denom <= 0):
        raise DomainError("var + eps must be positive")
    k = np.asarray(bn.gamma, dtype=np.float64) / np.sqrt(denom)
    scale = np.asarray(scale_aff, dtype=np.float64) * k
    offset = k * (np.asarray(offset_aff, dtype=np.float64) - bn.mean) + bn.beta
    if np.ndim(scale) == 0 and np.ndim(offset) == 0:
        return float(scale), float(offset)
    return scale, offset


def apply_bn(x, bn: BatchNorm):
    return bn.gamma * (np.asarray(x, dtype=np.float64) - bn.mean) / np.sqrt(bn.var + bn.eps) + bn.beta


@dataclass(frozen=True)
class QuantizedParams:
    scale_fx: FixedValue
    shift: int
    offset_fx: FixedValue

    @property
    def scale(self) -> float:
        """Effective real scale ``scale_fx / 2**shift``."""
        return float(self.scale_fx) / (1 << self.shift)


def _scale_raw(scale: float, shift: int) -> int:
    return math.floor(Fraction(scale) * (1 << (7 + shift)) + Fraction(1, 2))


def max_shift_for(scale: float) -> int:
    """Largest shift whose round-half-up quantization of ``scale*2**shift`` fits Qu(1,7)."""
    if not (scale >= 0 and math.isfinite(scale)):
        raise RangeError(f"scale must be finite and non-negative, got {scale}")
    for k in range(MAX_SHIFT, -1, -1):
        if _scale_raw(scale, k) <= SCALE_FMT.raw_max:
            return k
    raise RangeError(f"scale {scale} does not fit Qu(1,7) for any shift")


def quantize_params(scale: float, offset: float, shift: int | None = None) -> QuantizedParams:
    """Quantize a real (scale, offset) pair to Qu(1,7) + shift and Qs(7,1).

    The shift is the largest in 0..3 that keeps the shifted scale
    representable, which keeps the most fractional precision.  Passing
    ``shift`` forces a value (used to share one shift between branches).
    """
    k = max_shift_for(scale) if shift is None else int(shift)
    if shift is not None and not 0 <= k <= MAX_SHIFT:
        raise RangeError(f"shift {k} outside 0..3")
    scale_fx = fx_quantize(Fraction(scale) * (1 << k), SCALE_FMT, ROUND_HALF_UP)
    offset_fx = fx_quantize(offset, OFFSET_FMT, ROUND_HALF_UP)
    return QuantizedParams(scale_fx, k, offset_fx)


def quantize_config(scale_p: float, scale_n: float, offset: float, first_stage="M5",
                    second_stage="S1", relu: bool = True,
                    msb_cut_policy: str = SATURATE) -> NmpuConfig:
    """Build an :class:`NmpuConfig` from real parameters with a shared shift."""
    k = min(max_shift_for(scale_p), max_shift_for(scale_n))
    qp = quantize_params(scale_p, offset, shift=k)
    qn = quantize_params(scale_n, offset, shift=k)
    return NmpuConfig(qp.scale_fx, qn.scale_fx, k, qp.offset_fx, first_stage,
                      second_stage, relu, msb_cut_policy)


def quantize_arrays(scale_p, scale_n, offset):
    """Vectorized :func:`quantize_config` parameter quantization.

    Returns raw int64 arrays ``(scale_p_raw, scale_n_raw, shift, offset_raw)``.
    """
    sp = np.asarray(scale_p, dtype=np.float64)
    sn = np.asarray(scale_n, dtype=np.float64)
    off = np.asarray(offset, dtype=np.float64)
    if np.any(sp < 0) or np.any(sn < 0):
        raise RangeError("scales must be non-negative")
    smax = np.maximum(sp, sn)
    shift = np.full(smax.shape, -1, dtype=np.int64)
    for k in range(MAX_SHIFT, -1, -1):
        fits = (shift < 0) & (np.floor(smax * 2.0 ** (7 + k) + 0.5) <= SCALE_FMT.raw_max)
        shift[fits] = k
    if np.any(shift < 0):
        raise RangeError("scale does not fit Qu(1,7) for any shift")
    spr = np.floor(sp * 2.0 ** (7 + shift) + 0.5).astype(np.int64)
    snr = np.floor(sn * 2.0 ** (7 + shift) + 0.5).astype(np.int64)
    offr = np.floor(off * 2.0 + 0.5).astype(np.int64)
    if np.any(offr < OFFSET_FMT.raw_min) or np.any(offr > OFFSET_FMT.raw_max):
        raise RangeError("offset overflows Qs(7,1)")
    return spr, snr, shift, offr


# ---------------------------------------------------------------------------
# test-vector files

def write_vectors(path, cfg: NmpuConfig, in_p, in_n) -> int:
    """Write ``in_p in_n expected_out overflow`` lines; returns line count."""
    in_p = np.asarray(in_p, dtype=np.int64).ravel()
    in_n = np.asarray(in_n, dtype=np.int64).ravel()
    out, over = process_config_array(in_p, in_n, cfg)
    table = np.column_stack([in_p, in_n, out, over.astype(np.int64)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, table, fmt="%d", delimiter=" ")
    return len(table)


def read_vectors(path) -> np.ndarray:
    """Load a vector file as an ``(n, 4)`` int64 array."""
    data = np.loadtxt(Path(path), dtype=np.int64, ndmin=2)
    if data.shape[1] != 4:
        raise FormatError("vector lines must have 4 fields")
    return data


def check_vectors(path, cfg: NmpuConfig) -> int:
    """Replay a vector file against ``cfg``; returns the mismatch count."""
    data = read_vectors(path)
    out, over = process_config_array(data[:, 0], data[:, 1], cfg)
    return int(np.count_nonzero((out != data[:, 2]) | (over.astype(np.int64) != data[:, 3])))
