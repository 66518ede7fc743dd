"""Design-space exploration over the 15 cut/round architectures.

A stimulus is a set of differential input pairs derived from N(0, 1) draws,
plus per-sample affine parameters.  :func:`explore` runs every requested
architecture through the vectorized datapath and compares it with a float
baseline using the absolute quantization error ``|hw - baseline|``.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datapath import (
    INPUT_MAX,
    OUT_MAX,
    OUT_MIN,
    FirstStageMethod,
    RealParams,
    SecondStageMethod,
    nmpu_process_array,
    nmpu_reference,
    quantize_arrays,
)
from .errors import DomainError, ParameterError

SCALE_MIN, SCALE_MAX = 0.88, 1.17
DEFAULT_GAIN = 256.0
DEFAULT_SHIFT = 3
DEFAULT_OFFSET_RANGE = (-8, 7)
HIST_EDGES = np.concatenate([np.arange(0.0, 2.0 + 1e-12, 0.125), [np.inf]])
BASELINE_MODES = ("floor", "real")


@dataclass(frozen=True)
class Architecture:
    first_stage: FirstStageMethod
    second_stage: SecondStageMethod

    @property
    def id(self) -> str:
        return f"{self.first_stage.value}-{self.second_stage.value}"

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        try:
            f, s = text.strip().upper().split("-")
            return cls(FirstStageMethod(f), SecondStageMethod(s))
        except ValueError as exc:
            raise ParameterError(f"bad architecture id {text!r}; expected e.g. 'M1-S1'") from exc

    def __lt__(self, other):
        return self.id < other.id


ALL_ARCHITECTURES = tuple(
    Architecture(f, s) for f in FirstStageMethod for s in SecondStageMethod
)


@dataclass(frozen=True)
class Stimulus:
    """Input pairs and per-sample parameters.

    ``scale_p``/``scale_n`` are affine scales in [0.88, 1.17]; the effective
    datapath scale is ``scale / 2**shift``.  Offsets are integers so the
    Qs(7,1) offset register holds them exactly.
    """

    in_p: np.ndarray
    in_n: np.ndarray
    scale_p: np.ndarray
    scale_n: np.ndarray
    shift: np.ndarray
    offset: np.ndarray
    seed: int | None = None
    gain: float | None = None

    @property
    def n(self) -> int:
        return int(self.in_p.size)

    def real_params(self, relu: bool = True) -> RealParams:
        div = np.exp2(self.shift)
        return RealParams(self.scale_p / div, self.scale_n / div, self.offset, relu)

    def permuted(self, order) -> "Stimulus":
        return Stimulus(self.in_p[order], self.in_n[order], self.scale_p[order],
                        self.scale_n[order], self.shift[order], self.offset[order],
                        self.seed, self.gain)


def split_gaussian(z, gain: float) -> tuple[np.ndarray, np.ndarray]:
    """Map signed reals to a (positive, negative) pair of 10-bit counts."""
    mag = np.clip(np.rint(gain * np.abs(z)), 0, INPUT_MAX).astype(np.int64)
    pos = np.asarray(z) >= 0
    return np.where(pos, mag, 0), np.where(pos, 0, mag)


def gen_stimulus(n: int = 10_000, seed: int = 42, gain: float = DEFAULT_GAIN,
                 shift: int = DEFAULT_SHIFT,
                 offset_range: tuple[int, int] = DEFAULT_OFFSET_RANGE) -> Stimulus:
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not gain > 0:
        raise ParameterError("gain must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    in_p, in_n = split_gaussian(z, gain)
    sp = rng.uniform(SCALE_MIN, SCALE_MAX, n)
    sn = rng.uniform(SCALE_MIN, SCALE_MAX, n)
    off = rng.integers(offset_range[0], offset_range[1], endpoint=True, size=n).astype(np.float64)
    return Stimulus(in_p, in_n, sp, sn, np.full(n, shift, dtype=np.int64), off, seed, gain)


def grid_stimulus(scale_p: float, scale_n: float, shift: int, offset: float) -> Stimulus:
    """Every (in_p, in_n) pair in the 1024 x 1024 input space at one config."""
    ip, in_ = np.meshgrid(np.arange(INPUT_MAX + 1), np.arange(INPUT_MAX + 1), indexing="ij")
    n = ip.size
    return Stimulus(ip.ravel(), in_.ravel(), np.full(n, float(scale_p)), np.full(n, float(scale_n)),
                    np.full(n, shift, dtype=np.int64), np.full(n, float(offset)))


def q_err(hw, baseline):
    """Absolute quantization error ``|hw - baseline|``."""
    e = np.abs(np.asarray(hw, dtype=np.float64) - np.asarray(baseline, dtype=np.float64))
    return e if np.ndim(e) else float(e)


def l2_err(a, b) -> float:
    """Root-mean-square difference."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def q_err_rel(impl_err: float, hw_op_err: float) -> float:
    """Relative excess of an implementation's RMS error over the hardware-operation RMS error."""
    if not hw_op_err > 0:
        raise DomainError("hw_op_err must be positive")
    return (impl_err - hw_op_err) / hw_op_err


def _half(x):
    return np.asarray(x, dtype=np.float16)


def fp16_baseline(in_p, in_n, params: RealParams):
    """Behavioral FP16 periphery: every operand and intermediate in binary16.

    The final value is rounded to nearest-even and saturated to int8.
    """
    p = _half(in_p) * _half(params.scale_p)
    q = _half(in_n) * _half(params.scale_n)
    v = (p - q) + _half(params.offset)
    if params.relu:
        v = np.maximum(v, np.float16(0))
    out = np.clip(np.rint(v.astype(np.float64)), OUT_MIN, OUT_MAX).astype(np.int64)
    return out if np.ndim(out) else int(out)


def integer_baseline(real, mode: str = "floor"):
    """Turn the float baseline into the comparison target.

    ``floor``: the int8 output a software model produces by truncating the
    float result and saturating.  ``real``: the float value itself, only
    saturated to the int8 range.
    """
    if mode == "floor":
        return np.clip(np.floor(real), OUT_MIN, OUT_MAX)
    if mode == "real":
        return np.clip(real, OUT_MIN, OUT_MAX)
    raise ParameterError(f"unknown baseline mode {mode!r}")


@dataclass
class ArchStats:
    id: str
    first_stage: str
    second_stage: str
    n: int
    frac_ge_half: float
    mean_q_err: float
    l2_err: float
    max_q_err: float
    overflow_frac: float
    histogram: list[int]
    label: str = ""

    def as_row(self) -> dict:
        return {
            "id": self.id, "label": self.label, "first_stage": self.first_stage,
            "second_stage": self.second_stage, "n": self.n,
            "frac_ge_half": self.frac_ge_half, "mean_q_err": self.mean_q_err,
            "l2_err": self.l2_err, "max_q_err": self.max_q_err,
            "overflow_frac": self.overflow_frac,
        }


def error_stats(id_: str, first: str, second: str, hw, baseline, overflow=None) -> ArchStats:
    e = q_err(hw, baseline)
    hist, _ = np.histogram(e, bins=HIST_EDGES)
    n = int(e.size)
    return ArchStats(
        id_, first, second, n,
        float(np.count_nonzero(e >= 0.5) / n),
        float(e.mean()),
        l2_err(hw, baseline),
        float(e.max()),
        0.0 if overflow is None else float(np.count_nonzero(overflow) / n),
        [int(h) for h in hist],
    )


@dataclass
class ErrorReport:
    rows: dict[str, ArchStats]
    ranking: list[str]
    labels: dict[str, str]
    meta: dict = field(default_factory=dict)
    fp16: ArchStats | None = None

    CSV_COLUMNS = ("id", "label", "first_stage", "second_stage", "n", "frac_ge_half",
                   "mean_q_err", "l2_err", "max_q_err", "overflow_frac")

    def __getitem__(self, arch_id: str) -> ArchStats:
        return self.rows[arch_id]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        extra = [self.fp16] if self.fp16 is not None else []
        for st in [self.rows[k] for k in self.ranking] + extra:
            row = st.as_row()
            for k in ("frac_ge_half", "mean_q_err", "l2_err", "max_q_err", "overflow_frac"):
                row[k] = f"{row[k]:.6f}"
            w.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        rows = {}
        for k in self.ranking:
            st = self.rows[k]
            rows[k] = dict(st.as_row(), histogram=st.histogram)
        out = {"meta": self.meta, "histogram_edges": [float(x) for x in HIST_EDGES[:-1]] + ["inf"],
               "ranking": self.ranking, "labels": self.labels, "architectures": rows}
        if self.fp16 is not None:
            out["fp16"] = dict(self.fp16.as_row(), histogram=self.fp16.histogram)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def histogram_csv(self, arch_id: str) -> str:
        st = self.fp16 if arch_id == "FP16" else self.rows[arch_id]
        lines = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(HIST_EDGES[:-1], HIST_EDGES[1:], st.histogram):
            lines.append(f"{lo:g},{hi:g},{c}")
        return "\n".join(lines) + "\n"


def assign_labels(rows: dict[str, ArchStats]) -> tuple[list[str], dict[str, str]]:
    """Rank by frac_ge_half (ties by mean error, then id) and pick A..E.

    A and B are the two best; C, D, E are the worst architecture for second
    stage S1, S2 and S3 respectively.
    """
    ranking = sorted(rows, key=lambda k: (rows[k].frac_ge_half, rows[k].mean_q_err, k))
    labels = {}
    for letter, k in zip("AB", ranking):
        labels[letter] = k
    for letter, stage in zip("CDE", SecondStageMethod):
        group = [k for k in ranking if rows[k].second_stage == stage.value]
        if group:
            labels[letter] = group[-1]
    for letter, k in labels.items():
        rows[k].label = (rows[k].label + letter) if rows[k].label else letter
    return ranking, labels


def explore(stimulus: Stimulus, architectures=ALL_ARCHITECTURES, *, relu: bool = True,
            baseline: str = "floor", include_fp16: bool = True,
            max_workers: int = 1) -> ErrorReport:
    """Run every architecture over ``stimulus`` and aggregate error statistics.

    The hardware path uses parameters quantized to Qu(1,7)/Qs(7,1); the
    baseline uses the unquantized real parameters.
    """
    if stimulus.n < 1:
        raise ParameterError("empty stimulus")
    archs = [a if isinstance(a, Architecture) else Architecture.parse(a) for a in architectures]
    if not archs:
        raise ParameterError("no architectures requested")
    params = stimulus.real_params(relu)
    spr, snr, shift, offr = quantize_arrays(params.scale_p, params.scale_n, params.offset)
    target = integer_baseline(nmpu_reference(stimulus.in_p, stimulus.in_n, params), baseline)

    def run(arch: Architecture) -> ArchStats:
        hw, over = nmpu_process_array(stimulus.in_p, stimulus.in_n, spr, snr, shift, offr,
                                      arch.first_stage, arch.second_stage, relu)
        return error_stats(arch.id, arch.first_stage.value, arch.second_stage.value,
                           hw, target, over)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            stats = list(pool.map(run, archs))
    else:
        stats = [run(a) for a in archs]
    rows = {s.id: s for s in stats}
    ranking, labels = assign_labels(rows)
    fp16 = None
    if include_fp16:
        fp16 = error_stats("FP16", "fp16", "fp16",
                           fp16_baseline(stimulus.in_p, stimulus.in_n, params), target)
    meta = {"n": stimulus.n, "seed": stimulus.seed, "gain": stimulus.gain,
            "relu": relu, "baseline": baseline}
    return ErrorReport(rows, ranking, labels, meta, fp16)


def gain_sweep(gains=(128.0, 256.0, 512.0), n: int = 10_000, seed: int = 42,
               architectures=ALL_ARCHITECTURES, **kw) -> dict[float, dict[str, float]]:
    """frac(Q_err >= 0.5) per architecture for several stimulus gains."""
    out = {}
    for g in gains:
        rep = explore(gen_stimulus(n, seed, g), architectures, include_fp16=False, **kw)
        out[float(g)] = {k: rep.rows[k].frac_ge_half for k in rep.ranking}
    return out
