"""Synthetic ADC transfer-curve population and affine calibration.

Curves are sampled on a uniform grid of normalized bit-line currents in
[0, 1].  The shared nonlinear base curve is a cubic perturbation of a line;
each ADC applies its own gain and count offset on top.  This is a synthetic
stand-in for measured chip curves, parameterized so the population spread
(coefficient of variation) and the fitted scale range can be set.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .datapath import QuantizedParams, quantize_params
from .errors import ParameterError, ShapeError, SingularFit

FULL_SCALE = 1023
DEFAULT_LEVELS = 256
CV_MIN_MEAN = 32.0
GAIN_TRUNCATION = 2.0


@dataclass(frozen=True)
class AdcCurve:
    levels: np.ndarray
    counts: np.ndarray
    gain_jitter: float = 0.0
    offset_jitter: float = 0.0
    nonlinearity: float = 0.0

    def __post_init__(self):
        if self.levels.shape != self.counts.shape or self.levels.ndim != 1:
            raise ShapeError("levels and counts must be 1-D arrays of equal length")
        if np.any(np.diff(self.counts) < 0):
            raise ParameterError("transfer curve must be monotone non-decreasing")
        if self.counts.min() < 0 or self.counts.max() > FULL_SCALE:
            raise ParameterError("counts must lie in [0, 1023]")


def base_curve(levels, nonlinearity: float) -> np.ndarray:
    x = np.asarray(levels, dtype=np.float64)
    g = FULL_SCALE * (x + nonlinearity * x * (1 - x) * (x - 0.5))
    return np.maximum.accumulate(np.clip(g, 0, None))


def linear_curve(n_levels: int = DEFAULT_LEVELS) -> AdcCurve:
    """Ideal converter: ``count = 1023 * current`` (unrounded samples)."""
    x = np.linspace(0.0, 1.0, n_levels)
    return AdcCurve(x, FULL_SCALE * x)


def gen_adc_population(n: int = 256, cv_target: float = 0.07, nonlinearity: float = 0.3,
                       seed: int = 7, offset_sigma: float = 4.0,
                       n_levels: int = DEFAULT_LEVELS) -> list[AdcCurve]:
    """Draw ``n`` ADC curves: ``round(g(x) * (1 + dg) + do)`` clipped to 10 bits.

    ``dg`` is a zero-mean Gaussian truncated at +-2 sigma, rescaled so its
    standard deviation is ``cv_target``; ``do ~ N(0, offset_sigma)``.  Samples clipped at 0 or 1023 stay clipped.
    """
    if n < 2:
        raise ParameterError("population needs at least two ADCs")
    if not 0 <= cv_target <= 0.2:
        raise ParameterError("cv_target must lie in [0, 0.2]")
    if n_levels < 2 or offset_sigma < 0:
        raise ParameterError("need >= 2 levels and non-negative offset_sigma")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n_levels)
    g = base_curve(x, nonlinearity)
    dg = _truncated_normal(rng, cv_target, n, GAIN_TRUNCATION)
    do = rng.normal(0.0, offset_sigma, n) if offset_sigma > 0 else np.zeros(n)
    curves = []
    for i in range(n):
        c = np.clip(np.rint(g * (1 + dg[i]) + do[i]), 0, FULL_SCALE)
        curves.append(AdcCurve(x, np.maximum.accumulate(c), float(dg[i]), float(do[i]), nonlinearity))
    return curves


def _truncated_std_factor(k: float) -> float:
    """std of N(0, 1) truncated to [-k, k]."""
    pdf = math.exp(-k * k / 2) / math.sqrt(2 * math.pi)
    return math.sqrt(1 - 2 * k * pdf / math.erf(k / math.sqrt(2)))


def _truncated_normal(rng, std: float, n: int, k: float) -> np.ndarray:
    """Zero-mean draws with standard deviation ``std`` and support +-k*sigma."""
    if std == 0:
        return np.zeros(n)
    sigma = std / _truncated_std_factor(k)
    out = np.empty(0)
    while out.size < n:
        d = rng.normal(0.0, sigma, n)
        out = np.concatenate([out, d[np.abs(d) <= k * sigma]])
    return out[:n]


def count_matrix(population) -> np.ndarray:
    """Stack curve samples into an ``(n_adcs, n_levels)`` array."""
    levels = population[0].levels
    for c in population:
        if c.levels.shape != levels.shape or not np.array_equal(c.levels, levels):
            raise ShapeError("all curves must share the same level grid")
    return np.stack([c.counts for c in population]).astype(np.float64)


def convert(curve: AdcCurve, current):
    """Digitize a normalized current (scalar or array) through ``curve``."""
    i = np.clip(np.asarray(current, dtype=np.float64), 0.0, 1.0)
    c = np.clip(np.rint(np.interp(i, curve.levels, curve.counts)), 0, FULL_SCALE).astype(np.int64)
    return c if c.ndim else int(c)


@dataclass(frozen=True)
class AffineParams:
    scale_aff: float
    offset_aff: float
    quantized: QuantizedParams

    def apply(self, counts, quantized: bool = False):
        if quantized:
            q = self.quantized
            return np.asarray(counts, dtype=np.float64) * q.scale + float(q.offset_fx)
        return np.asarray(counts, dtype=np.float64) * self.scale_aff + self.offset_aff

    def to_dict(self) -> dict:
        q = self.quantized
        return {"scale_aff": self.scale_aff, "offset_aff": self.offset_aff,
                "scale_raw": q.scale_fx.raw, "shift": q.shift, "offset_raw": q.offset_fx.raw,
                "scale_q": q.scale, "offset_q": float(q.offset_fx)}


def calibrate_affine(population, target=None) -> list[AffineParams]:
    """Least-squares ``(scale, offset)`` per ADC mapping its counts onto the mean curve.

    All levels are weighted equally.  ``target`` overrides the population
    mean as the reference curve.
    """
    if len(population) < 2 and target is None:
        raise ParameterError("calibration needs at least two curves")
    m = count_matrix(population)
    ref = m.mean(axis=0) if target is None else np.asarray(target, dtype=np.float64)
    out = []
    for i, row in enumerate(m):
        ok = (row > 0) & (row < FULL_SCALE)
        if np.count_nonzero(ok) < 2:
            ok = np.ones_like(row, dtype=bool)
        x, y = row[ok], ref[ok]
        xc = x - x.mean()
        sxx = float(xc @ xc)
        if sxx == 0:
            raise SingularFit(f"ADC {i} has a constant transfer curve")
        scale = float(xc @ (y - y.mean())) / sxx
        offset = float(y.mean() - scale * x.mean())
        out.append(AffineParams(scale, offset, quantize_params(scale, offset)))
    return out


@dataclass(frozen=True)
class CvProfile:
    mean: np.ndarray
    std: np.ndarray
    cv: np.ndarray
    aggregate: float
    used_levels: np.ndarray


def compute_cv(population, correction=None, quantized: bool = False,
               min_mean: float = CV_MIN_MEAN) -> CvProfile:
    """Per-level coefficient of variation across the population.

    The aggregate is the mean per-level CV over levels whose mean count is at
    least ``min_mean``.
    """
    m = count_matrix(population)
    if correction is not None:
        if len(correction) != len(m):
            raise ShapeError("one AffineParams per ADC is required")
        m = np.stack([p.apply(row, quantized) for p, row in zip(correction, m)])
    mean = m.mean(axis=0)
    std = m.std(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean > 0, std / mean, np.nan)
    used = mean >= min_mean
    agg = float(np.mean(cv[used])) if np.any(used) else float("nan")
    return CvProfile(mean, std, cv, agg, used)


def population_csv(population) -> str:
    """``level,adc0,adc1,...`` rows; counts written as integers when integral."""
    m = count_matrix(population)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level"] + [f"adc{i}" for i in range(len(population))])
    integral = np.all(m == np.rint(m))
    for j, lv in enumerate(population[0].levels):
        col = m[:, j]
        vals = [str(int(v)) for v in col] if integral else [repr(float(v)) for v in col]
        w.writerow([f"{lv:.6f}"] + vals)
    return buf.getvalue()


def calibration_json(params: list[AffineParams]) -> str:
    return json.dumps([p.to_dict() for p in params], indent=2, sort_keys=True) + "\n"
