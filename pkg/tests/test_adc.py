import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmpu.adc import (
    FULL_SCALE, AdcCurve, base_curve, calibrate_affine, calibration_json, compute_cv,
    convert, count_matrix, gen_adc_population, linear_curve, population_csv,
)
from nmpu.datapath import SCALE_FMT
from nmpu.errors import ParameterError, ShapeError, SingularFit


@pytest.fixture(scope="module")
def population():
    return gen_adc_population(256, 0.07, 0.3, 7)


@pytest.fixture(scope="module")
def calibration(population):
    return calibrate_affine(population)


def test_generator_validation():
    with pytest.raises(ParameterError):
        gen_adc_population(1)
    with pytest.raises(ParameterError):
        gen_adc_population(4, cv_target=0.3)


def test_curves_monotone_in_range(population):
    assert len(population) == 256
    for c in population:
        assert np.all(np.diff(c.counts) >= 0)
        assert c.counts.min() >= 0 and c.counts.max() <= FULL_SCALE


def test_curve_validation():
    x = np.linspace(0, 1, 4)
    with pytest.raises(ParameterError):
        AdcCurve(x, np.array([0, 5, 3, 9.0]))
    with pytest.raises(ShapeError):
        AdcCurve(x, np.zeros(3))


def test_population_cv_near_target(population):
    assert 0.06 <= compute_cv(population).aggregate <= 0.08


def test_gain_jitter_spread(population):
    dg = np.array([c.gain_jitter for c in population])
    assert abs(dg.std() - 0.07) / 0.07 < 0.15


def test_zero_cv_identical_up_to_offset():
    pop = gen_adc_population(8, 0.0, 0.3, 1, offset_sigma=0.0)
    m = count_matrix(pop)
    assert np.all(m == m[0])
    pop = gen_adc_population(8, 0.0, 0.3, 1)
    base = base_curve(pop[0].levels, 0.3)
    for c in pop:
        inner = (c.counts > 0) & (c.counts < FULL_SCALE)
        assert np.all(np.abs(c.counts[inner] - np.rint(base[inner] + c.offset_jitter)) <= 1)


def test_linear_base_calibrates_exactly():
    pop = gen_adc_population(16, 0.05, 0.0, 3, offset_sigma=0.0)
    cal = calibrate_affine(pop)
    after = compute_cv(pop, cal)
    assert after.aggregate < 2e-3  # only count rounding remains


def test_fitted_scales_in_range(calibration):
    s = np.array([p.scale_aff for p in calibration])
    assert s.min() >= 0.85 and s.max() <= 1.20


def test_identical_curves_identity_fit():
    c = linear_curve()
    cal = calibrate_affine([c, c, c])
    for p in cal:
        assert p.scale_aff == pytest.approx(1.0, abs=1e-12)
        assert p.offset_aff == pytest.approx(0.0, abs=1e-9)


def test_proportional_curve_fit():
    x = np.linspace(0, 1, 64)
    mean = 700 * x + 10
    c = AdcCurve(x, mean * 1.1)
    (p,) = calibrate_affine([c], target=mean)
    assert p.scale_aff == pytest.approx(1 / 1.1, abs=1e-9)
    assert p.offset_aff == pytest.approx(0.0, abs=1e-9)


def test_singular_fit():
    x = np.linspace(0, 1, 8)
    flat = AdcCurve(x, np.full(8, 100.0))
    with pytest.raises(SingularFit):
        calibrate_affine([flat, linear_curve(8)])


def test_correction_reduces_cv(population, calibration):
    before = compute_cv(population).aggregate
    real = compute_cv(population, calibration).aggregate
    quant = compute_cv(population, calibration, quantized=True).aggregate
    assert real <= 0.01 and real <= before
    assert quant <= 0.015 and quant <= 1.5 * real + 1e-3


@settings(max_examples=15)
@given(st.integers(2, 24), st.floats(0, 0.2), st.floats(0, 0.5), st.integers(0, 1000))
def test_correction_never_increases_cv(n, cv, nl, seed):
    pop = gen_adc_population(n, cv, nl, seed)
    assert compute_cv(pop, calibrate_affine(pop)).aggregate <= compute_cv(pop).aggregate + 1e-12


def test_scales_representable_after_shift(calibration):
    for p in calibration:
        q = p.quantized
        assert 0 <= q.scale_fx.raw <= SCALE_FMT.raw_max
        assert abs(q.scale - p.scale_aff) <= 2 ** -8 / 2 ** q.shift
        assert abs(float(q.offset_fx) - p.offset_aff) <= 0.25


def test_quantization_shift_bounded_per_adc(population, calibration):
    m = count_matrix(population)
    for p, row in zip(calibration, m):
        q = p.quantized
        bound = abs(q.scale - p.scale_aff) * row.max() + abs(float(q.offset_fx) - p.offset_aff)
        diff = np.abs(p.apply(row, True) - p.apply(row, False))
        assert np.all(diff <= bound + 1e-9)
        assert bound <= 0.5 * 1023 / 128 + 0.25


def test_convert():
    lin = linear_curve()
    assert convert(lin, 0.0) == 0
    assert abs(convert(lin, 0.5) - 512) <= 1
    cur = np.linspace(0, 1, 101)
    out = convert(lin, cur)
    assert np.all(np.diff(out) >= 0)
    pop = gen_adc_population(3, 0.07, 0.3, 2)
    assert convert(pop[0], 0.0) == int(pop[0].counts[0])


def test_exports(population, calibration):
    text = population_csv(population[:3])
    lines = text.splitlines()
    assert lines[0] == "level,adc0,adc1,adc2"
    assert len(lines) == 1 + len(population[0].levels)
    d = json.loads(calibration_json(calibration[:2]))
    assert set(d[0]) == {"scale_aff", "offset_aff", "scale_raw", "shift", "offset_raw",
                         "scale_q", "offset_q"}


def test_population_determinism():
    a = count_matrix(gen_adc_population(10, seed=5))
    b = count_matrix(gen_adc_population(10, seed=5))
    assert np.array_equal(a, b)
