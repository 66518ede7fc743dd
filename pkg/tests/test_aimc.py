import numpy as np
import pytest

from nmpu import toy
from nmpu.adc import linear_curve
from nmpu.aimc import (
    FP16, FP32, LayerSpec, NetworkCalibration, Periphery, PeripheryKind, accuracy,
    apply_periphery, calibrate_network, check_chain, compare_peripheries, forward,
    input_codes, layer_relative_errors, map_network, mvm, program_weights,
    reference_forward, run_network, software_forward, tile_forward,
)
from nmpu.datapath import BatchNorm, RealParams
from nmpu.errors import ParameterError, ShapeError

BEST = Periphery.parse("nmpu:best")


@pytest.fixture(scope="module")
def task():
    layers, X, y = toy.load_toy_task()
    return layers, X[:600], y[:600]


def identity_layer(n=8, relu=True, bn=None):
    layer = LayerSpec(np.eye(n), None, bn, relu)
    calib = NetworkCalibration((1.0,), (1.0,), (1023.0,))
    return layer, calib


# --- tiles and MVM -------------------------------------------------------------

def test_program_weights_exact_without_noise():
    w = np.random.default_rng(0).normal(size=(16, 8))
    t = program_weights(w)
    assert np.allclose(t.effective_weights(), w, rtol=0, atol=1e-12)
    assert t.weights_pos.max() <= 1 and t.weights_neg.max() <= 1


def test_program_identity():
    t = program_weights(np.eye(5))
    assert np.array_equal(t.weights_pos, np.eye(5))
    assert not t.weights_neg.any()


def test_program_noise_level():
    w = np.random.default_rng(1).normal(size=(64, 64))
    clean, noisy = program_weights(w), program_weights(w, 0.05, seed=3)
    g = np.concatenate([clean.weights_pos.ravel(), clean.weights_neg.ravel()])
    gn = np.concatenate([noisy.weights_pos.ravel(), noisy.weights_neg.ravel()])
    rel = np.sqrt(np.mean((gn - g) ** 2) / np.mean(g ** 2))
    assert abs(rel - 0.05) / 0.05 < 0.2
    assert gn.min() >= 0 and gn.max() <= 1


def test_program_errors():
    with pytest.raises(ShapeError):
        program_weights(np.ones(4))
    with pytest.raises(ParameterError):
        program_weights(np.array([[np.nan]]))


def test_mvm_zero_input():
    t = program_weights(np.random.default_rng(2).normal(size=(6, 4)))
    adcs = [linear_curve()] * 4
    cp, cn = mvm(t, np.zeros(6, dtype=np.int64), adcs, 1000.0)
    assert not cp.any() and not cn.any()


def test_mvm_single_row_proportional():
    w = np.array([[0.25, -0.5, 1.0], [0.3, 0.3, 0.3]])
    t = program_weights(w)
    cp, cn = mvm(t, np.array([1000, 0]), [linear_curve()] * 3, 1023.0)
    assert cp.tolist() == [250, 0, 1000]
    assert cn.tolist() == [0, 500, 0]


def test_mvm_shape_error():
    t = program_weights(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        mvm(t, np.zeros(4), [linear_curve()] * 2, 1.0)


# --- peripheries -------------------------------------------------------------------

def test_periphery_parse():
    assert Periphery.parse("fp32") == FP32
    assert Periphery.parse("FP16") == FP16
    assert BEST.kind is PeripheryKind.NMPU and BEST.arch.id == "M4-S1"
    assert Periphery.parse("nmpu:m1-s3").name == "nmpu:M1-S3"
    for bad in ("fp8", "fp32:M1-S1", "nmpu:M9-S1"):
        with pytest.raises(ParameterError):
            Periphery.parse(bad)


def test_identity_layer_passes_clamped_input():
    layer, calib = identity_layer()
    mapped = map_network([layer], calib)
    x = np.array([[0, 1, 50, 126, 127, 128, 600, 1023]])
    for p in (FP32, FP16, BEST):
        assert tile_forward(mapped[0], x, p).tolist() == [[0, 1, 50, 126, 127, 127, 127, 127]]


def test_identity_bn_is_noop():
    rng = np.random.default_rng(4)
    x = rng.integers(0, 300, (20, 8))
    plain, calib = identity_layer()
    with_bn, _ = identity_layer(bn=BatchNorm(1.0, 0.0, 0.0, 1.0, 0.0))
    for p in (FP32, BEST):
        a = tile_forward(map_network([plain], calib)[0], x, p)
        b = tile_forward(map_network([with_bn], calib)[0], x, p)
        assert np.array_equal(a, b)


def test_bn_layer_matches_float_fold():
    # BN folded into the periphery equals BN applied after the affine map
    bn = BatchNorm(np.full(8, 2.0), np.full(8, 3.0), np.full(8, 10.0), np.full(8, 4.0), 0.0)
    layer, calib = identity_layer(relu=False, bn=bn)
    x = np.arange(0, 80, 10)[None, :]
    out = tile_forward(map_network([layer], calib)[0], x, FP32)
    expect = np.clip(np.floor(2.0 * (x - 10.0) / 2.0 + 3.0 + 0.5), -128, 127)
    assert np.array_equal(out, expect)


def test_drift_compensation_within_one_count(task):
    layers, X, _ = task
    calib = calibrate_network(layers, X)
    codes = input_codes(X, calib)
    base = map_network(layers[:1], calib)
    drift = map_network(layers[:1], calib, drift_factor=0.9)
    a = tile_forward(base[0], codes, FP32)
    b = tile_forward(drift[0], codes, FP32)
    assert np.max(np.abs(a - b)) <= 1


def test_apply_periphery_agreement():
    rng = np.random.default_rng(5)
    cp, cn = rng.integers(0, 1024, (200, 16)), rng.integers(0, 1024, (200, 16))
    params = RealParams(np.full(16, 0.12), np.full(16, 0.12), np.zeros(16), True)
    a = apply_periphery(cp, cn, params, FP32)
    b = apply_periphery(cp, cn, params, BEST)
    assert np.mean(a != b) < 0.35
    assert np.max(np.abs(a - b)) <= 1


# --- network ----------------------------------------------------------------------

def test_check_chain():
    with pytest.raises(ShapeError):
        check_chain([LayerSpec(np.ones((4, 3))), LayerSpec(np.ones((2, 2)))])
    with pytest.raises(ParameterError):
        check_chain([])


def test_calibration_rejects_negative_features(task):
    layers, X, _ = task
    with pytest.raises(ParameterError):
        calibrate_network(layers, -X)


def test_ideal_tile_equals_quantized_reference(task):
    layers, X, y = task
    calib = calibrate_network(layers, X)
    codes = input_codes(X, calib)
    sim = forward(map_network(layers, calib), codes, FP32)
    ref = reference_forward(layers, codes, calib)
    assert np.array_equal(sim, ref)
    assert run_network(layers, X, y, "fp32", calib) == accuracy(ref, y)


def test_software_accuracy(task):
    layers, X, y = task
    assert accuracy(software_forward(layers, X), y) >= 0.95


def test_network_accuracy_and_drop(task):
    layers, X, y = task
    fp32 = run_network(layers, X, y, FP32)
    best = run_network(layers, X, y, BEST)
    assert fp32 >= 0.95
    assert fp32 - best <= 0.01


def test_run_network_empty():
    layer, _ = identity_layer()
    with pytest.raises(ParameterError):
        run_network([layer], np.zeros((0, 8)), np.zeros(0), FP32)


def test_compare_peripheries_deterministic(task):
    layers, X, y = task
    kw = dict(noise_sigma=0.05, adc="synthetic")
    a = compare_peripheries(layers, X, y, ["fp32", "nmpu:best"], reps=2, seed=9, **kw)
    b = compare_peripheries(layers, X, y, ["fp32", "nmpu:best"], reps=2, seed=9, **kw)
    assert {k: v.accuracies for k, v in a.items()} == {k: v.accuracies for k, v in b.items()}
    assert len(a["fp32"].accuracies) == 2


def test_layer_relative_errors(task):
    layers, X, _ = task
    calib = calibrate_network(layers, X)
    mapped = map_network(layers, calib)
    h1 = np.clip(forward(mapped[:1], input_codes(X, calib), FP32), 0, 127)
    errs = layer_relative_errors(mapped, 1, h1)
    assert set(errs) == {"hw_op_err", "fp16", "nmpu:M4-S1"}
    assert errs["hw_op_err"] > 0
    for k in ("fp16", "nmpu:M4-S1"):
        assert errs[k]["impl_err"] >= 0
        assert errs[k]["q_err_rel"] > -1


def test_toy_weights_round_trip(tmp_path, task):
    layers, _, _ = task
    p = tmp_path / "w.nmt"
    toy.save_layers(p, layers)
    back = toy.load_layers(p)
    assert len(back) == len(layers) == 3
    for a, b in zip(layers, back):
        assert np.array_equal(a.weights, b.weights) and a.relu == b.relu
