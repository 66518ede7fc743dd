"""Toy-scale AIMC tile and multi-layer inference harness.

Weights are split into positive and negative conductance arrays scaled so
``max|w|`` maps to conductance 1.  Programming noise is multiplicative
Gaussian per device; drift is one global factor.  Each column owns one ADC
which digitizes both the positive and the negative partial sum, and the
digital periphery turns the two counts into an 8-bit activation.

The device model here is a simple stand-in: Gaussian conductance noise and
a global drift scalar, not a measured chip model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import adc as adc_model
from .datapath import (
    OUT_MAX,
    OUT_MIN,
    BatchNorm,
    RealParams,
    fold_bn,
    nmpu_process_array,
    nmpu_reference,
    quantize_arrays,
)
from .dse import Architecture, fp16_baseline, l2_err, q_err_rel
from .errors import ParameterError, ShapeError

CODE_MAX = 1023
ACT_MAX = OUT_MAX
MAX_DIM = 256
DEFAULT_BEST = "M4-S1"


@dataclass(frozen=True)
class Tile:
    weights_pos: np.ndarray
    weights_neg: np.ndarray
    w_max: float = 1.0
    noise_sigma: float = 0.0
    drift_factor: float = 1.0

    def __post_init__(self):
        if self.weights_pos.shape != self.weights_neg.shape or self.weights_pos.ndim != 2:
            raise ShapeError("positive and negative conductance arrays must match")
        r, c = self.weights_pos.shape
        if r > MAX_DIM or c > MAX_DIM:
            raise ShapeError(f"tile is limited to {MAX_DIM}x{MAX_DIM}")
        for g in (self.weights_pos, self.weights_neg):
            if g.size and (g.min() < 0 or g.max() > 1):
                raise ParameterError("conductances must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights_pos.shape

    def effective_weights(self) -> np.ndarray:
        """Weights the tile actually implements (noise included, drift excluded)."""
        return self.w_max * (self.weights_pos - self.weights_neg)

    def with_drift(self, drift_factor: float) -> "Tile":
        return Tile(self.weights_pos, self.weights_neg, self.w_max, self.noise_sigma, drift_factor)


def program_weights(w, noise_sigma: float = 0.0, seed=0, drift_factor: float = 1.0) -> Tile:
    """Map a real ``(rows, cols)`` weight matrix onto a differential tile."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError("weights must be a 2-D (rows, cols) matrix")
    if not np.all(np.isfinite(w)):
        raise ParameterError("weights must be finite")
    w_max = float(np.abs(w).max()) or 1.0
    gp = np.clip(w, 0, None) / w_max
    gn = np.clip(-w, 0, None) / w_max
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        gp = np.clip(gp * (1 + rng.normal(0, noise_sigma, gp.shape)), 0, 1)
        gn = np.clip(gn * (1 + rng.normal(0, noise_sigma, gn.shape)), 0, 1)
    return Tile(gp, gn, w_max, float(noise_sigma), float(drift_factor))


def mvm(tile: Tile, x, adcs, full_scale: float):
    """Analog MVM plus conversion.

    ``x`` holds 10-bit input codes, shape ``(rows,)`` or ``(batch, rows)``.
    Partial sums ``sum_r x_r * g_rc * drift`` are divided by ``full_scale`` to
    give a normalized current, then digitized by column ``c``'s ADC.  Returns
    ``(count_p, count_n)`` int64 arrays.
    """
    x = np.asarray(x)
    rows, cols = tile.shape
    if x.shape[-1] != rows:
        raise ShapeError(f"input length {x.shape[-1]} does not match {rows} tile rows")
    if len(adcs) < cols:
        raise ShapeError(f"{cols} columns need {cols} ADCs, got {len(adcs)}")
    xf = x.astype(np.float64)
    ip = (xf @ tile.weights_pos) * (tile.drift_factor / full_scale)
    in_ = (xf @ tile.weights_neg) * (tile.drift_factor / full_scale)
    cp = np.empty(ip.shape, dtype=np.int64)
    cn = np.empty(in_.shape, dtype=np.int64)
    for c in range(cols):
        cp[..., c] = adc_model.convert(adcs[c], ip[..., c])
        cn[..., c] = adc_model.convert(adcs[c], in_[..., c])
    return cp, cn


class PeripheryKind(enum.Enum):
    FP32 = "fp32"
    FP16 = "fp16"
    NMPU = "nmpu"


@dataclass(frozen=True)
class Periphery:
    kind: PeripheryKind
    arch: Architecture | None = None

    @classmethod
    def parse(cls, text: str) -> "Periphery":
        """``fp32``, ``fp16``, ``nmpu`` / ``nmpu:best`` or ``nmpu:M4-S1``."""
        head, _, tail = text.strip().lower().partition(":")
        try:
            kind = PeripheryKind(head)
        except ValueError as exc:
            raise ParameterError(f"unknown periphery {text!r}") from exc
        if kind is not PeripheryKind.NMPU:
            if tail:
                raise ParameterError(f"{head} takes no architecture")
            return cls(kind)
        arch = Architecture.parse(DEFAULT_BEST if tail in ("", "best") else tail)
        return cls(kind, arch)

    @property
    def name(self) -> str:
        return self.kind.value if self.arch is None else f"nmpu:{self.arch.id}"


FP32 = Periphery(PeripheryKind.FP32)
FP16 = Periphery(PeripheryKind.FP16)


def round_saturate(v):
    return np.clip(np.floor(np.asarray(v) + 0.5), OUT_MIN, OUT_MAX).astype(np.int64)


def apply_periphery(cp, cn, params: RealParams, periphery: Periphery):
    """Turn differential counts into int8 activations with per-column parameters."""
    if periphery.kind is PeripheryKind.FP32:
        return round_saturate(nmpu_reference(cp, cn, params))
    if periphery.kind is PeripheryKind.FP16:
        return fp16_baseline(cp, cn, params)
    spr, snr, shift, offr = quantize_arrays(params.scale_p, params.scale_n, params.offset)
    out, _ = nmpu_process_array(cp, cn, spr, snr, shift, offr, periphery.arch.first_stage,
                                periphery.arch.second_stage, params.relu)
    return out


@dataclass(frozen=True)
class LayerSpec:
    """Dense layer ``y = x @ weights + bias`` then optional BN and ReLU."""

    weights: np.ndarray
    bias: np.ndarray | None = None
    bn: BatchNorm | None = None
    relu: bool = True

    def __post_init__(self):
        if np.ndim(self.weights) != 2:
            raise ShapeError("layer weights must be 2-D")
        if self.bias is not None and np.shape(self.bias) != (self.out_dim,):
            raise ShapeError("bias length must equal the output dimension")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def float_forward(self, a):
        z = np.asarray(a, dtype=np.float64) @ self.weights
        if self.bias is not None:
            z = z + self.bias
        if self.bn is not None:
            z = self.bn.gamma * (z - self.bn.mean) / np.sqrt(self.bn.var + self.bn.eps) + self.bn.beta
        return np.maximum(z, 0) if self.relu else z


def check_chain(layers) -> None:
    if not layers:
        raise ParameterError("network has no layers")
    for a, b in zip(layers, layers[1:]):
        if a.out_dim != b.in_dim:
            raise ShapeError(f"layer output {a.out_dim} does not feed input {b.in_dim}")


@dataclass(frozen=True)
class NetworkCalibration:
    """Activation scales (real value per code) and ADC full-scale sums per layer."""

    act_in: tuple[float, ...]
    act_out: tuple[float, ...]
    full_scale: tuple[float, ...]


def calibrate_network(layers, X, headroom: float = 1.05) -> NetworkCalibration:
    """Pick activation and current scales from a float pass over ``X``.

    Features must be non-negative (10-bit unsigned input codes).
    """
    check_chain(layers)
    X = np.asarray(X, dtype=np.float64)
    if X.min() < 0:
        raise ParameterError("input features must be non-negative")
    act_in, act_out, fs = [], [], []
    a_in = (float(X.max()) or 1.0) / CODE_MAX
    codes = np.clip(np.rint(X / a_in), 0, CODE_MAX)
    for layer in layers:
        z = layer.float_forward(codes * a_in)
        a_out = (float(np.abs(z).max()) or 1.0) / ACT_MAX
        w_max = float(np.abs(layer.weights).max()) or 1.0
        sums = np.maximum(codes @ np.clip(layer.weights, 0, None),
                          codes @ np.clip(-layer.weights, 0, None)) / w_max
        fs.append(float(sums.max() * headroom) or 1.0)
        act_in.append(a_in)
        act_out.append(a_out)
        codes = np.clip(np.rint(z / a_out), 0, ACT_MAX)
        a_in = a_out
    return NetworkCalibration(tuple(act_in), tuple(act_out), tuple(fs))


@dataclass
class MappedLayer:
    spec: LayerSpec
    tile: Tile
    adcs: list
    affine: list
    act_in: float
    act_out: float
    full_scale: float
    drift_compensation: float = 1.0

    def column_params(self) -> RealParams:
        """Per-column real periphery parameters in output-code units.

        Combines the ADC affine-correction scale, the count-to-activation
        conversion, drift compensation, bias and folded batch-norm.
        """
        a = np.array([p.scale_aff for p in self.affine[: self.spec.out_dim]])
        kappa = (self.full_scale * self.act_in * self.tile.w_max
                 / (adc_model.FULL_SCALE * self.act_out * self.drift_compensation))
        scale = a * kappa
        bias = np.zeros(self.spec.out_dim) if self.spec.bias is None else self.spec.bias
        offset = bias / self.act_out
        if self.spec.bn is not None:
            bn = self.spec.bn
            bn_codes = BatchNorm(bn.gamma, np.asarray(bn.beta) / self.act_out,
                                 np.asarray(bn.mean) / self.act_out, bn.var, bn.eps)
            scale, offset = fold_bn(scale, offset, bn_codes)
            scale = np.broadcast_to(scale, (self.spec.out_dim,))
            offset = np.broadcast_to(offset, (self.spec.out_dim,))
        return RealParams(scale, scale, offset, self.spec.relu)

    def counts(self, x):
        return mvm(self.tile, x, self.adcs, self.full_scale)


def tile_forward(layer: MappedLayer, x, periphery: Periphery):
    """One layer: MVM, conversion and the selected periphery; int8 output."""
    cp, cn = layer.counts(x)
    return apply_periphery(cp, cn, layer.column_params(), periphery)


def make_adcs(n: int, kind: str, seed, cv: float = 0.07, nonlinearity: float = 0.3,
              offset_sigma: float = 4.0) -> list:
    if kind == "linear":
        c = adc_model.linear_curve()
        return [c] * n
    if kind == "synthetic":
        return adc_model.gen_adc_population(max(n, 2), cv, nonlinearity, seed, offset_sigma)
    raise ParameterError(f"unknown ADC kind {kind!r}")


def _calibrate_adcs(adcs):
    if all(c is adcs[0] for c in adcs):
        # identical curves: the affine correction is the identity
        p = adc_model.calibrate_affine([adcs[0], adcs[0]])[0]
        return [p] * len(adcs)
    return adc_model.calibrate_affine(adcs)


def map_network(layers, calib: NetworkCalibration, *, noise_sigma: float = 0.0,
                drift_factor: float = 1.0, compensate_drift: bool = True,
                adc: str = "linear", seed: int = 0, adc_cv: float = 0.07,
                adc_nonlinearity: float = 0.3, adc_offset_sigma: float = 4.0) -> list[MappedLayer]:
    """Program every layer on its own tile with its own ADC population.

    Randomness is drawn from independent streams keyed by ``(seed, layer)``.
    """
    check_chain(layers)
    mapped = []
    for i, layer in enumerate(layers):
        tile = program_weights(layer.weights, noise_sigma, [seed, i, 0], drift_factor)
        adc_seed = int(np.random.default_rng([seed, i, 1]).integers(2**31))
        adcs = make_adcs(layer.out_dim, adc, adc_seed, adc_cv, adc_nonlinearity, adc_offset_sigma)
        mapped.append(MappedLayer(layer, tile, adcs, _calibrate_adcs(adcs), calib.act_in[i],
                                  calib.act_out[i], calib.full_scale[i],
                                  drift_factor if compensate_drift else 1.0))
    return mapped


def input_codes(X, calib: NetworkCalibration):
    return np.clip(np.rint(np.asarray(X, dtype=np.float64) / calib.act_in[0]), 0, CODE_MAX).astype(np.int64)


def forward(mapped: list[MappedLayer], codes, periphery: Periphery, return_all: bool = False):
    """Chain tiles; int8 outputs are zero-extended into the next layer's codes."""
    outs = []
    x = codes
    for layer in mapped:
        y = tile_forward(layer, x, periphery)
        outs.append(y)
        x = np.clip(y, 0, ACT_MAX)
    return outs if return_all else outs[-1]


def accuracy(logits, labels) -> float:
    return float(np.mean(np.argmax(logits, axis=-1) == np.asarray(labels)))


def run_network(layers, X, y, periphery: Periphery | str, calib: NetworkCalibration | None = None,
                **map_kw) -> float:
    """Classification accuracy of the simulated network on ``(X, y)``."""
    if len(X) == 0:
        raise ParameterError("empty dataset")
    if isinstance(periphery, str):
        periphery = Periphery.parse(periphery)
    calib = calib or calibrate_network(layers, X)
    mapped = map_network(layers, calib, **map_kw)
    return accuracy(forward(mapped, input_codes(X, calib), periphery), y)


def reference_forward(layers, codes, calib: NetworkCalibration):
    """Plain quantized matrix-multiply reference with ideal converters.

    Integer activations through ``round(1023 * sum / full_scale)`` counts and
    a float periphery; no tile, ADC or noise objects involved.
    """
    x = np.asarray(codes, dtype=np.float64)
    for i, layer in enumerate(layers):
        w = np.asarray(layer.weights, dtype=np.float64)
        w_max = float(np.abs(w).max()) or 1.0
        fs = calib.full_scale[i]
        cp = np.rint(np.clip((x @ (np.clip(w, 0, None) / w_max)) / fs, 0, 1) * 1023)
        cn = np.rint(np.clip((x @ (np.clip(-w, 0, None) / w_max)) / fs, 0, 1) * 1023)
        k = fs * calib.act_in[i] * w_max / (1023 * calib.act_out[i])
        v = (cp - cn) * k
        if layer.bias is not None:
            v = v + layer.bias / calib.act_out[i]
        if layer.bn is not None:
            bn = layer.bn
            v = bn.gamma * (v - np.asarray(bn.mean) / calib.act_out[i]) / np.sqrt(bn.var + bn.eps) \
                + np.asarray(bn.beta) / calib.act_out[i]
        if layer.relu:
            v = np.maximum(v, 0)
        out = round_saturate(v)
        x = np.clip(out, 0, ACT_MAX).astype(np.float64)
    return out


def software_forward(layers, X):
    """Full-precision float forward pass (the software baseline)."""
    a = np.asarray(X, dtype=np.float64)
    for layer in layers:
        a = layer.float_forward(a)
    return a


@dataclass
class RepetitionResult:
    periphery: str
    accuracies: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def compare_peripheries(layers, X, y, peripheries, reps: int = 10, seed: int = 0,
                        calib: NetworkCalibration | None = None, **map_kw) -> dict[str, RepetitionResult]:
    """Accuracy per periphery over ``reps`` seeded device/ADC draws.

    Every periphery sees the same programmed tiles and ADCs within a
    repetition, so differences isolate the periphery.
    """
    peris = [Periphery.parse(p) if isinstance(p, str) else p for p in peripheries]
    calib = calib or calibrate_network(layers, X)
    codes = input_codes(X, calib)
    results = {p.name: RepetitionResult(p.name) for p in peris}
    for r in range(reps):
        mapped = map_network(layers, calib, seed=seed + r, **map_kw)
        for p in peris:
            results[p.name].accuracies.append(accuracy(forward(mapped, codes, p), y))
    return results


def layer_relative_errors(mapped: list[MappedLayer], layer_idx: int, codes,
                          peripheries=(FP16, Periphery.parse("nmpu:best"))) -> dict:
    """Relative quantization error of each periphery on one layer.

    The software baseline is the float layer output (in activation codes)
    computed from the same input codes; ``hw_op_err`` is the RMS error of the
    float (FP32) periphery, ``impl_err`` that of the periphery under test.
    """
    layer = mapped[layer_idx]
    spec = layer.spec
    sw = spec.float_forward(np.asarray(codes, dtype=np.float64) * layer.act_in) / layer.act_out
    cp, cn = layer.counts(codes)
    params = layer.column_params()
    hw_op = l2_err(nmpu_reference(cp, cn, params), sw)
    out = {"hw_op_err": hw_op}
    for p in peripheries:
        impl = l2_err(apply_periphery(cp, cn, params, p), sw)
        out[p.name] = {"impl_err": impl, "q_err_rel": q_err_rel(impl, hw_op) if hw_op > 0 else float("nan")}
    return out
