"""Command-line front end: ``nmpu-sim {explore,adc,simulate,perf,vectors}``.

Every command writes its artifacts into ``--out`` together with a
``manifest.json`` holding the fully resolved configuration.  Passing that
manifest back with ``--config`` reproduces the run.  Exit codes: 0 success,
2 invalid configuration, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import adc as adc_model
from . import aimc, dse, perf, toy
from .datapath import NmpuConfig, dump_config, load_config, write_vectors
from .errors import NmpuError
from .formats import atomic_write_text, read_dataset_csv

log = logging.getLogger("nmpu")


class ConfigError(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NMPU_SIM_THREADS", "1")))
    except ValueError:
        return 1


def _csv_list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _write(out: Path, name: str, text: str) -> None:
    atomic_write_text(out / name, text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_explore(a) -> int:
    if a.n < 1:
        raise ConfigError("--n must be >= 1")
    if a.gain <= 0:
        raise ConfigError("--gain must be positive")
    archs = [dse.Architecture.parse(t) for t in _csv_list(a.arch)] if a.arch else list(dse.ALL_ARCHITECTURES)
    out = Path(a.out)
    relu = not a.no_relu
    if a.exhaustive:
        return _explore_exhaustive(a, archs, out, relu)
    stim = dse.gen_stimulus(a.n, a.seed, a.gain)
    rep = dse.explore(stim, archs, relu=relu, baseline=a.baseline, max_workers=_threads())
    _write(out, "report.csv", rep.to_csv())
    _write(out, "report.json", rep.to_json())
    for k in rep.ranking + (["FP16"] if rep.fp16 else []):
        _write(out, f"hist/{k}.csv", rep.histogram_csv(k))
    gains = [float(g) for g in _csv_list(a.sweep_gains)]
    sweep = dse.gain_sweep(gains, a.n, a.seed, archs, relu=relu, baseline=a.baseline)
    lines = ["gain," + ",".join(rep.ranking)]
    for g, row in sweep.items():
        lines.append(f"{g:g}," + ",".join(f"{row[k]:.6f}" for k in rep.ranking))
    _write(out, "sensitivity.csv", "\n".join(lines) + "\n")
    for k in rep.ranking:
        st = rep.rows[k]
        print(f"{k:6s} {st.label:3s} frac_ge_half={st.frac_ge_half:.4f} mean={st.mean_q_err:.4f} l2={st.l2_err:.4f}")
    return 0


def _explore_exhaustive(a, archs, out: Path, relu: bool) -> int:
    grid = dse.grid_stimulus(a.scale_p, a.scale_n, a.shift, a.offset)
    rep = dse.explore(grid, archs, relu=relu, baseline=a.baseline, include_fp16=False,
                      max_workers=_threads())
    rng = np.random.default_rng(a.seed)
    idx = rng.integers(0, grid.n, a.n)
    sampled = dse.explore(grid.permuted(idx), archs, relu=relu, baseline=a.baseline,
                          include_fp16=False)
    result = {}
    for k in rep.ranking:
        p = rep.rows[k].frac_ge_half
        q = sampled.rows[k].frac_ge_half
        half_width = 3.0 * np.sqrt(max(p * (1 - p), 1e-12) / a.n)
        result[k] = {"grid_frac_ge_half": p, "grid_count_ge_half": int(round(p * grid.n)),
                     "sampled_frac_ge_half": q, "ci_half_width": half_width,
                     "within_ci": bool(abs(p - q) <= half_width)}
        print(f"{k}: grid={p:.6f} sampled={q:.6f} +-{half_width:.6f}")
    _write(out, "grid_report.csv", rep.to_csv())
    _write(out, "grid_report.json", rep.to_json())
    _write(out, "exhaustive.json", _json(result))
    return 0


def cmd_adc(a) -> int:
    if a.n < 2:
        raise ConfigError("--n must be >= 2")
    if not 0 <= a.cv <= 0.2:
        raise ConfigError("--cv must lie in [0, 0.2]")
    pop = adc_model.gen_adc_population(a.n, a.cv, a.nonlinearity, a.seed, a.offset_sigma, a.levels)
    cal = adc_model.calibrate_affine(pop)
    before = adc_model.compute_cv(pop)
    after = adc_model.compute_cv(pop, cal)
    after_q = adc_model.compute_cv(pop, cal, quantized=True)
    scales = [p.scale_aff for p in cal]
    summary = {
        "n": a.n, "cv_target": a.cv, "seed": a.seed,
        "cv_before": before.aggregate, "cv_after": after.aggregate,
        "cv_after_quantized": after_q.aggregate,
        "scale_min": min(scales), "scale_max": max(scales),
        "shifts": sorted({p.quantized.shift for p in cal}),
    }
    out = Path(a.out)
    _write(out, "population.csv", adc_model.population_csv(pop))
    _write(out, "calibration.json", adc_model.calibration_json(cal))
    _write(out, "summary.json", _json(summary))
    lines = ["level,mean_count,cv_before,cv_after,cv_after_quantized"]
    for j, lv in enumerate(pop[0].levels):
        lines.append(f"{lv:.6f},{before.mean[j]:.6f},{before.cv[j]:.6g},{after.cv[j]:.6g},{after_q.cv[j]:.6g}")
    _write(out, "cv_profile.csv", "\n".join(lines) + "\n")
    print(f"cv_before={before.aggregate:.4f} cv_after={after.aggregate:.4f} "
          f"cv_after_quantized={after_q.aggregate:.4f} scales=[{min(scales):.3f}, {max(scales):.3f}]")
    return 0


def cmd_simulate(a) -> int:
    if a.reps < 1:
        raise ConfigError("--reps must be >= 1")
    if a.weights:
        if not Path(a.weights).is_file():
            raise ConfigError(f"weight file {a.weights} not found")
        layers = toy.load_layers(a.weights)
    else:
        layers, _, _ = toy.load_toy_task()
    if a.dataset:
        if not Path(a.dataset).is_file():
            raise ConfigError(f"dataset {a.dataset} not found")
        X, y = read_dataset_csv(a.dataset)
    else:
        X, y = toy.test_split()
    peris = [aimc.Periphery.parse(p) for p in _csv_list(a.peripheries)]
    calib = aimc.calibrate_network(layers, X)
    res = aimc.compare_peripheries(layers, X, y, peris, a.reps, a.seed, calib,
                                   noise_sigma=a.noise, drift_factor=a.drift, adc=a.adc)
    ref_acc = aimc.accuracy(aimc.reference_forward(layers, aimc.input_codes(X, calib), calib), y)
    sw_acc = aimc.accuracy(aimc.software_forward(layers, X), y)
    out = Path(a.out)
    lines = ["periphery,mean,std,reps"]
    runs = []
    for name, r in res.items():
        lines.append(f"{name},{r.mean:.6f},{r.std:.6f},{len(r.accuracies)}")
        runs += [{"periphery": name, "seed": a.seed + i, "accuracy": acc}
                 for i, acc in enumerate(r.accuracies)]
        print(f"{name:12s} {r.mean:.4f} +- {r.std:.4f}")
    _write(out, "accuracy.csv", "\n".join(lines) + "\n")
    _write(out, "runs.json", _json(runs))
    _write(out, "summary.json", _json({
        "noise_model": "synthetic Gaussian conductance noise + global drift (stand-in)",
        "software_float_accuracy": sw_acc, "quantized_reference_accuracy": ref_acc,
        "noise_sigma": a.noise, "adc": a.adc, "drift": a.drift,
        "peripheries": {k: {"mean": v.mean, "std": v.std} for k, v in res.items()},
    }))
    return 0


def cmd_perf(a) -> int:
    names = _csv_list(a.spec) if a.spec else list(perf.PUBLISHED_TABLE)
    try:
        specs = [perf.get_spec(n) for n in names]
        pair = [perf.get_spec(n) for n in a.compare] if a.compare else None
    except NmpuError as exc:
        raise ConfigError(str(exc)) from exc
    if a.n_outputs < 1:
        raise ConfigError("--n-outputs must be >= 1")
    rows = [perf.table_row(s, a.n_outputs) for s in specs]
    result = {"n_outputs": a.n_outputs, "table": rows}
    for r in rows:
        print(f"{r['system']:10s} area={r['area_kge']}kGE latency={r['latency_ns']}ns total={r['total_latency_ns']}ns")
    if pair:
        cmp = perf.compare(pair[0], pair[1], a.n_outputs)
        result["compare"] = cmp
        print(f"{cmp['a']} vs {cmp['b']}: speedup={cmp['speedup']:.2f} area_ratio={cmp['area_ratio']:.2f}")
    out = Path(a.out)
    _write(out, "perf.json", _json(result))
    cols = ["system", "area_kge", "latency_ns", "total_latency_ns", "power_mw_ss", "power_mw_ff"]
    lines = [",".join(cols)] + [",".join("" if r[c] is None else str(r[c]) for c in cols) for r in rows]
    _write(out, "table.csv", "\n".join(lines) + "\n")
    return 0


def cmd_vectors(a) -> int:
    if a.nmpu_config:
        if not Path(a.nmpu_config).is_file():
            raise ConfigError(f"config {a.nmpu_config} not found")
        cfg = load_config(Path(a.nmpu_config).read_text(encoding="utf-8"))
    else:
        arch = dse.Architecture.parse(a.arch)
        cfg = NmpuConfig.from_raw(a.scale_p_raw, a.scale_n_raw, a.shift, a.offset_raw,
                                  arch.first_stage, arch.second_stage, not a.no_relu)
    if a.exhaustive:
        ip, in_ = np.meshgrid(np.arange(1024), np.arange(1024), indexing="ij")
    else:
        if a.n < 1:
            raise ConfigError("--n must be >= 1")
        rng = np.random.default_rng(a.seed)
        ip, in_ = rng.integers(0, 1024, a.n), rng.integers(0, 1024, a.n)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / ".vectors.txt.tmp"
    count = write_vectors(tmp, cfg, ip, in_)
    os.replace(tmp, out / "vectors.txt")
    _write(out, "nmpu_config.txt", dump_config(cfg))
    print(f"wrote {count} vectors for {cfg.arch_id}")
    return 0


# ---------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmpu-sim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed):
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--out", default="out")
        sp.add_argument("--config", help="key=value or JSON file overriding flags")

    e = sub.add_parser("explore", help="quantization error of the 15 architectures")
    common(e, 42)
    e.add_argument("--n", type=int, default=10_000)
    e.add_argument("--gain", type=float, default=dse.DEFAULT_GAIN)
    e.add_argument("--arch", help="comma-separated ids, e.g. M5-S1 (default: all 15)")
    e.add_argument("--baseline", choices=dse.BASELINE_MODES, default="floor")
    e.add_argument("--no-relu", action="store_true")
    e.add_argument("--sweep-gains", default="128,256,512")
    e.add_argument("--exhaustive", action="store_true", help="full 1024x1024 grid at one config")
    e.add_argument("--scale-p", type=float, default=1.0)
    e.add_argument("--scale-n", type=float, default=1.0)
    e.add_argument("--shift", type=int, default=3)
    e.add_argument("--offset", type=float, default=0.0)
    e.set_defaults(func=cmd_explore)

    d = sub.add_parser("adc", help="synthetic ADC population and affine calibration")
    common(d, 7)
    d.add_argument("--n", type=int, default=256)
    d.add_argument("--cv", type=float, default=0.07)
    d.add_argument("--nonlinearity", type=float, default=0.3)
    d.add_argument("--offset-sigma", type=float, default=4.0)
    d.add_argument("--levels", type=int, default=adc_model.DEFAULT_LEVELS)
    d.set_defaults(func=cmd_adc)

    s = sub.add_parser("simulate", help="toy network accuracy per periphery")
    common(s, 0)
    s.add_argument("--peripheries", default="fp32,fp16,nmpu:best")
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--drift", type=float, default=1.0)
    s.add_argument("--adc", choices=("linear", "synthetic"), default="synthetic")
    s.add_argument("--weights", help="tensor container (default: bundled toy MLP)")
    s.add_argument("--dataset", help="CSV features...,label (default: bundled test split)")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("perf", help="latency/area model")
    common(f, 0)
    f.add_argument("--spec", help="comma-separated spec names (default: all)")
    f.add_argument("--compare", nargs=2, metavar=("A", "B"))
    f.add_argument("--n-outputs", type=int, default=perf.TILE_COLUMNS)
    f.set_defaults(func=cmd_perf)

    v = sub.add_parser("vectors", help="datapath test vectors")
    common(v, 0)
    v.add_argument("--arch", default="M5-S1")
    v.add_argument("--scale-p-raw", type=int, default=128)
    v.add_argument("--scale-n-raw", type=int, default=128)
    v.add_argument("--shift", type=int, default=0)
    v.add_argument("--offset-raw", type=int, default=0)
    v.add_argument("--no-relu", action="store_true")
    v.add_argument("--nmpu-config", help="key=value NMPU config file")
    v.add_argument("--exhaustive", action="store_true")
    v.add_argument("--n", type=int, default=10_000)
    v.set_defaults(func=cmd_vectors)
    return p


def _load_overrides(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return data.get("config", data)
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def _apply_overrides(ns: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    try:
        overrides = _load_overrides(ns.config)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
    sub = parser._subparsers._group_actions[0].choices[ns.command]
    actions = {act.dest: act for act in sub._actions}
    for key, val in overrides.items():
        dest = key.replace("-", "_")
        if dest in ("command", "config", "func", "out"):
            continue
        if dest not in actions:
            raise ConfigError(f"unknown config key {key!r}")
        act = actions[dest]
        if isinstance(val, str):
            if act.nargs == 0:
                val = val.lower() in ("1", "true", "yes", "on")
            elif act.nargs == 2:
                val = val.split()
            elif act.type is not None:
                val = act.type(val)
        setattr(ns, dest, val)


def resolved_config(ns: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(ns).items())
            if k not in ("func", "config", "verbose", "out", "command") and not callable(v)}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.config:
            _apply_overrides(ns, parser)
        cfg = resolved_config(ns)
        code = ns.func(ns)
        _write(Path(ns.out), "manifest.json", _json({"command": ns.command, "config": cfg}))
        return code
    except (ConfigError, NmpuError) as exc:
        parser.print_usage(sys.stderr)
        print(f"nmpu-sim: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.exception("run failed")
        print(f"nmpu-sim: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
