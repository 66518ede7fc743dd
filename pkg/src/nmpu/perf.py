"""Analytical latency / area model for tile post-processing.

Two execution styles are modeled: ``units`` identical NMPUs working in
parallel, each time-multiplexed over its share of columns, and a single
serial pipeline (the FP16 reference) with a start-up latency and a fixed
issue interval.  Area and power values are post-layout constants; only
their combinations are computed here.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .errors import ParameterError

PARALLEL = "parallel_multiplexed"
SERIAL = "serial_pipelined"
TILE_COLUMNS = 256


@dataclass(frozen=True)
class PerfSpec:
    name: str
    area_kge: float
    unit_latency_ns: float
    init_latency_ns: float = 0.0
    issue_interval_ns: float = 0.0
    units: int = 1
    columns_per_unit: int = TILE_COLUMNS
    mode: str = PARALLEL
    power_mw_ss: float | None = None
    power_mw_ff: float | None = None
    area_decimals: int = 0  # precision used when the area is tabulated

    def __post_init__(self):
        for k in ("area_kge", "unit_latency_ns", "init_latency_ns", "issue_interval_ns"):
            if getattr(self, k) < 0:
                raise ParameterError(f"{k} must be non-negative")
        if self.units < 1 or self.columns_per_unit < 1:
            raise ParameterError("units and columns_per_unit must be >= 1")
        if self.mode not in (PARALLEL, SERIAL):
            raise ParameterError(f"unknown mode {self.mode!r}")

    @property
    def columns_covered(self) -> int:
        return self.units * self.columns_per_unit


# Post-layout figures for a 256-column tile.  The FP16 issue interval of
# 2 ns is the value that reproduces the tabulated 558 ns total from the
# 46 ns pipeline latency.
REGISTRY: dict[str, PerfSpec] = {
    "archA": PerfSpec("archA", 3.3, 1.0, units=1, columns_per_unit=256,
                      power_mw_ss=0.383, power_mw_ff=0.524, area_decimals=1),
    "archA_x64": PerfSpec("archA_x64", 3.3, 1.0, units=64, columns_per_unit=4,
                          power_mw_ss=24.5, power_mw_ff=33.5),
    "fp16_ref": PerfSpec("fp16_ref", 1666.0, 46.0, init_latency_ns=46.0, issue_interval_ns=2.0,
                         mode=SERIAL, power_mw_ss=27.0, power_mw_ff=27.0),
}

# Cells as tabulated: area (kGE), latency (ns), total latency (ns) for 256 outputs.
PUBLISHED_TABLE = {
    "archA": (3.3, 1.0, 256.0),
    "archA_x64": (211.0, 1.0, 4.0),
    "fp16_ref": (1666.0, 46.0, 558.0),
}


def get_spec(name: str) -> PerfSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ParameterError(f"unknown spec {name!r}; known: {', '.join(REGISTRY)}") from None


def total_latency(spec: PerfSpec, n_outputs: int = TILE_COLUMNS, mode: str | None = None) -> float:
    """Time to post-process ``n_outputs`` column outputs, in ns."""
    if n_outputs < 1:
        raise ParameterError("n_outputs must be >= 1")
    mode = mode or spec.mode
    if mode == PARALLEL:
        return math.ceil(n_outputs / spec.units) * spec.unit_latency_ns
    if mode == SERIAL:
        return spec.init_latency_ns + n_outputs * spec.issue_interval_ns
    raise ParameterError(f"unknown mode {mode!r}")


def area_total(spec: PerfSpec) -> float:
    return spec.area_kge * spec.units


def compare(a: PerfSpec, b: PerfSpec, n_outputs: int = TILE_COLUMNS) -> dict:
    """How much faster and smaller ``a`` is than ``b``."""
    return {
        "a": a.name,
        "b": b.name,
        "n_outputs": n_outputs,
        "speedup": total_latency(b, n_outputs) / total_latency(a, n_outputs),
        "area_ratio": area_total(b) / area_total(a),
    }


def table_row(spec: PerfSpec, n_outputs: int = TILE_COLUMNS) -> dict:
    """Reproduced table cells, area rounded to the tabulated precision."""
    return {
        "system": spec.name,
        "area_kge": round(area_total(spec), spec.area_decimals),
        "latency_ns": spec.unit_latency_ns,
        "total_latency_ns": total_latency(spec, n_outputs),
        "power_mw_ss": spec.power_mw_ss,
        "power_mw_ff": spec.power_mw_ff,
    }


def reproduce_table() -> list[dict]:
    return [table_row(REGISTRY[k]) for k in PUBLISHED_TABLE]


def check_table() -> list[str]:
    """Cells that differ from the tabulated values (empty when all match)."""
    bad = []
    for row in reproduce_table():
        want = PUBLISHED_TABLE[row["system"]]
        got = (row["area_kge"], row["latency_ns"], row["total_latency_ns"])
        for col, g, w in zip(("area", "latency", "total"), got, want):
            if g != w:
                bad.append(f"{row['system']}.{col}: {g} != {w}")
    return bad


def export_json(obj) -> str:
    if isinstance(obj, PerfSpec):
        obj = asdict(obj)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
