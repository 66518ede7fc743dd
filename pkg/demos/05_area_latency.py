#!/usr/bin/env python3
"""Rebuild the area/latency comparison from the analytical model."""
from nmpu.perf import check_table, compare, get_spec, reproduce_table

cols = ("system", "area_kge", "latency_ns", "total_latency_ns", "power_mw_ss", "power_mw_ff")
print("  ".join(f"{c:>16s}" for c in cols))
for row in reproduce_table():
    print("  ".join(f"{row[c]!s:>16s}" for c in cols))

c = compare(get_spec("archA_x64"), get_spec("fp16_ref"), 256)
print(f"\n64-unit NMPU vs FP16 periphery: {c['speedup']:.1f}x faster, "
      f"{c['area_ratio']:.2f}x smaller")
print("mismatches against tabulated cells:", check_table() or "none")
