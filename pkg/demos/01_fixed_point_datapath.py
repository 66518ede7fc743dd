#!/usr/bin/env python3
"""Walk one pair of ADC counts through the bit-accurate datapath.

Prints every intermediate fixed-point value for a single configuration,
then the same inputs through each first-stage rounding method.
"""
from nmpu.datapath import FirstStageMethod, nmpu_trace, quantize_config

IN_P, IN_N = 700, 405
SCALE_P, SCALE_N, OFFSET = 0.12, 0.11, -1.5

cfg = quantize_config(SCALE_P, SCALE_N, OFFSET, "M4", "S1")
print(f"config: scale_p={cfg.scale_p} scale_n={cfg.scale_n} shift={cfg.shift} offset={cfg.offset}")

t = nmpu_trace(IN_P, IN_N, cfg)
for side in ("p", "n"):
    print(f"branch {side}:")
    for stage, v in t[side].items():
        print(f"  {stage:10s} {v}  ({float(v):.5f})")
print(f"sum      {t['sum']}  ({float(t['sum']):.3f})")
print(f"stage2   {t['stage2']}")
print(f"output   {t['output'].value}  overflow={t['output'].overflow}")

exact = (IN_P * SCALE_P - IN_N * SCALE_N + OFFSET)
print(f"\nreal-valued result {exact:.4f}")
for m in FirstStageMethod:
    c = quantize_config(SCALE_P, SCALE_N, OFFSET, m.value, "S1")
    print(f"  {m.value}-S1 -> {nmpu_trace(IN_P, IN_N, c)['output'].value}")
