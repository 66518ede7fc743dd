#!/usr/bin/env python3
"""Rank the 15 rounding architectures on a seeded Monte Carlo stimulus.

Usage: python demos/02_design_space.py [n] [seed]
"""
import sys

from nmpu.dse import explore, gain_sweep, gen_stimulus

n = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 42

rep = explore(gen_stimulus(n, seed))
print(f"{'id':6s} {'label':5s} {'P(err>=0.5)':>11s} {'mean':>7s} {'overflow':>8s}")
for k in rep.ranking:
    s = rep[k]
    print(f"{k:6s} {s.label:5s} {s.frac_ge_half:11.4f} {s.mean_q_err:7.4f} {s.overflow_frac:8.4f}")
print(f"{'FP16':6s} {'':5s} {rep.fp16.frac_ge_half:11.4f} {rep.fp16.mean_q_err:7.4f}")

print("\nstimulus gain sensitivity (S1 architectures)")
for g, row in gain_sweep([128, 256, 512], n, seed).items():
    s1 = {k: v for k, v in row.items() if k.endswith("S1")}
    print(f"  gain {g:g}: " + " ".join(f"{k}={v:.4f}" for k, v in s1.items()))
