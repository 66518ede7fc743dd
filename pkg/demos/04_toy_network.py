#!/usr/bin/env python3
"""Run the bundled toy MLP through simulated crossbars with three peripheries.

Usage: python demos/04_toy_network.py [reps]
"""
import sys

from nmpu import toy
from nmpu.aimc import accuracy, calibrate_network, compare_peripheries, software_forward

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 5
layers, X, y = toy.load_toy_task()
calib = calibrate_network(layers, X)
print(f"software float accuracy: {accuracy(software_forward(layers, X), y):.4f}")

for sigma in (0.0, 0.05, 0.1):
    res = compare_peripheries(layers, X, y, ["fp32", "fp16", "nmpu:best"], reps=reps,
                              calib=calib, noise_sigma=sigma, adc="synthetic")
    line = "  ".join(f"{k}={r.mean:.4f}+-{r.std:.4f}" for k, r in res.items())
    print(f"noise {sigma:.2f}: {line}")
