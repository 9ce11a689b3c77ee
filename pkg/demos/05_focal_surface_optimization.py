"""Hologram optimization through the learned model versus through the ASM.

An untrained model is enough to show the cost structure: one inference per
focal surface instead of three propagations per plane.
"""
import numpy as np

from focalholo.bench import bench
from focalholo.optics import OpticalConfig

cfg = OpticalConfig(width=32, height=32)
mp = bench("optimize-multiplane", cfg, iterations=20)
print(mp.text())
for n in (6, 4):
    fs = bench("optimize-focal", cfg, iterations=20, n_surfaces=n)
    print(fs.text())
    ratio = (fs.model_inferences / fs.iterations) / (mp.asm_passes / mp.iterations)
    print(f"  forward operations per iteration relative to the ASM stack: {ratio:.4f}")

sim = bench("simulate-volume", cfg)
print(sim.text())
