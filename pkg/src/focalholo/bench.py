"""Pass-count benchmark harness.

Counts are exact and hardware independent; wall-clock times are recorded
for information only.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch

from .dataset import (defocus_targets, demo_samples, generate_focal_surface,
                      in_focus_restoration, quantize_depth)
from .metrics import psnr, ssim
from .model import FocalSurfaceModel, ModelConfig, ReconstructionTarget, model_forward
from .optics import OpticalConfig, PassCounter, reconstruct_volume
from .optimize import (MultiplaneTarget, OptimizeConfig, init_phase, optimize_focal_surface,
                       optimize_multiplane)

SCENARIOS = ("simulate-volume", "optimize-multiplane", "optimize-focal")


@dataclass
class MetricReport:
    scenario: str
    psnr: float
    ssim: float
    asm_passes: int
    model_inferences: int
    iterations: int
    surfaces: int
    wall_clock: float

    def text(self) -> str:
        return (f"{self.scenario}: ASM passes {self.asm_passes}, model inferences "
                f"{self.model_inferences} over {self.iterations} iteration(s) and "
                f"{self.surfaces} surface(s); PSNR {self.psnr:.3f} dB, SSIM {self.ssim:.4f}; "
                f"wall clock {self.wall_clock:.3f} s (informational)")

    def write_csv(self, path) -> None:
        row = asdict(self)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)


def _scene(config: OpticalConfig, seed: int):
    sample = demo_samples(1, config.height, config.width, seed)[0]
    levels = quantize_depth(sample.depth, config.n_planes)
    return levels, defocus_targets(sample.rgb, levels)


def _surface_targets(plane_images, levels, n_surfaces: int, seed: int) -> list[ReconstructionTarget]:
    targets = []
    for s in range(n_surfaces):
        surface = generate_focal_surface(levels, seed + s)
        image, mask = in_focus_restoration(plane_images, surface, levels)
        targets.append(ReconstructionTarget(image, surface, mask))
    return targets


def bench(scenario: str, config: OpticalConfig, model: Optional[FocalSurfaceModel] = None,
          iterations: int = 50, n_surfaces: int = 6, seed: int = 0,
          lr: float = 0.1) -> MetricReport:
    """Run one scenario and report exact pass counts.

    ``simulate-volume`` reconstructs every volume plane with the ASM and
    evaluates the model once on one focal surface. The optimization
    scenarios run ``iterations`` Adam steps.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if model is None and scenario != "optimize-multiplane":
        model = FocalSurfaceModel(ModelConfig(config.height, config.width), seed=seed)
    asm = PassCounter()
    inferences = PassCounter()
    levels, mp_targets = _scene(config, seed)
    hologram = init_phase(config, seed)

    start = time.perf_counter()
    if scenario == "simulate-volume":
        planes = reconstruct_volume(hologram, config, counter=asm)
        target = _surface_targets(planes, levels, 1, seed)[0]
        with torch.no_grad():
            pred = model_forward(hologram, target.surface, model, inferences).numpy()
        score = (psnr(pred, target.image), ssim(pred, target.image))
        iters, surfaces = 1, 1
    elif scenario == "optimize-multiplane":
        result = optimize_multiplane(mp_targets, config,
                                     OptimizeConfig(iterations=iterations, lr=lr, seed=seed),
                                     counter=asm)
        score = _volume_score(result.hologram, config, mp_targets)
        iters, surfaces = iterations, 0
    else:
        targets = _surface_targets(mp_targets.images, levels, n_surfaces, seed)
        result = optimize_focal_surface(targets, model, config,
                                        OptimizeConfig(iterations=iterations, lr=lr, seed=seed),
                                        counter=inferences)
        score = _volume_score(result.hologram, config, mp_targets)
        iters, surfaces = iterations, n_surfaces
    elapsed = time.perf_counter() - start
    return MetricReport(scenario, score[0], score[1], asm.value, inferences.value,
                        iters, surfaces, elapsed)


def _volume_score(hologram, config: OpticalConfig, targets: MultiplaneTarget):
    # evaluation reconstructions are not part of the counted cost
    planes = reconstruct_volume(hologram, config)
    psnrs = [psnr(np.clip(p, 0, 1), t) for p, t in zip(planes, targets.images)]
    ssims = [ssim(np.clip(p, 0, 1), t) for p, t in zip(planes, targets.images)]
    return float(np.mean(psnrs)), float(np.mean(ssims))
