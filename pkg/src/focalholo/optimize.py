"""Phase-only hologram optimization.

Two objectives over the same three-channel phase:

* multiplane: per color primary, ASM propagation to every volume plane,
  compared against per-plane targets with the masked L2 loss. Gradients
  are analytic, using the adjoint (conjugate transfer) propagation.
* focal surface: the learned model maps (hologram, focal surface) to a
  full-color image in one inference; gradients come from torch.

Both run the same numpy Adam on the phase.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .loss import masked_l2_loss
from .model import ReconstructionTarget
from .optics import (OpticalConfig, PassCounter, PropagationKernel, apply_transfer,
                     volume_kernels)

log = logging.getLogger(__name__)


@dataclass
class OptimizeConfig:
    iterations: int = 200
    lr: float = 0.1
    scale: float = 1.0
    seed: int = 0
    alpha0: float = 1.0
    alpha1: float = 0.5
    betas: tuple[float, float] = (0.9, 0.999)
    variant: str = "multiplane"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.variant not in ("multiplane", "focal_surface"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class MultiplaneTarget:
    """Per-plane target intensities ``(3, h, w)`` and focus masks ``(1, h, w)``."""

    images: list[np.ndarray]
    masks: list[np.ndarray]

    def __post_init__(self):
        self.images = [np.asarray(im, dtype=np.float64) for im in self.images]
        self.masks = [np.asarray(m, dtype=np.float64) for m in self.masks]
        if len(self.images) != len(self.masks) or not self.images:
            raise ValueError("need one mask per target plane")

    def check(self, config: OpticalConfig) -> None:
        if len(self.images) != config.n_planes:
            raise ValueError(f"{len(self.images)} target planes for "
                             f"{config.n_planes} configured volume planes")
        for im, m in zip(self.images, self.masks):
            if im.shape != (3, *config.shape) or m.shape != (1, *config.shape):
                raise ValueError(f"target shapes {im.shape}/{m.shape} do not match "
                                 f"config {config.shape}")


@dataclass
class OptimizeResult:
    hologram: np.ndarray
    losses: list[float] = field(default_factory=list)
    passes: list[int] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iteration", "loss", "passes"])
            for i, (loss, n) in enumerate(zip(self.losses, self.passes)):
                writer.writerow([i, repr(loss), n])


class Adam:
    """Adam on a single numpy array."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = self.v = None
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_phase(config: OpticalConfig, seed: int = 0) -> np.ndarray:
    """Uniform random phase in [-pi, pi), shape ``(3, h, w)``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-np.pi, np.pi, size=(3, *config.shape))


def multiplane_objective(hologram: np.ndarray, targets: MultiplaneTarget,
                         kernels: Sequence[Sequence[PropagationKernel]],
                         scale: float = 1.0, alpha0: float = 1.0, alpha1: float = 0.5,
                         counter: Optional[PassCounter] = None
                         ) -> tuple[float, np.ndarray]:
    """Loss summed over planes and its gradient w.r.t. the phase.

    ``kernels[p][c]`` propagates color ``c`` to plane ``p``.
    """
    fields = np.exp(1j * hologram)
    grad = np.zeros_like(hologram)
    total = 0.0
    n_el = hologram.size
    for plane_kernels, target, mask in zip(kernels, targets.images, targets.masks):
        u = np.stack([apply_transfer(fields[c], plane_kernels[c].transfer) for c in range(3)])
        if counter is not None:
            counter.add(3)
        recon = u.real ** 2 + u.imag ** 2
        diff = recon - scale * target
        total += float(masked_l2_loss(recon, scale * target, mask, alpha0, alpha1))
        weight = alpha0 * mask + alpha1 * (1 - mask)
        d_recon = 2.0 * weight * diff / n_el
        for c in range(3):
            g_u = 2.0 * d_recon[c] * u[c]
            g_f = apply_transfer(g_u, plane_kernels[c].transfer.conj())
            grad[c] += np.imag(g_f * fields[c].conj())
    return total, grad


def optimize_multiplane(targets: MultiplaneTarget, config: OpticalConfig,
                        opt: OptimizeConfig = OptimizeConfig(),
                        init: Optional[np.ndarray] = None,
                        counter: Optional[PassCounter] = None) -> OptimizeResult:
    """Adam on the multiplane objective; ``3 * n_planes`` passes per iteration."""
    targets.check(config)
    hologram = init_phase(config, opt.seed) if init is None else np.array(init, dtype=np.float64)
    kernels = volume_kernels(config)
    counter = counter if counter is not None else PassCounter()
    adam = Adam(opt.lr, opt.betas)
    result = OptimizeResult(hologram)
    for it in range(opt.iterations):
        loss, grad = multiplane_objective(hologram, targets, kernels, opt.scale,
                                          opt.alpha0, opt.alpha1, counter)
        hologram = adam.step(hologram, grad)
        result.losses.append(loss)
        result.passes.append(counter.value)
        log.debug("multiplane iteration %d loss %.6g", it, loss)
    result.hologram = hologram
    return result


Forward = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def focal_surface_loss(hologram: torch.Tensor, targets: Sequence[ReconstructionTarget],
                       forward: Forward, scale: float = 1.0, alpha0: float = 1.0,
                       alpha1: float = 0.5, counter: Optional[PassCounter] = None):
    """Sum over focal surfaces of the masked L2 between ``forward(H, D)`` and ``s R``."""
    total = 0
    for t in targets:
        if counter is not None:
            counter.add(1)
        recon = forward(hologram, torch.from_numpy(t.surface))
        total = total + masked_l2_loss(recon, scale * torch.from_numpy(t.image),
                                       torch.from_numpy(t.mask), alpha0, alpha1)
    return total


def optimize_focal_surface(targets: Sequence[ReconstructionTarget], model: Forward,
                           config: OpticalConfig, opt: OptimizeConfig = OptimizeConfig(),
                           init: Optional[np.ndarray] = None,
                           counter: Optional[PassCounter] = None) -> OptimizeResult:
    """Adam on all three phase channels through the learned model.

    One model inference per target surface per iteration.
    """
    if not targets:
        raise ValueError("at least one focal-surface target is required")
    cfg = getattr(model, "cfg", None)
    if cfg is not None and (cfg.height, cfg.width) != config.shape:
        raise ValueError(f"model resolution {(cfg.height, cfg.width)} != config {config.shape}")
    for t in targets:
        if t.image.shape != (3, *config.shape):
            raise ValueError(f"target shape {t.image.shape} does not match config {config.shape}")
    hologram = init_phase(config, opt.seed) if init is None else np.array(init, dtype=np.float64)
    counter = counter if counter is not None else PassCounter()
    adam = Adam(opt.lr, opt.betas)
    result = OptimizeResult(hologram)
    for it in range(opt.iterations):
        h = torch.tensor(hologram, requires_grad=True)
        loss = focal_surface_loss(h, targets, model, opt.scale, opt.alpha0, opt.alpha1, counter)
        loss.backward()
        hologram = adam.step(hologram, h.grad.numpy())
        result.losses.append(float(loss.item()))
        result.passes.append(counter.value)
        log.debug("focal-surface iteration %d loss %.6g", it, result.losses[-1])
    result.hologram = hologram
    return result


@dataclass(frozen=True)
class TraceStats:
    initial: float
    final: float
    improvements: int
    window_means: tuple[float, ...]
    violations: int

    @property
    def nonincreasing_fraction(self) -> float:
        n = len(self.window_means) - 1
        return 1.0 if n <= 0 else 1.0 - self.violations / n


def loss_trace_stats(trace: Sequence[float], window: int = 10) -> TraceStats:
    """Summarize a loss trace.

    ``improvements`` counts strict step-to-step decreases; ``violations``
    counts increases between consecutive means of non-overlapping windows
    (a trailing partial window is dropped).
    """
    trace = np.asarray(trace, dtype=np.float64)
    if trace.size == 0:
        raise ValueError("loss trace is empty")
    if window < 1:
        raise ValueError("window must be >= 1")
    n_win = trace.size // window
    means = trace[:n_win * window].reshape(n_win, window).mean(axis=1)
    return TraceStats(float(trace[0]), float(trace[-1]),
                      int(np.sum(np.diff(trace) < 0)),
                      tuple(float(m) for m in means),
                      int(np.sum(np.diff(means) > 0)))
