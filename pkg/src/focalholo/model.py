"""Learned focal-surface light transport.

Two U-Nets. The kernel generator sees the hologram and the focal surface
and emits one bank of spatially varying (SV) kernels per scale. The
transport network sees only the hologram; at every encoder scale a
spatially adaptive module (SAM) filters its features with that scale's SV
kernels, once with an all-ones SI factor and once with a learned one.

Sizes are configurable; the defaults are toy scale. Everything runs in
float64 on the CPU so gradients can be checked by finite differences.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import sac
from .fileio import load_tensors, save_tensors
from .loss import masked_l2_loss
from .optics import PassCounter

log = logging.getLogger(__name__)

N_SCALES = 4


@dataclass(frozen=True)
class ModelConfig:
    height: int = 32
    width: int = 32
    channels: int = 8
    kernel_size: int = 3

    def __post_init__(self):
        if self.height % 2 ** (N_SCALES - 1) or self.width % 2 ** (N_SCALES - 1):
            raise ValueError("height and width must be divisible by 8")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if self.channels < 1:
            raise ValueError("channels must be positive")

    def scale_channels(self, i: int) -> int:
        """Channel count of the transport features filtered at scale ``i``."""
        return self.channels * 2 ** i

    def scale_shape(self, i: int) -> tuple[int, int]:
        return (self.height // 2 ** i, self.width // 2 ** i)


@dataclass
class ReconstructionTarget:
    """Target image, focal surface (normalized depth) and in-focus mask."""

    image: np.ndarray
    surface: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.surface = np.asarray(self.surface, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"target image must be (3, h, w), got {self.image.shape}")
        hw = self.image.shape[1:]
        if self.surface.shape != (1, *hw) or self.mask.shape != (1, *hw):
            raise ValueError("surface and mask must be (1, h, w) matching the image")
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ValueError("mask must be binary")


# --- autograd bridges to the numpy operators ----------------------------------

class _SACFunction(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, v, w):
        ctx.save_for_backward(x, v, w)
        out = sac.sac_forward(x.detach().numpy(), v.detach().numpy(), w.detach().numpy())
        return torch.from_numpy(out).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        x, v, w = ctx.saved_tensors
        gx, gv, gw = sac.sac_backward(grad_out.detach().numpy(), x.detach().numpy(),
                                      v.detach().numpy(), w.detach().numpy())
        return (torch.from_numpy(gx).to(x.dtype), torch.from_numpy(gv).to(v.dtype),
                torch.from_numpy(gw).to(w.dtype))


class _SVFunction(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, v):
        ctx.save_for_backward(x, v)
        out = sac.sv_conv(x.detach().numpy(), v.detach().numpy())
        return torch.from_numpy(out).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        x, v = ctx.saved_tensors
        gx, gv = sac.sv_backward(grad_out.detach().numpy(), x.detach().numpy(),
                                 v.detach().numpy())
        return torch.from_numpy(gx).to(x.dtype), torch.from_numpy(gv).to(v.dtype)


def sac_conv(x: torch.Tensor, v: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Differentiable SAC on unbatched tensors, ``x`` (c, h, w), ``v`` (h, w, c, k, k)."""
    return _SACFunction.apply(x, v, w)


def sv_conv(x: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    return _SVFunction.apply(x, v)


def sam_forward(features, v, w_learned):
    """SAM: ``concat(sv_conv(x, v), sac(x, v, w_learned))`` along channels.

    Accepts numpy arrays or tensors; returns the same kind.
    """
    if isinstance(features, np.ndarray):
        return np.concatenate([sac.sv_conv(features, v),
                               sac.sac_forward(features, v, w_learned)])
    return torch.cat([sv_conv(features, v), sac_conv(features, v, w_learned)])


# --- building blocks -------------------------------------------------------------

def _down(x):
    return F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)


def _up(x):
    return F.interpolate(x, scale_factor=2.0, mode="bilinear", align_corners=False)


class ConvBlock(nn.Sequential):
    def __init__(self, c_in: int, c_out: int):
        super().__init__(nn.Conv2d(c_in, c_out, 3, padding=1), nn.GroupNorm(1, c_out), nn.SiLU(),
                         nn.Conv2d(c_out, c_out, 3, padding=1), nn.GroupNorm(1, c_out), nn.SiLU())


class SpatialAttention(nn.Module):
    """Single-head self-attention over bottleneck positions, residual."""

    def __init__(self, channels: int):
        super().__init__()
        self.query = nn.Conv2d(channels, channels, 1)
        self.key = nn.Conv2d(channels, channels, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        q = self.query(x).flatten(2).transpose(1, 2)
        k = self.key(x).flatten(2)
        v = self.value(x).flatten(2).transpose(1, 2)
        attn = torch.softmax(q @ k / math.sqrt(c), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, c, h, w)
        return x + self.proj(out)


class GlobalFeature(nn.Module):
    """Global average pooling driving a per-channel affine modulation."""

    def __init__(self, channels: int):
        super().__init__()
        self.fc = nn.Linear(channels, 2 * channels)

    def forward(self, x):
        scale, shift = self.fc(x.mean(dim=(2, 3))).chunk(2, dim=1)
        return x * (1 + scale[..., None, None]) + shift[..., None, None]


class SVFHead(nn.Module):
    """Per-scale kernel head: one convolution then stride-1 average pooling."""

    def __init__(self, c_in: int, kernel_channels: int, k: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, kernel_channels * k * k, 3, padding=1)
        self.pool = nn.AvgPool2d(3, stride=1, padding=1, count_include_pad=False)

    def forward(self, x):
        return self.pool(self.conv(x))


class KernelGenerator(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c = cfg.channels
        widths = [c * 2 ** i for i in range(N_SCALES)]
        self.encoders = nn.ModuleList(
            [ConvBlock(4 if i == 0 else widths[i - 1], widths[i]) for i in range(N_SCALES)])
        self.attention = SpatialAttention(widths[-1])
        self.decoders = nn.ModuleList(
            [ConvBlock(widths[i + 1] + widths[i], widths[i]) for i in range(N_SCALES - 1)])
        self.heads = nn.ModuleList(
            [SVFHead(widths[i], cfg.scale_channels(i), cfg.kernel_size) for i in range(N_SCALES)])

    def forward(self, x) -> list[torch.Tensor]:
        skips = []
        for i, enc in enumerate(self.encoders):
            x = enc(x if i == 0 else _down(x))
            skips.append(x)
        decoded = [None] * N_SCALES
        decoded[-1] = self.attention(skips[-1])
        for i in reversed(range(N_SCALES - 1)):
            decoded[i] = self.decoders[i](torch.cat([_up(decoded[i + 1]), skips[i]], dim=1))
        return [head(d) for head, d in zip(self.heads, decoded)]


class TransportNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        k = cfg.kernel_size
        widths = [cfg.scale_channels(i) for i in range(N_SCALES)]
        sam_out = [wd + 1 for wd in widths]
        self.encoders = nn.ModuleList(
            [ConvBlock(3 if i == 0 else sam_out[i - 1], widths[i]) for i in range(N_SCALES)])
        self.si_kernels = nn.ParameterList(
            [nn.Parameter(torch.randn(wd, wd, k, k) / math.sqrt(wd * k * k)) for wd in widths])
        self.global_feature = GlobalFeature(sam_out[-1])
        self.decoders = nn.ModuleList(
            [ConvBlock((sam_out[-1] if i == N_SCALES - 2 else widths[i + 1]) + sam_out[i],
                       widths[i]) for i in range(N_SCALES - 1)])
        self.out = nn.Conv2d(widths[0], 3, 1)

    def forward(self, x, kernels: Sequence[torch.Tensor]) -> torch.Tensor:
        skips = []
        for i, enc in enumerate(self.encoders):
            feat = enc(x if i == 0 else _down(x))
            x = sam_forward(feat[0], kernels[i], self.si_kernels[i])[None]
            skips.append(x)
        x = self.global_feature(skips[-1])
        for i in reversed(range(N_SCALES - 1)):
            x = self.decoders[i](torch.cat([_up(x), skips[i]], dim=1))
        return self.out(x)


def encode_phase(hologram: torch.Tensor) -> torch.Tensor:
    """Wrap to [-pi, pi) and scale to [-1, 1); unit derivative away from the wrap."""
    return torch.remainder(hologram + math.pi, 2 * math.pi) / math.pi - 1.0


class FocalSurfaceModel(nn.Module):
    """Kernel generator, transport network and their shared configuration."""

    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.generator = KernelGenerator(cfg)
            self.transport = TransportNet(cfg)
        self.double()

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def check_inputs(self, hologram: torch.Tensor, surface: torch.Tensor) -> None:
        hw = (self.cfg.height, self.cfg.width)
        if tuple(hologram.shape) != (3, *hw):
            raise ValueError(f"hologram shape {tuple(hologram.shape)} != (3, {hw[0]}, {hw[1]})")
        if tuple(surface.shape) != (1, *hw):
            raise ValueError(f"surface shape {tuple(surface.shape)} != (1, {hw[0]}, {hw[1]})")

    def kernels(self, hologram: torch.Tensor, surface: torch.Tensor) -> list[torch.Tensor]:
        """SV kernels per scale, each ``(h_i, w_i, c_i, k, k)``."""
        self.check_inputs(hologram, surface)
        k = self.cfg.kernel_size
        x = torch.cat([encode_phase(hologram), surface])[None]
        out = []
        for i, raw in enumerate(self.generator(x)):
            c = self.cfg.scale_channels(i)
            h, w = raw.shape[-2:]
            out.append(raw[0].reshape(c, k, k, h, w).permute(3, 4, 0, 1, 2))
        return out

    def forward(self, hologram: torch.Tensor, surface: torch.Tensor) -> torch.Tensor:
        kernels = self.kernels(hologram, surface)
        return self.transport(encode_phase(hologram)[None], kernels)[0]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.detach().numpy() for name, t in self.state_dict().items()}

    def save(self, path) -> None:
        arrays = self.state_arrays()
        cfg = self.cfg
        arrays["__config__"] = np.array(
            [cfg.height, cfg.width, cfg.channels, cfg.kernel_size], dtype=np.float32)
        save_tensors(path, arrays)

    @classmethod
    def load(cls, path) -> "FocalSurfaceModel":
        arrays = load_tensors(path)
        h, w, c, k = (int(v) for v in arrays.pop("__config__"))
        model = cls(ModelConfig(h, w, c, k))
        model.load_state_dict({n: torch.from_numpy(a.astype(np.float64))
                               for n, a in arrays.items()})
        return model


def _tensor(a) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a
    return torch.from_numpy(np.asarray(a, dtype=np.float64))


def generate_sv_kernels(hologram, surface, model: FocalSurfaceModel) -> list[torch.Tensor]:
    """SV kernel banks ``V_i`` shaped ``(n_i, c_i, k, k)``, ``n_i = h w / 4^i``."""
    kernels = model.kernels(_tensor(hologram), _tensor(surface))
    return [v.reshape(-1, *v.shape[2:]) for v in kernels]


def model_forward(hologram, surface, model: FocalSurfaceModel,
                  counter: Optional[PassCounter] = None) -> torch.Tensor:
    """Full-color reconstruction ``(3, h, w)`` on the focal surface."""
    if counter is not None:
        counter.add(1)
    return model(_tensor(hologram), _tensor(surface))


# --- training ------------------------------------------------------------------

@dataclass
class TrainSchedule:
    epochs: int = 500
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    decay_every: int = 50
    decay: float = 0.5
    seed: int = 0
    alpha0: float = 1.0
    alpha1: float = 0.5
    shuffle: bool = True


@dataclass
class TrainResult:
    model: FocalSurfaceModel
    losses: list[float] = field(default_factory=list)


def train(dataset: Sequence[tuple[np.ndarray, ReconstructionTarget]],
          model: FocalSurfaceModel, schedule: TrainSchedule = TrainSchedule(),
          callback=None) -> TrainResult:
    """Fit ``model`` in place with Adam and step decay; one sample per step.

    ``losses[e]`` is the mean sample loss seen during epoch ``e`` (before
    each step's update).
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    samples = []
    for hologram, target in dataset:
        h = _tensor(hologram)
        model.check_inputs(h, _tensor(target.surface))
        samples.append((h, _tensor(target.surface), _tensor(target.image), _tensor(target.mask)))

    opt = torch.optim.Adam(model.parameters(), lr=schedule.lr, betas=schedule.betas)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=schedule.decay_every,
                                            gamma=schedule.decay)
    rng = np.random.default_rng(schedule.seed)
    losses = []
    model.train()
    for epoch in range(schedule.epochs):
        order = rng.permutation(len(samples)) if schedule.shuffle else range(len(samples))
        total = 0.0
        for idx in order:
            h, d, r_target, m = samples[idx]
            opt.zero_grad()
            loss = masked_l2_loss(model(h, d), r_target, m, schedule.alpha0, schedule.alpha1)
            loss.backward()
            opt.step()
            total += loss.item()
        sched.step()
        losses.append(total / len(samples))
        log.info("epoch %d loss %.6g", epoch, losses[-1])
        if callback is not None:
            callback(epoch, losses[-1])
    model.eval()
    return TrainResult(model, losses)
