"""Focal-surface dataset generation.

For every RGB-D sample and base distance: optimize a deliberately noisy
hologram (short iteration budget), reconstruct the volume planes, draw
random focal surfaces by reassigning depths to in-focus regions, and merge
the plane reconstructions into (target, surface, mask) triples.
"""
from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .fileio import (load_mask_png, load_pfm, load_png, save_mask_png, save_pfm)
from .model import ReconstructionTarget
from .optics import OpticalConfig, reconstruct_volume
from .optimize import MultiplaneTarget, OptimizeConfig, optimize_multiplane

log = logging.getLogger(__name__)

N_LEVELS = 6
SCENES = ("astronaut", "chelsea", "coffee", "rocket", "immunohistochemistry",
          "hubble_deep_field", "retina", "colorwheel")


@dataclass
class RgbdSample:
    rgb: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim == 2:
            self.depth = self.depth[None]
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise ValueError(f"rgb must be (3, h, w), got {self.rgb.shape}")
        if self.depth.shape != (1, *self.rgb.shape[1:]):
            raise ValueError(f"depth shape {self.depth.shape} does not match rgb {self.rgb.shape}")
        for name, a in (("rgb", self.rgb), ("depth", self.depth)):
            if a.min() < 0 or a.max() > 1:
                raise ValueError(f"{name} values must lie in [0, 1]")


def load_rgbd(rgb_png, depth_pfm) -> RgbdSample:
    depth = load_pfm(depth_pfm)[:1].astype(np.float64)
    return RgbdSample(load_png(rgb_png), depth)


def synthetic_depth(height: int, width: int, seed: int = 0, smoothness: float = 0.12) -> np.ndarray:
    """Smooth random depth in [0, 1] with a front-to-back ramp, ``(1, h, w)``."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.normal(size=(height, width)),
                                    smoothness * min(height, width), mode="wrap")
    noise = (noise - noise.min()) / (np.ptp(noise) or 1.0)
    ramp = np.linspace(0, 1, height)[:, None] * np.ones((1, width))
    depth = 0.6 * noise + 0.4 * ramp
    depth = (depth - depth.min()) / (np.ptp(depth) or 1.0)
    return depth[None]


def natural_rgb(name: str, height: int, width: int) -> np.ndarray:
    """A bundled scikit-image photograph resized to ``(3, h, w)`` in [0, 1]."""
    from skimage import data, transform

    image = getattr(data, name)()
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=-1)
    image = transform.resize(image[..., :3], (height, width), anti_aliasing=True)
    return np.clip(np.moveaxis(image, -1, 0), 0.0, 1.0)


def demo_samples(n: int, height: int, width: int, seed: int = 0) -> list[RgbdSample]:
    """``n`` RGB-D samples from bundled photographs with synthetic depth."""
    return [RgbdSample(natural_rgb(SCENES[i % len(SCENES)], height, width),
                       synthetic_depth(height, width, seed + i))
            for i in range(n)]


# --- depth levels and focal surfaces ------------------------------------------------

def depth_levels(depth: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    """Level index per pixel: ``[j/n, (j+1)/n)`` maps to ``j``, top bin closed."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    depth = np.asarray(depth, dtype=np.float64)
    if depth.min() < 0 or depth.max() > 1:
        raise ValueError("depth must lie in [0, 1]")
    return np.minimum(np.floor(depth * n_levels), n_levels - 1).astype(np.int64)


def quantize_depth(depth: np.ndarray, n_levels: int = N_LEVELS) -> list[np.ndarray]:
    """Binary masks, one per depth level, partitioning the image."""
    levels = depth_levels(depth, n_levels)
    return [(levels == j).astype(np.float64) for j in range(n_levels)]


def _check_partition(masks: Sequence[np.ndarray]) -> np.ndarray:
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in masks])
    if not np.all((stack == 0) | (stack == 1)) or not np.all(stack.sum(axis=0) == 1):
        raise ValueError("level masks must be binary and partition the image")
    return stack


def level_to_surface(levels: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    """Normalized focal-surface value of each plane index."""
    return levels / (n_levels - 1) if n_levels > 1 else np.zeros_like(levels, dtype=np.float64)


def surface_levels(surface: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    """Plane index of each focal-surface value; inverse of :func:`level_to_surface`."""
    return np.rint(np.asarray(surface) * (n_levels - 1)).astype(np.int64)


def generate_focal_surface(level_masks: Sequence[np.ndarray], seed: int) -> np.ndarray:
    """Random focal surface ``(1, h, w)`` with values in ``{j / (n-1)}``.

    Each connected region of each level mask gets one plane index drawn
    uniformly from the ``n`` levels.
    """
    stack = _check_partition(level_masks)
    n = stack.shape[0]
    rng = np.random.default_rng(seed)
    levels = np.zeros(stack.shape[1:], dtype=np.int64)
    for mask in stack:
        labels, count = ndimage.label(mask.reshape(mask.shape[-2:]) if mask.ndim == 3 else mask)
        draws = rng.integers(0, n, size=count)
        for region, level in enumerate(draws, start=1):
            levels[(labels == region).reshape(levels.shape)] = level
    return level_to_surface(levels, n).reshape(stack.shape[1:])


def in_focus_restoration(plane_images: Sequence[np.ndarray], surface: np.ndarray,
                         scene_level_masks: Sequence[np.ndarray]
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Merge plane reconstructions along a focal surface.

    Returns the target image, taking each pixel from the plane the surface
    selects, and the mask of pixels where that plane is the scene's own
    depth level.
    """
    n = len(plane_images)
    if len(scene_level_masks) != n:
        raise ValueError(f"{n} plane images but {len(scene_level_masks)} depth levels")
    planes = np.stack([np.asarray(p, dtype=np.float64) for p in plane_images])
    scene = np.argmax(_check_partition(scene_level_masks), axis=0)
    chosen = surface_levels(surface, n)
    if chosen.shape != scene.shape or chosen.min() < 0 or chosen.max() >= n:
        raise ValueError("focal surface does not match the plane set")
    rows, cols = np.indices(chosen.shape[-2:])
    image = planes[chosen[0], :, rows, cols]
    image = np.moveaxis(image, -1, 0)
    mask = (chosen == scene).astype(np.float64)
    return image, mask


def defocus_targets(rgb: np.ndarray, level_masks: Sequence[np.ndarray],
                    blur_per_level: float = 1.0) -> MultiplaneTarget:
    """Per-plane targets: sharp where the scene sits on the plane, blurred elsewhere.

    Blur sigma (pixels) grows linearly with the level distance.
    """
    stack = _check_partition(level_masks)
    n = stack.shape[0]
    blurred = {0: rgb}
    for d in range(1, n):
        sigma = blur_per_level * d
        blurred[d] = ndimage.gaussian_filter(rgb, (0, sigma, sigma), mode="nearest")
    images = []
    for p in range(n):
        images.append(sum(stack[j] * blurred[abs(j - p)] for j in range(n)))
    return MultiplaneTarget(images, [stack[p] for p in range(n)])


# --- whole pipeline -----------------------------------------------------------------

@dataclass(frozen=True)
class GenerationConfig:
    surfaces_per_image: int = 5
    distances: tuple[float, ...] = (0.0, 10.0)
    iterations: int = 100
    reduced_fraction: float = 0.2
    lr: float = 0.1
    blur_per_level: float = 1.0

    @property
    def reduced_iterations(self) -> int:
        return max(1, int(round(self.iterations * self.reduced_fraction)))


@dataclass(frozen=True)
class DatasetRecord:
    hologram: str
    surface: str
    target: str
    mask: str
    distance: float
    seed: int

    def to_line(self) -> str:
        return (f"hologram={self.hologram} surface={self.surface} target={self.target} "
                f"mask={self.mask} distance={self.distance!r} seed={self.seed}")

    @classmethod
    def from_line(cls, line: str) -> "DatasetRecord":
        fields = dict(part.split("=", 1) for part in line.split())
        return cls(fields["hologram"], fields["surface"], fields["target"], fields["mask"],
                   float(fields["distance"]), int(fields["seed"]))


def config_at_distance(config: OpticalConfig, distance: float) -> OpticalConfig:
    """Same plane offsets, shifted so the volume is centered at ``distance``."""
    shift = distance - config.base_distance
    return dataclasses.replace(config, base_distance=distance,
                               volume_planes=tuple(p + shift for p in config.volume_planes))


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def generate_dataset(samples: Sequence[RgbdSample], config: OpticalConfig, out_dir,
                     gen: GenerationConfig = GenerationConfig(), seed: int = 0
                     ) -> list[DatasetRecord]:
    """Run the pipeline and write the dataset directory; returns its records."""
    if not samples:
        raise ValueError("no input samples")
    n_levels = config.n_planes
    out = Path(out_dir)
    for sub in ("holograms", "surfaces", "targets", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    records = []
    for i, sample in enumerate(samples):
        if sample.rgb.shape[1:] != config.shape:
            raise ValueError(f"sample {i} shape {sample.rgb.shape[1:]} != config {config.shape}")
        level_masks = quantize_depth(sample.depth, n_levels)
        targets = defocus_targets(sample.rgb, level_masks, gen.blur_per_level)
        for di, distance in enumerate(gen.distances):
            cfg = config_at_distance(config, distance)
            opt = OptimizeConfig(iterations=gen.reduced_iterations, lr=gen.lr,
                                 seed=_seed(seed, i, di))
            hologram = optimize_multiplane(targets, cfg, opt).hologram
            planes = reconstruct_volume(hologram, cfg)
            holo_rel = f"holograms/{i:04d}_d{di}.pfm"
            _write(out / holo_rel, save_pfm, hologram)
            for s in range(gen.surfaces_per_image):
                rec_seed = _seed(seed, i, di, s)
                surface = generate_focal_surface(level_masks, rec_seed)
                image, mask = in_focus_restoration(planes, surface, level_masks)
                stem = f"{i:04d}_d{di}_s{s}"
                rec = DatasetRecord(holo_rel, f"surfaces/{stem}.pfm", f"targets/{stem}.pfm",
                                    f"masks/{stem}.png", float(distance), rec_seed)
                _write(out / rec.surface, save_pfm, surface)
                _write(out / rec.target, save_pfm, image)
                _write(out / rec.mask, save_mask_png, mask)
                records.append(rec)
        log.info("sample %d done (%d records so far)", i, len(records))

    with open(out / "manifest.txt", "w") as f:
        for rec in records:
            f.write(rec.to_line() + "\n")
    return records


def _write(path: Path, writer, array) -> None:
    try:
        writer(path, array)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def load_dataset(directory) -> list[tuple[np.ndarray, ReconstructionTarget]]:
    """Read a generated dataset as (hologram, target) training pairs."""
    root = Path(directory)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.txt in {root}")
    pairs = []
    holograms: dict[str, np.ndarray] = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        rec = DatasetRecord.from_line(line)
        if rec.hologram not in holograms:
            holograms[rec.hologram] = load_pfm(root / rec.hologram).astype(np.float64)
        target = ReconstructionTarget(load_pfm(root / rec.target).astype(np.float64),
                                      load_pfm(root / rec.surface).astype(np.float64),
                                      load_mask_png(root / rec.mask))
        pairs.append((holograms[rec.hologram], target))
    return pairs


def dataset_digest(directory) -> str:
    """SHA-256 over every file in the dataset directory, path-ordered."""
    import hashlib

    root = Path(directory)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(os.fspath(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()
