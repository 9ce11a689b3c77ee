"""Plain-text ``key=value`` configuration files.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Unknown keys are rejected so typos surface early.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

from .dataset import GenerationConfig
from .model import ModelConfig, TrainSchedule
from .optics import OpticalConfig, default_volume_planes
from .optimize import OptimizeConfig

_FLOAT_LIST = {"wavelengths", "volume_planes", "distances"}
_INT = {"width", "height", "padding", "seed", "epochs", "channels", "k", "iterations",
        "surfaces_per_image", "n_images", "decay_every", "n_planes", "n_surfaces",
        "gen_iterations"}
_FLOAT = {"pixel_pitch", "base_distance", "lr", "opt_lr", "scale", "alpha0", "alpha1",
          "decay", "reduced_fraction", "volume_depth", "blur_per_level"}
_BOOL = {"band_limit"}
_STR = {"variant"}
KNOWN_KEYS = _FLOAT_LIST | _INT | _FLOAT | _BOOL | _STR


def _parse_value(key: str, text: str) -> Any:
    try:
        if key in _FLOAT_LIST:
            return tuple(float(v) for v in text.split(",") if v.strip())
        if key in _INT:
            return int(text)
        if key in _FLOAT:
            return float(text)
        if key in _BOOL:
            lowered = text.lower()
            if lowered not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return lowered in ("1", "true", "yes")
    except ValueError:
        raise ValueError(f"bad value for {key}: {text!r}") from None
    return text


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, value)
    return values


def load_config(path) -> dict[str, Any]:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def optical_config(values: Mapping[str, Any]) -> OpticalConfig:
    base = values.get("base_distance", 0.0)
    planes = values.get("volume_planes")
    if planes is None:
        planes = default_volume_planes(base, values.get("n_planes", 6),
                                       values.get("volume_depth", 6.0))
    kwargs = dict(width=values.get("width", 64), height=values.get("height", 64),
                  volume_planes=planes, base_distance=base,
                  band_limit=values.get("band_limit", True), padding=values.get("padding", 1))
    if "wavelengths" in values:
        kwargs["wavelengths"] = values["wavelengths"]
    if "pixel_pitch" in values:
        kwargs["pixel_pitch"] = values["pixel_pitch"]
    return OpticalConfig(**kwargs)


def model_config(values: Mapping[str, Any]) -> ModelConfig:
    return ModelConfig(height=values.get("height", 32), width=values.get("width", 32),
                       channels=values.get("channels", 8), kernel_size=values.get("k", 3))


def train_schedule(values: Mapping[str, Any]) -> TrainSchedule:
    s = TrainSchedule()
    return TrainSchedule(epochs=values.get("epochs", s.epochs), lr=values.get("lr", s.lr),
                         decay_every=values.get("decay_every", s.decay_every),
                         decay=values.get("decay", s.decay), seed=values.get("seed", s.seed),
                         alpha0=values.get("alpha0", s.alpha0),
                         alpha1=values.get("alpha1", s.alpha1))


def optimize_config(values: Mapping[str, Any]) -> OptimizeConfig:
    o = OptimizeConfig()
    return OptimizeConfig(iterations=values.get("iterations", o.iterations),
                          lr=values.get("opt_lr", o.lr), scale=values.get("scale", o.scale),
                          seed=values.get("seed", o.seed),
                          alpha0=values.get("alpha0", o.alpha0),
                          alpha1=values.get("alpha1", o.alpha1),
                          variant=values.get("variant", o.variant))


def generation_config(values: Mapping[str, Any]) -> GenerationConfig:
    g = GenerationConfig()
    return GenerationConfig(
        surfaces_per_image=values.get("surfaces_per_image", g.surfaces_per_image),
        distances=values.get("distances", g.distances),
        iterations=values.get("gen_iterations", g.iterations),
        reduced_fraction=values.get("reduced_fraction", g.reduced_fraction),
        lr=values.get("opt_lr", g.lr),
        blur_per_level=values.get("blur_per_level", g.blur_per_level))
