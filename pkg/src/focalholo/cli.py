"""Command line entry point: ``focalholo <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bench import SCENARIOS, bench
from .dataset import (RgbdSample, defocus_targets, demo_samples, generate_dataset,
                      generate_focal_surface, in_focus_restoration, load_dataset, load_rgbd,
                      quantize_depth)
from .fileio import load_pfm, save_field_pfm, save_intensity_png, save_png, save_pfm
from .metrics import psnr, ssim
from .model import FocalSurfaceModel, ReconstructionTarget, model_forward, train
from .optics import (PassCounter, build_asm_kernel, phase_to_field, propagate,
                     reconstruct_volume)
from .optimize import init_phase, optimize_focal_surface, optimize_multiplane

log = logging.getLogger("focalholo")


def _values(args) -> dict:
    values = cfgmod.load_config(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hologram(args, optical, seed) -> np.ndarray:
    if args.hologram:
        hologram = load_pfm(args.hologram).astype(np.float64)
        if hologram.shape != (3, *optical.shape):
            raise ValueError(f"hologram {args.hologram} has shape {hologram.shape}, "
                             f"config expects (3, {optical.height}, {optical.width})")
        return hologram
    return init_phase(optical, seed)


def _phase_pngs(out: Path, hologram: np.ndarray) -> None:
    wrapped = (np.mod(hologram + np.pi, 2 * np.pi)) / (2 * np.pi)
    for c, name in enumerate("rgb"):
        save_png(out / f"phase_{name}.png", wrapped[c])


def _sample(args, optical, seed) -> RgbdSample:
    if args.rgb and args.depth:
        sample = load_rgbd(args.rgb, args.depth)
        if sample.rgb.shape[1:] != optical.shape:
            raise ValueError(f"input {args.rgb} is {sample.rgb.shape[1:]}, config expects "
                             f"{optical.shape}")
        return sample
    if args.rgb or args.depth:
        raise ValueError("--rgb and --depth must be given together")
    return demo_samples(1, optical.height, optical.width, seed)[0]


def cmd_propagate(args, values) -> None:
    optical = cfgmod.optical_config(values)
    seed = values.get("seed", 0)
    hologram = _hologram(args, optical, seed)
    out = _out_dir(args)
    counter = PassCounter()
    for c, name in enumerate("rgb"):
        kernel = build_asm_kernel(optical, c, args.distance)
        field = propagate(phase_to_field(hologram, c, optical), kernel, counter)
        save_field_pfm(out / f"field_{name}", field)
        save_intensity_png(out / f"intensity_{name}.png", field)
    print(f"propagated 3 color fields by {args.distance} mm "
          f"({counter.value} passes) into {out}")


def cmd_reconstruct(args, values) -> None:
    optical = cfgmod.optical_config(values)
    hologram = _hologram(args, optical, values.get("seed", 0))
    out = _out_dir(args)
    counter = PassCounter()
    planes = reconstruct_volume(hologram, optical, counter)
    for i, (z, image) in enumerate(zip(optical.volume_planes, planes)):
        save_pfm(out / f"plane_{i}.pfm", image)
        save_png(out / f"plane_{i}.png", np.clip(image, 0, 1), gamma=2.2)
    print(f"reconstructed {len(planes)} planes with {counter.value} ASM passes into {out}")


def cmd_optimize(args, values) -> None:
    optical = cfgmod.optical_config(values)
    opt = cfgmod.optimize_config(values)
    if args.variant:
        opt.variant = args.variant
    if args.iterations is not None:
        opt.iterations = args.iterations
    sample = _sample(args, optical, opt.seed)
    levels = quantize_depth(sample.depth, optical.n_planes)
    targets = defocus_targets(sample.rgb, levels)
    counter = PassCounter()
    if opt.variant == "multiplane":
        result = optimize_multiplane(targets, optical, opt, counter=counter)
    else:
        if not args.model:
            raise ValueError("--model is required for the focal_surface variant")
        model = FocalSurfaceModel.load(args.model)
        n_surfaces = values.get("n_surfaces", 6)
        fs_targets = []
        for s in range(n_surfaces):
            surface = generate_focal_surface(levels, opt.seed + s)
            image, mask = in_focus_restoration(targets.images, surface, levels)
            fs_targets.append(ReconstructionTarget(image, surface, mask))
        result = optimize_focal_surface(fs_targets, model, optical, opt, counter=counter)
    out = _out_dir(args)
    save_pfm(out / "hologram.pfm", result.hologram)
    _phase_pngs(out, result.hologram)
    result.write_csv(out / "loss.csv")
    final = result.losses[-1] if result.losses else float("nan")
    print(f"{opt.variant}: {opt.iterations} iterations, {counter.value} forward passes, "
          f"final loss {final:.6g}; wrote {out}")


def cmd_gen_dataset(args, values) -> None:
    optical = cfgmod.optical_config(values)
    gen = cfgmod.generation_config(values)
    seed = values.get("seed", 0)
    n_images = args.n_images if args.n_images is not None else values.get("n_images", 8)
    samples = demo_samples(n_images, optical.height, optical.width, seed)
    out = _out_dir(args)
    records = generate_dataset(samples, optical, out, gen, seed)
    print(f"wrote {len(records)} records for {n_images} images to {out}")


def cmd_train(args, values) -> None:
    if not args.dataset:
        raise ValueError("--dataset is required")
    pairs = load_dataset(args.dataset)
    height, width = pairs[0][0].shape[1:]
    values = {**values, "height": height, "width": width}
    schedule = cfgmod.train_schedule(values)
    if args.epochs is not None:
        schedule.epochs = args.epochs
    model = FocalSurfaceModel(cfgmod.model_config(values), seed=schedule.seed)
    result = train(pairs, model, schedule)
    out = _out_dir(args)
    model.save(out / "model.bin")
    with open(out / "train_loss.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        writer.writerows([i, repr(v)] for i, v in enumerate(result.losses))
    print(f"trained {model.parameter_count()} parameters for {schedule.epochs} epochs, "
          f"loss {result.losses[0]:.6g} -> {result.losses[-1]:.6g}; wrote {out / 'model.bin'}")


def cmd_eval(args, values) -> None:
    import torch

    if not args.dataset or not args.model:
        raise ValueError("--dataset and --model are required")
    model = FocalSurfaceModel.load(args.model)
    pairs = load_dataset(args.dataset)
    out = _out_dir(args)
    rows = []
    with torch.no_grad():
        for i, (hologram, target) in enumerate(pairs):
            pred = model_forward(hologram, target.surface, model).numpy()
            rows.append((i, psnr(pred, target.image), ssim(pred, target.image)))
    with open(out / "eval.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["record", "psnr", "ssim"])
        writer.writerows(rows)
    print(f"{len(rows)} records: mean PSNR {np.mean([r[1] for r in rows]):.3f} dB, "
          f"mean SSIM {np.mean([r[2] for r in rows]):.4f}")


def cmd_bench(args, values) -> None:
    optical = cfgmod.optical_config(values)
    model = FocalSurfaceModel.load(args.model) if args.model else None
    iterations = args.iterations if args.iterations is not None else values.get("iterations", 50)
    report = bench(args.scenario, optical, model, iterations=iterations,
                   n_surfaces=values.get("n_surfaces", 6), seed=values.get("seed", 0),
                   lr=values.get("opt_lr", 0.1))
    out = _out_dir(args)
    report.write_csv(out / f"bench_{args.scenario}.csv")
    print(report.text())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    # global flags live on each subcommand so `focalholo train --seed 3` works
    parser = argparse.ArgumentParser(prog="focalholo",
                                     description="Focal-surface holography toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propagate", parents=[common], help="ASM-propagate a phase hologram")
    p.add_argument("--hologram", help="3-channel phase PFM (random phase if omitted)")
    p.add_argument("--distance", type=float, required=True, help="distance in mm")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("reconstruct-volume", parents=[common],
                       help="reconstruct every volume plane")
    p.add_argument("--hologram", help="3-channel phase PFM (random phase if omitted)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("optimize", parents=[common], help="optimize a phase-only hologram")
    p.add_argument("--variant", choices=("multiplane", "focal_surface"))
    p.add_argument("--rgb", help="RGB PNG (bundled photograph if omitted)")
    p.add_argument("--depth", help="depth PFM in [0, 1]")
    p.add_argument("--model", help="model checkpoint for the focal_surface variant")
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("gen-dataset", parents=[common], help="generate a focal-surface dataset")
    p.add_argument("--n-images", type=int)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", parents=[common], help="train the focal-surface model")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of a model on a dataset")
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="pass-count benchmark")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--model")
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, _values(args))
    except (ValueError, OSError, KeyError) as exc:
        print(f"focalholo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
