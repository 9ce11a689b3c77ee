import subprocess
import sys

import numpy as np
import pytest

from focalholo import cli
from focalholo import config as cfgmod
from focalholo.bench import bench
from focalholo.fileio import load_pfm
from focalholo.optics import OpticalConfig

TINY = """\
# 16x16 toy setup
width = 16
height = 16
channels = 2
gen_iterations = 4
surfaces_per_image = 2
distances = 0
n_images = 2
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def test_parse_config_types_and_comments():
    values = cfgmod.parse_config("width=32  # px\nwavelengths = 638, 520, 420\n\nband_limit = no\n")
    assert values == {"width": 32, "wavelengths": (638.0, 520.0, 420.0), "band_limit": False}


def test_parse_config_errors():
    with pytest.raises(ValueError, match="unknown key"):
        cfgmod.parse_config("widht=3")
    with pytest.raises(ValueError, match="key=value"):
        cfgmod.parse_config("width")
    with pytest.raises(ValueError, match="bad value"):
        cfgmod.parse_config("width=abc")


def test_config_builders():
    values = cfgmod.parse_config("width=32\nheight=16\nbase_distance=10\nvolume_depth=3\n"
                                 "lr=0.001\nopt_lr=0.05\nepochs=7\nk=5\n")
    optical = cfgmod.optical_config(values)
    assert optical.shape == (16, 32)
    np.testing.assert_allclose(optical.volume_planes, np.linspace(8.5, 11.5, 6))
    assert cfgmod.train_schedule(values).lr == 0.001
    assert cfgmod.train_schedule(values).epochs == 7
    assert cfgmod.optimize_config(values).lr == 0.05
    assert cfgmod.model_config(values).kernel_size == 5
    assert cfgmod.generation_config(values).lr == 0.05


def test_bench_scenarios_counts():
    cfg = OpticalConfig(width=16, height=16)
    r = bench("simulate-volume", cfg)
    assert (r.asm_passes, r.model_inferences) == (18, 1)
    r = bench("optimize-multiplane", cfg, iterations=50)
    assert r.asm_passes == 900 and r.model_inferences == 0
    r = bench("optimize-focal", cfg, iterations=2, n_surfaces=6)
    assert r.model_inferences == 12 and r.asm_passes == 0
    assert "ASM passes" in r.text()
    with pytest.raises(ValueError):
        bench("nope", cfg)


def test_cli_help_lists_subcommands():
    out = subprocess.run([sys.executable, "-m", "focalholo.cli", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for name in ("propagate", "reconstruct-volume", "optimize", "gen-dataset", "train", "eval",
                 "bench"):
        assert name in out


def test_cli_end_to_end(tmp_path, tiny_config, capsys):
    c = ["--config", str(tiny_config)]
    out = tmp_path / "out"
    assert cli.main(["propagate", *c, "--distance", "2", "--out-dir", str(out / "p")]) == 0
    assert (out / "p" / "field_g_re.pfm").exists() and (out / "p" / "intensity_b.png").exists()

    assert cli.main(["reconstruct-volume", *c, "--out-dir", str(out / "v")]) == 0
    assert len(list((out / "v").glob("plane_*.pfm"))) == 6

    assert cli.main(["optimize", *c, "--iterations", "3", "--out-dir", str(out / "o")]) == 0
    holo = load_pfm(out / "o" / "hologram.pfm")
    assert holo.shape == (3, 16, 16)
    assert (out / "o" / "loss.csv").read_text().splitlines()[-1].endswith(",54")
    assert cli.main(["propagate", *c, "--distance", "1", "--hologram",
                     str(out / "o" / "hologram.pfm"), "--out-dir", str(out / "p2")]) == 0

    assert cli.main(["gen-dataset", *c, "--seed", "3", "--out-dir", str(out / "d")]) == 0
    assert len((out / "d" / "manifest.txt").read_text().splitlines()) == 4

    assert cli.main(["train", *c, "--dataset", str(out / "d"), "--epochs", "2",
                     "--out-dir", str(out / "t")]) == 0
    assert len((out / "t" / "train_loss.csv").read_text().splitlines()) == 3

    model = str(out / "t" / "model.bin")
    assert cli.main(["eval", *c, "--dataset", str(out / "d"), "--model", model,
                     "--out-dir", str(out / "e")]) == 0
    assert len((out / "e" / "eval.csv").read_text().splitlines()) == 5

    assert cli.main(["optimize", *c, "--variant", "focal_surface", "--model", model,
                     "--iterations", "2", "--out-dir", str(out / "f")]) == 0
    assert cli.main(["bench", *c, "--scenario", "optimize-focal", "--model", model,
                     "--iterations", "2", "--out-dir", str(out / "b")]) == 0
    assert "model inferences 12" in capsys.readouterr().out


def test_cli_failures_exit_nonzero(tmp_path, tiny_config, capsys):
    assert cli.main(["train", "--dataset", str(tmp_path / "none"), "--out-dir",
                     str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "error" in err
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=red\n")
    assert cli.main(["reconstruct-volume", "--config", str(bad)]) == 1
    assert cli.main(["optimize", "--config", str(tiny_config), "--variant", "focal_surface",
                     "--out-dir", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["bench", "--scenario", "bogus"])
    assert info.value.code != 0
