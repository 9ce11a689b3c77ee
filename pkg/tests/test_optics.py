import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focalholo.fileio import load_kernel, save_kernel
from focalholo.optics import (ComplexField, OpticalConfig, PassCounter, asm_transfer,
                              build_asm_kernel, default_volume_planes, intensity,
                              phase_to_field, propagate, reconstruct_volume)

PITCH = 3.74
WAVELENGTHS = (638.0, 520.0, 420.0)


def rand_field(shape, wavelength, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return ComplexField(data, wavelength, PITCH)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# frozen: cos/sin of 2*pi*z/lambda evaluated at 30 digits
PLANE_WAVE = [
    (520.0, 1.0, 0.8854560256532099 + 0.46472317204376856j),
    (638.0, -2.5, -0.9995635853693057 - 0.02954046045102869j),
    (420.0, 0.1, 0.826238774315948 + 0.5633200580636907j),
]


@pytest.mark.parametrize("wavelength,z,expected", PLANE_WAVE)
def test_plane_wave_picks_up_dc_phase(wavelength, z, expected):
    field = ComplexField(np.ones((16, 16)), wavelength, PITCH)
    kernel = asm_transfer((16, 16), PITCH, wavelength, z)
    out = propagate(field, kernel)
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-9)


def test_default_planes_span_six_mm():
    np.testing.assert_allclose(default_volume_planes(10.0), [7.0, 8.2, 9.4, 10.6, 11.8, 13.0])
    cfg = OpticalConfig()
    assert cfg.n_planes == 6 and cfg.wavelengths == WAVELENGTHS and cfg.pixel_pitch == PITCH


def test_zero_distance_kernel_is_identity():
    k = asm_transfer((8, 8), PITCH, 520.0, 0.0)
    assert np.all(k.transfer == 1) and k.band_mask.all()
    for lam in WAVELENGTHS:
        f = rand_field((128, 128), lam, seed=3)
        out = propagate(f, asm_transfer((128, 128), PITCH, lam, 0.0))
        assert rel(out.data, f.data) <= 1e-12


def test_evanescent_frequencies_removed():
    # sub-wavelength pitch so the grid reaches past 1/lambda
    pitch, lam, n = 0.2, 520.0, 32
    k = asm_transfer((n, n), pitch, lam, 0.01, band_limit=False)
    f = np.fft.fftfreq(n, d=pitch * 1e-6)
    radial = f[:, None] ** 2 + f[None, :] ** 2
    expected = radial <= (1 / (lam * 1e-9)) ** 2
    np.testing.assert_array_equal(k.band_mask, expected)
    assert not expected.all()
    assert np.all(k.transfer[~expected] == 0)


def test_band_limit_matches_closed_form():
    n, lam, z = 64, 638.0, 10.0
    k = asm_transfer((n, n), PITCH, lam, z, band_limit=True)
    p, l, zz = PITCH * 1e-6, lam * 1e-9, z * 1e-3
    du = 1 / (n * p)
    limit = 1 / (l * np.sqrt((2 * du * zz) ** 2 + 1))
    f = np.abs(np.fft.fftfreq(n, d=p))
    expected = (f[:, None] <= limit) & (f[None, :] <= limit)
    np.testing.assert_array_equal(k.band_mask, expected)
    assert 0 < expected.sum() < n * n


@pytest.mark.parametrize("lam", WAVELENGTHS)
def test_parseval_without_band_limit(lam):
    f = rand_field((128, 128), lam, seed=1)
    out = propagate(f, asm_transfer((128, 128), PITCH, lam, 2.0, band_limit=False))
    e_in, e_out = np.sum(intensity(f)), np.sum(intensity(out))
    assert abs(e_out - e_in) / e_in <= 1e-6


@pytest.mark.parametrize("z", [0.5, 3.0, 10.0])
def test_band_limited_energy_never_grows(z):
    f = rand_field((64, 64), 520.0, seed=2)
    out = propagate(f, asm_transfer((64, 64), PITCH, 520.0, z))
    assert np.sum(intensity(out)) <= np.sum(intensity(f)) + 1e-9


@pytest.mark.parametrize("lam", WAVELENGTHS)
def test_round_trip_reciprocity(lam):
    f = rand_field((128, 128), lam, seed=4)
    fwd = asm_transfer((128, 128), PITCH, lam, 0.1, band_limit=False)
    back = asm_transfer((128, 128), PITCH, lam, -0.1, band_limit=False)
    assert rel(propagate(propagate(f, fwd), back).data, f.data) <= 1e-6


def test_round_trip_on_band_limited_subspace():
    lam, z = 520.0, 5.0
    fwd = asm_transfer((64, 64), PITCH, lam, z)
    back = asm_transfer((64, 64), PITCH, lam, -z)
    np.testing.assert_array_equal(fwd.band_mask, back.band_mask)
    raw = rand_field((64, 64), lam, seed=5).data
    projected = np.fft.ifft2(np.fft.fft2(raw) * fwd.band_mask)
    f = ComplexField(projected, lam, PITCH)
    assert rel(propagate(propagate(f, fwd), back).data, projected) <= 1e-6


def test_linearity_and_zero_field():
    k = asm_transfer((32, 32), PITCH, 420.0, 1.5)
    f, g = rand_field((32, 32), 420.0, 6), rand_field((32, 32), 420.0, 7)
    a, b = 0.3 - 2j, 1.7
    lhs = propagate(ComplexField(a * f.data + b * g.data, 420.0, PITCH), k).data
    rhs = a * propagate(f, k).data + b * propagate(g, k).data
    assert rel(lhs, rhs) <= 1e-10
    zero = propagate(ComplexField(np.zeros((32, 32)), 420.0, PITCH), k)
    assert np.all(zero.data == 0)


def test_propagation_is_deterministic_and_pure():
    k = asm_transfer((32, 32), PITCH, 638.0, -3.0)
    f = rand_field((32, 32), 638.0, 8)
    before = f.data.copy()
    a, b = propagate(f, k).data, propagate(f, k).data
    assert np.array_equal(a, b)
    assert np.array_equal(f.data, before)


def test_mismatches_rejected():
    f = rand_field((16, 16), 520.0)
    with pytest.raises(ValueError, match="wavelength"):
        propagate(f, asm_transfer((16, 16), PITCH, 638.0, 1.0))
    with pytest.raises(ValueError, match="incompatible"):
        propagate(f, asm_transfer((16, 24), PITCH, 520.0, 1.0))
    with pytest.raises(ValueError):
        ComplexField(np.full((4, 4), np.nan), 520.0, PITCH)
    with pytest.raises(ValueError):
        asm_transfer((4, 4), PITCH, 520.0, float("inf"))


def test_padding_extends_kernel_and_preserves_field_shape():
    cfg = OpticalConfig(width=16, height=16, padding=2)
    k = build_asm_kernel(cfg, 1, 2.0)
    assert k.shape == (32, 32)
    out = propagate(phase_to_field(np.zeros((3, 16, 16)), 1, cfg), k)
    assert out.shape == (16, 16)


def test_phase_to_field_examples():
    cfg = OpticalConfig(width=8, height=8)
    h = np.zeros((3, 8, 8))
    np.testing.assert_array_equal(phase_to_field(h, 0, cfg).data, 1 + 0j)
    h[1] = np.pi
    np.testing.assert_allclose(phase_to_field(h, 1, cfg).data, -1 + 0j, atol=1e-15)
    h[2, 3, 4] = np.pi / 2
    assert abs(phase_to_field(h, 2, cfg).data[3, 4] - 1j) < 1e-15
    with pytest.raises(ValueError):
        phase_to_field(h, 3, cfg)


def test_intensity_examples():
    assert np.all(intensity(np.ones((3, 3), complex)) == 1)
    f = np.zeros((2, 2), complex)
    f[1, 0] = 3 + 4j
    assert intensity(f)[1, 0] == 25 and intensity(f).sum() == 25


def test_reconstruct_volume_counts_passes():
    cfg = OpticalConfig(width=16, height=16)
    c = PassCounter()
    images = reconstruct_volume(np.zeros((3, 16, 16)), cfg, c)
    assert c.value == 18 and len(images) == 6
    cfg2 = OpticalConfig(width=16, height=16, volume_planes=(1.0, 2.0))
    c.reset()
    reconstruct_volume(np.zeros((3, 16, 16)), cfg2, c)
    assert c.value == 6


def test_single_plane_at_zero_reconstructs_ones():
    cfg = OpticalConfig(width=16, height=16, volume_planes=(0.0,))
    (image,) = reconstruct_volume(np.zeros((3, 16, 16)), cfg)
    np.testing.assert_allclose(image, 1.0, atol=1e-15)


def test_pass_counter_thread_safe():
    c = PassCounter()
    threads = [threading.Thread(target=lambda: [c.add(1) for _ in range(2000)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert c.value == 16000


def test_kernel_file_round_trip(tmp_path):
    k = asm_transfer((24, 20), PITCH, 520.0, 4.0)
    path = tmp_path / "k.bin"
    save_kernel(path, k)
    data = path.read_bytes()
    assert data[:3] == b"ASK" and len(data) == 16 + 24 * 20 * 8 + (24 * 20 + 7) // 8
    back = load_kernel(path)
    np.testing.assert_array_equal(back.band_mask, k.band_mask)
    np.testing.assert_allclose(back.transfer, k.transfer, atol=1e-6)
    assert back.wavelength == 520.0 and back.distance == 4.0


@settings(max_examples=30, deadline=None)
@given(z=st.floats(-5, 5), lam=st.sampled_from(WAVELENGTHS), seed=st.integers(0, 10 ** 6))
def test_property_band_limited_propagation_contracts(z, lam, seed):
    f = rand_field((16, 16), lam, seed)
    out = propagate(f, asm_transfer((16, 16), PITCH, lam, z))
    assert np.sum(intensity(out)) <= np.sum(intensity(f)) * (1 + 1e-12) + 1e-9
