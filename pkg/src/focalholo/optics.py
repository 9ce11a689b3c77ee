"""Scalar fields and band-limited angular spectrum propagation.

Units follow the display hardware conventions: wavelengths in nm, pixel
pitch in um, propagation distances in mm. Arrays are indexed
``[row, column]`` so a field has shape ``(height, width)``.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NM = 1e-9
UM = 1e-6
MM = 1e-3


def default_volume_planes(base_distance: float = 0.0, n_planes: int = 6,
                          depth: float = 6.0) -> tuple[float, ...]:
    """Evenly spaced plane distances (mm) spanning ``depth`` around ``base_distance``."""
    if n_planes == 1:
        return (float(base_distance),)
    planes = base_distance + np.linspace(-depth / 2, depth / 2, n_planes)
    return tuple(float(p) for p in planes)


@dataclass(frozen=True)
class OpticalConfig:
    """Display geometry shared by every propagation.

    ``wavelengths`` are ordered red, green, blue to match hologram channels.
    ``padding`` is the zero-padding factor applied before the FFT; 1 means
    the convolution is circular.
    """

    width: int = 64
    height: int = 64
    wavelengths: tuple[float, float, float] = (638.0, 520.0, 420.0)
    pixel_pitch: float = 3.74
    volume_planes: Optional[tuple[float, ...]] = None
    base_distance: float = 0.0
    band_limit: bool = True
    padding: int = 1

    def __post_init__(self):
        if self.volume_planes is None:
            object.__setattr__(self, "volume_planes",
                               default_volume_planes(self.base_distance))
        object.__setattr__(self, "wavelengths",
                           tuple(float(w) for w in self.wavelengths))
        object.__setattr__(self, "volume_planes",
                           tuple(float(p) for p in self.volume_planes))
        if len(self.wavelengths) != 3:
            raise ValueError("exactly three wavelengths are required")
        if any(not (w > 0 and math.isfinite(w)) for w in self.wavelengths):
            raise ValueError("wavelengths must be positive")
        if not (self.pixel_pitch > 0 and math.isfinite(self.pixel_pitch)):
            raise ValueError("pixel_pitch must be positive")
        if len(self.volume_planes) < 1:
            raise ValueError("at least one volume plane is required")
        if any(b <= a for a, b in zip(self.volume_planes, self.volume_planes[1:])):
            raise ValueError("volume_planes must be strictly increasing")
        if self.width % 8 or self.height % 8 or self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive multiples of 8")
        if int(self.padding) != self.padding or self.padding < 1:
            raise ValueError("padding must be an integer >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_planes(self) -> int:
        return len(self.volume_planes)


@dataclass(frozen=True)
class ComplexField:
    data: np.ndarray
    wavelength: float
    pixel_pitch: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError(f"field must be 2D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class PropagationKernel:
    """Frequency-domain transfer function in FFT ordering."""

    transfer: np.ndarray
    distance: float
    wavelength: float
    band_mask: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.transfer.shape


class PassCounter:
    """Thread-safe tally of propagation passes or model inferences."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._value += n

    @property
    def value(self) -> int:
        with self._lock:
            return self._value

    def reset(self) -> None:
        with self._lock:
            self._value = 0


def _band_limits(n_rows: int, n_cols: int, pitch: float, wavelength: float,
                 z: float) -> tuple[float, float]:
    # Matsushima & Shimobaba band limit; du is the frequency step of the
    # (possibly padded) sampling window.
    du_y = 1.0 / (n_rows * pitch)
    du_x = 1.0 / (n_cols * pitch)
    lim_y = 1.0 / (wavelength * math.sqrt((2.0 * du_y * z) ** 2 + 1.0))
    lim_x = 1.0 / (wavelength * math.sqrt((2.0 * du_x * z) ** 2 + 1.0))
    return lim_y, lim_x


def asm_transfer(shape: tuple[int, int], pixel_pitch: float, wavelength: float,
                 distance: float, band_limit: bool = True) -> PropagationKernel:
    """Angular spectrum transfer function for an arbitrary grid.

    Parameters
    ----------
    shape : (rows, cols) of the sampling window, padding included
    pixel_pitch : um
    wavelength : nm
    distance : mm, may be negative
    band_limit : apply the band-limited ASM window
    """
    if not math.isfinite(distance):
        raise ValueError(f"propagation distance must be finite, got {distance}")
    rows, cols = shape
    if distance == 0:
        ones = np.ones(shape, dtype=np.complex128)
        return PropagationKernel(ones, 0.0, wavelength, np.ones(shape, dtype=bool))

    pitch = pixel_pitch * UM
    lam = wavelength * NM
    z = distance * MM
    fy = np.fft.fftfreq(rows, d=pitch)[:, None]
    fx = np.fft.fftfreq(cols, d=pitch)[None, :]
    arg = 1.0 / lam ** 2 - fx ** 2 - fy ** 2
    mask = arg >= 0
    if band_limit:
        lim_y, lim_x = _band_limits(rows, cols, pitch, lam, z)
        mask &= (np.abs(fy) <= lim_y) & (np.abs(fx) <= lim_x)
    kz = np.sqrt(np.where(mask, arg, 0.0))
    transfer = np.where(mask, np.exp(1j * 2 * np.pi * z * kz), 0.0)
    return PropagationKernel(transfer.astype(np.complex128), float(distance),
                             float(wavelength), mask)


def build_asm_kernel(config: OpticalConfig, color_index: int,
                     distance: float) -> PropagationKernel:
    """Transfer function for one color primary over ``distance`` mm."""
    if color_index not in (0, 1, 2):
        raise ValueError(f"color_index must be 0, 1 or 2, got {color_index}")
    shape = (config.height * config.padding, config.width * config.padding)
    return asm_transfer(shape, config.pixel_pitch, config.wavelengths[color_index],
                        distance, band_limit=config.band_limit)


def _pad(data: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if data.shape == shape:
        return data
    rows, cols = data.shape
    out = np.zeros(shape, dtype=data.dtype)
    r0 = (shape[0] - rows) // 2
    c0 = (shape[1] - cols) // 2
    out[r0:r0 + rows, c0:c0 + cols] = data
    return out


def _crop(data: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if data.shape == shape:
        return data
    r0 = (data.shape[0] - shape[0]) // 2
    c0 = (data.shape[1] - shape[1]) // 2
    return data[r0:r0 + shape[0], c0:c0 + shape[1]]


def apply_transfer(data: np.ndarray, transfer: np.ndarray) -> np.ndarray:
    """Multiply the spectrum of ``data`` by ``transfer``, padding if needed.

    Works on raw arrays; shared by :func:`propagate` and the adjoint used
    for hologram gradients (pass ``transfer.conj()``).
    """
    if transfer.shape[0] < data.shape[0] or transfer.shape[1] < data.shape[1]:
        raise ValueError(f"kernel shape {transfer.shape} smaller than field {data.shape}")
    padded = _pad(data, transfer.shape)
    out = np.fft.ifft2(np.fft.fft2(padded) * transfer)
    return _crop(out, data.shape)


def propagate(field: ComplexField, kernel: PropagationKernel,
              counter: Optional[PassCounter] = None) -> ComplexField:
    """Propagate ``field`` by multiplying its spectrum with ``kernel``."""
    if not math.isclose(field.wavelength, kernel.wavelength, rel_tol=1e-12):
        raise ValueError(f"wavelength mismatch: field {field.wavelength} nm, "
                         f"kernel {kernel.wavelength} nm")
    rows, cols = field.shape
    krows, kcols = kernel.shape
    if krows % rows or kcols % cols or krows // rows != kcols // cols:
        raise ValueError(f"field shape {field.shape} incompatible with kernel {kernel.shape}")
    if counter is not None:
        counter.add(1)
    return ComplexField(apply_transfer(field.data, kernel.transfer),
                        field.wavelength, field.pixel_pitch)


def phase_to_field(hologram: np.ndarray, color_index: int,
                   config: OpticalConfig) -> ComplexField:
    """Unit-amplitude field carrying one channel of a phase hologram."""
    if color_index not in (0, 1, 2):
        raise ValueError(f"color_index must be 0, 1 or 2, got {color_index}")
    hologram = np.asarray(hologram, dtype=np.float64)
    if hologram.shape != (3, *config.shape):
        raise ValueError(f"hologram shape {hologram.shape} does not match "
                         f"(3, {config.height}, {config.width})")
    return ComplexField(np.exp(1j * hologram[color_index]),
                        config.wavelengths[color_index], config.pixel_pitch)


def intensity(field: ComplexField | np.ndarray) -> np.ndarray:
    data = field.data if isinstance(field, ComplexField) else np.asarray(field)
    return data.real ** 2 + data.imag ** 2


def volume_kernels(config: OpticalConfig,
                   planes: Optional[Sequence[float]] = None) -> list[list[PropagationKernel]]:
    """Kernels indexed ``[plane][color]`` for the configured volume."""
    planes = config.volume_planes if planes is None else planes
    return [[build_asm_kernel(config, c, z) for c in range(3)] for z in planes]


def reconstruct_volume(hologram: np.ndarray, config: OpticalConfig,
                       counter: Optional[PassCounter] = None,
                       kernels: Optional[list[list[PropagationKernel]]] = None
                       ) -> list[np.ndarray]:
    """Full-color intensity at every volume plane, one ``(3, h, w)`` image each.

    Costs ``3 * n_planes`` propagation passes, recorded on ``counter``.
    """
    if kernels is None:
        kernels = volume_kernels(config)
    fields = [phase_to_field(hologram, c, config) for c in range(3)]
    images = []
    for plane_kernels in kernels:
        image = np.stack([intensity(propagate(fields[c], plane_kernels[c], counter))
                          for c in range(3)])
        images.append(image)
    return images
