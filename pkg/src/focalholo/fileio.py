"""Readers and writers: PFM, 8-bit PNG, kernel files and tensor containers.

Images are channel-first ``(C, H, W)`` float arrays throughout the package.
PFM files are always written little-endian and bottom row first, as the
format prescribes.
"""
from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np
from PIL import Image

from .optics import ComplexField, PropagationKernel


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, path=None, offset: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.path = path
        self.offset = offset


def _as_chw(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        return image[None]
    if image.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W) image, got shape {image.shape}")
    return image


# --- PFM ------------------------------------------------------------------

def save_pfm(path, image: np.ndarray) -> None:
    image = _as_chw(image)
    channels, height, width = image.shape
    if channels not in (1, 3):
        raise ValueError(f"PFM stores 1 or 3 channels, got {channels}")
    header = b"PF\n" if channels == 3 else b"Pf\n"
    pixels = np.ascontiguousarray(np.flipud(np.moveaxis(image, 0, -1)), dtype="<f4")
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(pixels.tobytes())


def _read_token_line(buf: bytes, pos: int, name: str, path) -> tuple[str, int]:
    end = buf.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"truncated PFM header: missing {name}", path, pos)
    return buf[pos:end].decode("ascii", errors="replace").strip(), end + 1


def load_pfm(path) -> np.ndarray:
    """Read a PFM file into a ``(C, H, W)`` float32 array."""
    with open(path, "rb") as f:
        buf = f.read()
    ident, pos = _read_token_line(buf, 0, "identifier", path)
    if ident == "PF":
        channels = 3
    elif ident == "Pf":
        channels = 1
    else:
        raise FormatError(f"bad PFM identifier {ident!r}", path, 0)
    dims_at = pos
    dims, pos = _read_token_line(buf, pos, "dimensions", path)
    try:
        width, height = (int(v) for v in dims.split())
    except ValueError:
        raise FormatError(f"bad PFM dimensions {dims!r}", path, dims_at) from None
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PFM dimensions {dims!r}", path, dims_at)
    scale_at = pos
    scale_text, pos = _read_token_line(buf, pos, "scale", path)
    try:
        scale = float(scale_text)
    except ValueError:
        raise FormatError(f"bad PFM scale {scale_text!r}", path, scale_at) from None
    dtype = "<f4" if scale < 0 else ">f4"
    count = width * height * channels
    if len(buf) - pos < 4 * count:
        raise FormatError(f"truncated PFM data: expected {4 * count} bytes, "
                          f"found {len(buf) - pos}", path, len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    data = data.reshape(height, width, channels)
    return np.ascontiguousarray(np.moveaxis(np.flipud(data), -1, 0).astype(np.float32))


def save_field_pfm(stem, field: ComplexField) -> tuple[str, str]:
    """Write a complex field as ``<stem>_re.pfm`` and ``<stem>_im.pfm``."""
    stem = os.fspath(stem)
    paths = (f"{stem}_re.pfm", f"{stem}_im.pfm")
    save_pfm(paths[0], field.data.real)
    save_pfm(paths[1], field.data.imag)
    return paths


def load_field_pfm(stem, wavelength: float, pixel_pitch: float) -> ComplexField:
    stem = os.fspath(stem)
    re = load_pfm(f"{stem}_re.pfm")[0].astype(np.float64)
    im = load_pfm(f"{stem}_im.pfm")[0].astype(np.float64)
    return ComplexField(re + 1j * im, wavelength, pixel_pitch)


# --- PNG ------------------------------------------------------------------

def quantize_8bit(image: np.ndarray) -> np.ndarray:
    """Round-half-up quantization of [0, 1] values to bytes."""
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(path, image: np.ndarray, gamma: float = 1.0) -> None:
    """Save a ``(H, W)``, ``(1, H, W)`` or ``(3, H, W)`` image in [0, 1]."""
    image = _as_chw(np.asarray(image, dtype=np.float64))
    if gamma != 1.0:
        image = np.clip(image, 0.0, None) ** (1.0 / gamma)
    data = quantize_8bit(image)
    if data.shape[0] == 1:
        Image.fromarray(data[0], mode="L").save(path)
    elif data.shape[0] == 3:
        Image.fromarray(np.moveaxis(data, 0, -1), mode="RGB").save(path)
    else:
        raise ValueError(f"PNG stores 1 or 3 channels, got {data.shape[0]}")


def load_png(path) -> np.ndarray:
    """Load a PNG as float64 ``(C, H, W)`` in [0, 1]."""
    with Image.open(path) as im:
        if im.mode == "1":
            return np.asarray(im, dtype=np.float64)[None]
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        data = np.asarray(im, dtype=np.float64) / 255.0
    return data[None] if data.ndim == 2 else np.moveaxis(data, -1, 0)


def save_mask_png(path, mask: np.ndarray) -> None:
    mask = _as_chw(mask)[0]
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must be binary")
    # building mode "1" directly from a bool array is unreliable across Pillow versions
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").convert("1").save(path)


def load_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return (np.asarray(im.convert("L")) > 0).astype(np.float64)[None]


def save_intensity_png(path, field: ComplexField, gamma: float = 2.2) -> None:
    """Visualize a field: intensity normalized to its peak, then gamma."""
    inten = field.data.real ** 2 + field.data.imag ** 2
    peak = inten.max()
    save_png(path, inten / peak if peak > 0 else inten, gamma=gamma)


# --- propagation kernel file ------------------------------------------------

_KERNEL_MAGIC = b"ASK"
_KERNEL_VERSION = 1
# magic, version, rows, cols, distance (mm), wavelength (nm): 16 bytes
_KERNEL_HEADER = struct.Struct("<3sBHHff")


def save_kernel(path, kernel: PropagationKernel) -> None:
    rows, cols = kernel.shape
    header = _KERNEL_HEADER.pack(_KERNEL_MAGIC, _KERNEL_VERSION, rows, cols,
                                 kernel.distance, kernel.wavelength)
    interleaved = np.empty((rows, cols, 2), dtype="<f4")
    interleaved[..., 0] = kernel.transfer.real
    interleaved[..., 1] = kernel.transfer.imag
    with open(path, "wb") as f:
        f.write(header)
        f.write(interleaved.tobytes())
        f.write(np.packbits(kernel.band_mask.astype(bool).ravel()).tobytes())


def load_kernel(path) -> PropagationKernel:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < _KERNEL_HEADER.size:
        raise FormatError("truncated kernel header", path, len(buf))
    magic, version, rows, cols, distance, wavelength = _KERNEL_HEADER.unpack_from(buf)
    if magic != _KERNEL_MAGIC:
        raise FormatError(f"bad kernel magic {magic!r}", path, 0)
    if version != _KERNEL_VERSION:
        raise FormatError(f"unsupported kernel version {version}", path, 3)
    pos = _KERNEL_HEADER.size
    n = rows * cols
    need = pos + 8 * n + (n + 7) // 8
    if len(buf) < need:
        raise FormatError(f"truncated kernel data: expected {need} bytes", path, len(buf))
    pairs = np.frombuffer(buf, dtype="<f4", count=2 * n, offset=pos).reshape(rows, cols, 2)
    transfer = pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1].astype(np.float64)
    bits = np.frombuffer(buf, dtype=np.uint8, count=(n + 7) // 8, offset=pos + 8 * n)
    mask = np.unpackbits(bits, count=n).astype(bool).reshape(rows, cols)
    return PropagationKernel(transfer, float(distance), float(wavelength), mask)


# --- named tensor container ---------------------------------------------------

_TENSOR_MAGIC = b"FHTC"
_TENSOR_VERSION = 1
_TENSOR_HEADER = struct.Struct("<4sIII")  # magic, version, count, reserved


def save_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    """Write named arrays as little-endian float32 with shape metadata."""
    with open(path, "wb") as f:
        f.write(_TENSOR_HEADER.pack(_TENSOR_MAGIC, _TENSOR_VERSION, len(tensors), 0))
        for name, value in tensors.items():
            value = np.asarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<HB", len(encoded), value.ndim))
            f.write(encoded)
            f.write(struct.pack(f"<{value.ndim}I", *value.shape))
            f.write(np.ascontiguousarray(value).tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < _TENSOR_HEADER.size:
        raise FormatError("truncated container header", path, len(buf))
    magic, version, count, _ = _TENSOR_HEADER.unpack_from(buf)
    if magic != _TENSOR_MAGIC:
        raise FormatError(f"bad container magic {magic!r}", path, 0)
    if version != _TENSOR_VERSION:
        raise FormatError(f"unsupported container version {version}", path, 4)
    pos = _TENSOR_HEADER.size
    out = {}
    for _ in range(count):
        try:
            name_len, ndim = struct.unpack_from("<HB", buf, pos)
            pos += 3
            name = buf[pos:pos + name_len].decode("utf-8")
            pos += name_len
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
        except struct.error:
            raise FormatError("truncated tensor record", path, pos) from None
        size = int(np.prod(shape, dtype=np.int64))
        if len(buf) - pos < 4 * size:
            raise FormatError(f"truncated data for tensor {name!r}", path, pos)
        out[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
    return out
