"""Image quality metrics."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

PSNR_CAP = 100.0


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB for identical images."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak ** 2 / mse))


def ssim(a, b, peak: float = 1.0, sigma: float = 1.5, win_size: int = 11) -> float:
    """Single-scale SSIM with a Gaussian window, averaged over channels.

    Accepts ``(H, W)`` or ``(C, H, W)``. Statistics use population
    (co)variances and the mean is taken over pixels at least half a window
    from the border.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    radius = (win_size - 1) // 2
    truncate = radius / sigma

    def blur(img):
        return gaussian_filter(img, sigma, truncate=truncate, mode="reflect")

    scores = []
    for x, y in zip(a, b):
        mx, my = blur(x), blur(y)
        vx = blur(x * x) - mx * mx
        vy = blur(y * y) - my * my
        cov = blur(x * y) - mx * my
        smap = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
        if min(smap.shape) > 2 * radius:
            smap = smap[radius:-radius, radius:-radius]
        scores.append(smap.mean())
    return float(np.mean(scores))
