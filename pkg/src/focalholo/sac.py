"""Spatially invariant, spatially varying and spatially adaptive convolution.

Shapes (no batch dimension):

* feature map ``x``: ``(c_in, h, w)``
* SI kernel ``w``: ``(c_out, c_in, k, k)``
* SV kernel ``v``: ``(h, w, c_in, k, k)``; a leading singleton output
  channel ``(1, h, w, c_in, k, k)`` is accepted and dropped
* SA kernel ``a``: ``(c_out, h, w, c_in, k, k)``

All three operators are cross-correlations over the centered window
``{-k//2 .. k//2}^2`` with stride 1 and zero padding, so the output has the
spatial size of the input.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_k(k: int) -> int:
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    return k


def _as_feature(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"feature map must be (channels, h, w), got shape {x.shape}")
    return x


def _as_sv(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 6:
        if v.shape[0] != 1:
            raise ValueError(f"SV kernel must have a single output channel, got {v.shape[0]}")
        v = v[0]
    if v.ndim != 5 or v.shape[-1] != v.shape[-2]:
        raise ValueError(f"SV kernel must be (h, w, c_in, k, k), got shape {v.shape}")
    _check_k(v.shape[-1])
    return v


def _as_si(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[-1] != w.shape[-2]:
        raise ValueError(f"SI kernel must be (c_out, c_in, k, k), got shape {w.shape}")
    _check_k(w.shape[-1])
    return w


def patches(x: np.ndarray, k: int) -> np.ndarray:
    """Zero-padded sliding windows, ``(c, h, w, k, k)``.

    ``patches(x, k)[c, i, j, a, b] == x[c, i + a - k//2, j + b - k//2]``
    (zero outside the image). Returned as a read-only view.
    """
    r = k // 2
    padded = np.pad(x, ((0, 0), (r, r), (r, r)))
    return sliding_window_view(padded, (k, k), axis=(1, 2))


def _fold(grad_patches: np.ndarray, k: int) -> np.ndarray:
    # adjoint of `patches`: scatter-add windows back onto the image
    c, h, w = grad_patches.shape[:3]
    r = k // 2
    out = np.zeros((c, h + 2 * r, w + 2 * r))
    for a in range(k):
        for b in range(k):
            out[:, a:a + h, b:b + w] += grad_patches[:, :, :, a, b]
    return out[:, r:r + h, r:r + w]


def si_conv(x, w) -> np.ndarray:
    """Standard convolution with one kernel shared across all positions."""
    x, w = _as_feature(x), _as_si(w)
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"kernel expects {w.shape[1]} input channels, input has {x.shape[0]}")
    k = w.shape[-1]
    return np.einsum("cqab,qxyab->cxy", w, patches(x, k), optimize=True)


def _check_sv(x: np.ndarray, v: np.ndarray) -> None:
    if v.shape[:2] != x.shape[1:]:
        raise ValueError(f"SV kernel spatial size {v.shape[:2]} != input size {x.shape[1:]}")
    if v.shape[2] != x.shape[0]:
        raise ValueError(f"SV kernel expects {v.shape[2]} input channels, input has {x.shape[0]}")


def sv_conv(x, v) -> np.ndarray:
    """Spatially varying convolution; the output has a single channel."""
    x, v = _as_feature(x), _as_sv(v)
    _check_sv(x, v)
    p = patches(x, v.shape[-1])
    return np.einsum("xyqab,qxyab->xy", v, p, optimize=True)[None]


def compose_sa_kernel(v, w) -> np.ndarray:
    """Materialize the SA kernel ``a[c, x, y] = v[x, y] * w[c]``.

    Memory grows as ``c_out * h * w * c_in * k^2``; use for testing only.
    """
    v, w = _as_sv(v), _as_si(w)
    if v.shape[2:] != w.shape[1:]:
        raise ValueError(f"SV kernel {v.shape} and SI kernel {w.shape} disagree in c_in or k")
    return v[None] * w[:, None, None]


def _sac_shapes(x, v, w):
    x, v, w = _as_feature(x), _as_sv(v), _as_si(w)
    _check_sv(x, v)
    if v.shape[2:] != w.shape[1:]:
        raise ValueError(f"SV kernel {v.shape} and SI kernel {w.shape} disagree in c_in or k")
    return x, v, w


def _modulated_patches(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # v * patches, laid out (h*w, c_in*k*k); same size as v, never c_out times it
    h, w_ = x.shape[1:]
    p = np.moveaxis(patches(x, v.shape[-1]), 0, 2)
    return (v * p).reshape(h * w_, -1)


def sac_forward(x, v, w) -> np.ndarray:
    """Spatially adaptive convolution without materializing the SA kernel."""
    x, v, w = _sac_shapes(x, v, w)
    c_out = w.shape[0]
    h, w_ = x.shape[1:]
    vp = _modulated_patches(x, v)
    return (w.reshape(c_out, -1) @ vp.T).reshape(c_out, h, w_)


def sac_backward(grad_out, x, v, w):
    """Reverse-mode gradients of :func:`sac_forward`.

    Returns ``(grad_x, grad_v, grad_w)`` shaped like ``x``, ``v`` (without
    the singleton output channel) and ``w``.
    """
    x, v, w = _sac_shapes(x, v, w)
    c_out = w.shape[0]
    h, w_ = x.shape[1:]
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (c_out, h, w_):
        raise ValueError(f"grad_out shape {grad_out.shape} != output shape {(c_out, h, w_)}")
    k = v.shape[-1]
    g = grad_out.reshape(c_out, h * w_)
    vp = _modulated_patches(x, v)
    grad_w = (g @ vp).reshape(w.shape)

    # dL/d(v*p) per position, shared by grad_v and grad_x
    gw = (g.T @ w.reshape(c_out, -1)).reshape(v.shape)
    p = np.moveaxis(patches(x, k), 0, 2)
    grad_v = gw * p
    grad_p = np.moveaxis(gw * v, 2, 0)
    return _fold(grad_p, k), grad_v, grad_w


def sv_backward(grad_out, x, v):
    """Reverse-mode gradients of :func:`sv_conv`: ``(grad_x, grad_v)``."""
    x, v = _as_feature(x), _as_sv(v)
    _check_sv(x, v)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (1, *x.shape[1:]):
        raise ValueError(f"grad_out shape {grad_out.shape} != output shape {(1, *x.shape[1:])}")
    k = v.shape[-1]
    g = grad_out[0][:, :, None, None, None]
    p = np.moveaxis(patches(x, k), 0, 2)
    return _fold(np.moveaxis(g * v, 2, 0), k), g * p


def sa_conv_reference(x, a) -> np.ndarray:
    """Brute-force convolution with a materialized SA kernel.

    Direct summation with explicit bounds checks; independent of the
    windowing used by the fast operators.
    """
    x = _as_feature(x)
    a = np.asarray(a, dtype=np.float64)
    c_out, h, w, c_in, k, _ = a.shape
    if (c_in, h, w) != x.shape:
        raise ValueError(f"SA kernel {a.shape} does not match input {x.shape}")
    r = k // 2
    out = np.zeros((c_out, h, w))
    for i in range(h):
        for j in range(w):
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        out[:, i, j] += a[:, i, j, :, di + r, dj + r] @ x[:, ii, jj]
    return out
