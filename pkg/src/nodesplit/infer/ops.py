"""Real-arithmetic layer kernels on H x W x C float arrays.

Accumulation is done in float64 and results are stored as float32, so the
same inputs always give the same bits.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .._pykernels import im2col
from ..netmodel import conv_padding


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int, padding: str,
           out_h: int, out_w: int) -> np.ndarray:
    kh, kw, cin, cout = w.shape
    pt = conv_padding(x.shape[0], out_h, kh, stride, padding)
    pl = conv_padding(x.shape[1], out_w, kw, stride, padding)
    cols = im2col(x.astype(np.float64), kh, kw, stride, pt, pl, out_h, out_w)
    y = cols @ w.reshape(kh * kw * cin, cout).astype(np.float64)
    if b is not None:
        y += b
    return y.reshape(out_h, out_w, cout).astype(np.float32)


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int) -> np.ndarray:
    """Transposed conv with output size in*stride ('same' convention)."""
    kh, kw, cin, cout = w.shape
    H, W, _ = x.shape
    fh, fw = (H - 1) * stride + kh, (W - 1) * stride + kw
    full = np.zeros((max(fh, H * stride), max(fw, W * stride), cout))
    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    for ky in range(kh):
        for kx in range(kw):
            full[ky: ky + (H - 1) * stride + 1: stride, kx: kx + (W - 1) * stride + 1: stride] += x64 @ w64[ky, kx]
    top = max(kh - stride, 0) // 2
    left = max(kw - stride, 0) // 2
    y = full[top: top + H * stride, left: left + W * stride]
    if b is not None:
        y = y + b
    return y.astype(np.float32)


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    y = x.reshape(-1).astype(np.float64) @ w.astype(np.float64)
    if b is not None:
        y += b
    return y.reshape(1, 1, -1).astype(np.float32)


def pool_windows(x: np.ndarray, k: tuple[int, int], stride: int, out_h: int, out_w: int, fill) -> np.ndarray:
    """(out_h, out_w, C, kh, kw) windows starting at multiples of stride; overhang filled."""
    kh, kw = k
    need_h = (out_h - 1) * stride + kh
    need_w = (out_w - 1) * stride + kw
    H, W, _ = x.shape
    xp = np.pad(x, ((0, max(need_h - H, 0)), (0, max(need_w - W, 0)), (0, 0)), constant_values=fill)
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))
    return win[: need_h - kh + 1: stride, : need_w - kw + 1: stride][:out_h, :out_w]


def maxpool(x: np.ndarray, k: tuple[int, int], stride: int, out_h: int, out_w: int) -> np.ndarray:
    if np.issubdtype(x.dtype, np.integer):
        fill = np.iinfo(x.dtype).min
    else:
        fill = -np.inf
    return pool_windows(x, k, stride, out_h, out_w, fill).max(axis=(3, 4))


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "none":
        return x
    if kind == "relu":
        return np.maximum(x, 0).astype(x.dtype)
    x64 = x.astype(np.float64)
    if kind == "sigmoid":
        return (1.0 / (1.0 + np.exp(-x64))).astype(np.float32)
    if kind == "tanh":
        return np.tanh(x64).astype(np.float32)
    raise ValueError(f"unknown activation {kind!r}")


def batchnorm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    return (x.astype(np.float64) * scale + shift).astype(np.float32)
