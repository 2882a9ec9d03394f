"""Pure numpy fallback for the compiled kernels; results are identical."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACC_MIN, ACC_MAX = -(1 << 31), (1 << 31) - 1
_CHUNK = 2048


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad_top: int, pad_left: int,
           out_h: int, out_w: int) -> np.ndarray:
    """(out_h*out_w, kh*kw*C) patches, columns ordered (ky, kx, ci)."""
    H, W, C = x.shape
    need_h = (out_h - 1) * stride + kh
    need_w = (out_w - 1) * stride + kw
    pad_bottom = max(need_h - H - pad_top, 0)
    pad_right = max(need_w - W - pad_left, 0)
    xp = np.pad(x, ((pad_top, pad_bottom), (pad_left, pad_right), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (H', W', C, kh, kw)
    win = win[: need_h - kh + 1: stride, : need_w - kw + 1: stride]
    win = win[:out_h, :out_w].transpose(0, 1, 3, 4, 2)
    return win.reshape(out_h * out_w, kh * kw * C)


def _sequential(bias: int, products: np.ndarray) -> int:
    acc = min(max(int(bias), ACC_MIN), ACC_MAX)
    for p in products.tolist():
        acc += p
        if acc > ACC_MAX:
            acc = ACC_MAX
        elif acc < ACC_MIN:
            acc = ACC_MIN
    return acc


def conv2d_sat(x, w, bias, stride, pad_top, pad_left, out_h, out_w):
    """Same contract as the compiled ``conv2d_sat``.

    Exact int64 sums are used wherever the sum of absolute products cannot
    leave the 32-bit range; the remaining outputs are checked through their
    prefix sums and only replayed step by step if a prefix actually overflows.
    """
    x = np.ascontiguousarray(x, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.int64)
    bias = np.asarray(bias, dtype=np.int64)
    kh, kw, cin, cout = w.shape
    if x.shape[2] != cin:
        raise ValueError("kernel input channels do not match activation channels")
    if bias.shape[0] != cout:
        raise ValueError("bias length does not match filters")
    cols = im2col(x, kh, kw, stride, pad_top, pad_left, out_h, out_w)
    wm = w.reshape(kh * kw * cin, cout)
    exact = cols @ wm + bias
    bound = np.abs(cols) @ np.abs(wm) + np.abs(bias)
    risky = np.argwhere(bound > ACC_MAX)
    flagged = np.zeros(exact.shape, dtype=bool)
    bias_out = (bias > ACC_MAX) | (bias < ACC_MIN)
    flagged |= bias_out[None, :]
    for start in range(0, len(risky), _CHUNK):
        rc = risky[start:start + _CHUNK]
        prods = cols[rc[:, 0]] * wm[:, rc[:, 1]].T
        prefix = np.cumsum(prods, axis=1) + bias[rc[:, 1]][:, None]
        bad = ((prefix > ACC_MAX) | (prefix < ACC_MIN)).any(axis=1) | bias_out[rc[:, 1]]
        for j in np.flatnonzero(bad):
            r, c = rc[j]
            exact[r, c] = _sequential(bias[c], prods[j])
            flagged[r, c] = True
    out = exact.reshape(out_h, out_w, cout).astype(np.int32)
    return out, int(np.count_nonzero(flagged))
