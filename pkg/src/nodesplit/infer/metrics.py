"""Image quality metrics: SSIM, PSNR and error statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..tensorio import Tensor

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


class MetricError(ValueError):
    pass


def _as_image(t) -> np.ndarray:
    arr = t.to_real() if isinstance(t, Tensor) else np.asarray(t)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise MetricError(f"expected an H x W x C image, got shape {arr.shape}")
    return arr


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable filter over axes 0 and 1, keeping only full windows."""
    k = g.size
    h = sum(g[i] * x[i: x.shape[0] - k + 1 + i] for i in range(k))
    return sum(g[i] * h[:, i: x.shape[1] - k + 1 + i] for i in range(k))


def ssim(a, b, data_range: float = 255.0) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5) over valid windows and channels."""
    x, y = _as_image(a), _as_image(b)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < WINDOW or x.shape[1] < WINDOW:
        raise MetricError(f"image {x.shape[:2]} is smaller than the {WINDOW}x{WINDOW} window")
    g = gaussian_window()
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def psnr(a, b, data_range: float = 255.0) -> float:
    x, y = _as_image(a), _as_image(b)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


@dataclass(frozen=True)
class QualityReport:
    ssim: float
    psnr: float
    max_abs_err: float
    mean_abs_err: float

    def to_dict(self) -> dict:
        return {
            "ssim": self.ssim,
            "psnr": self.psnr if math.isfinite(self.psnr) else None,
            "max_abs_err": self.max_abs_err,
            "mean_abs_err": self.mean_abs_err,
        }


def quality(reference, candidate, data_range: float = 255.0) -> QualityReport:
    x, y = _as_image(reference), _as_image(candidate)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    diff = np.abs(x - y)
    return QualityReport(
        ssim=ssim(x, y, data_range),
        psnr=psnr(x, y, data_range),
        max_abs_err=float(diff.max()),
        mean_abs_err=float(diff.mean()),
    )
