"""Split inference and image-quality metrics."""

from .engine import PRECISIONS, Engine, InferenceError, RunResult, run_reference, run_split
from .metrics import MetricError, QualityReport, psnr, quality, ssim

__all__ = [
    "PRECISIONS", "Engine", "InferenceError", "RunResult", "run_reference", "run_split",
    "MetricError", "QualityReport", "psnr", "quality", "ssim",
]
