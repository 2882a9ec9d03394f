import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from nodesplit.infer import MetricError, psnr, quality, ssim
from nodesplit.tensorio import Tensor
from oracles import ssim_bruteforce


def skimage_ssim(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=255, channel_axis=2)


def noisy_pair(rng, shape, amp):
    a = rng.uniform(0, 255, shape)
    b = np.clip(a + rng.uniform(-amp, amp, shape), 0, 255)
    return a, b


def test_identity_and_inversion():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 255, (16, 16, 3))
    assert ssim(x, x) == 1.0
    assert ssim(x, 255 - x) < 1.0


def test_gradient_image_against_oracles():
    g = np.tile(np.linspace(0, 255, 16), (16, 1))[..., None]
    noise = np.random.default_rng(1).uniform(-16, 16, g.shape)
    n = np.clip(g + noise, 0, 255)
    v = ssim(g, n)
    assert abs(v - ssim_bruteforce(g, n)) < 1e-6
    assert abs(v - skimage_ssim(g, n)) < 1e-6


def test_random_pairs_against_skimage():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a, b = noisy_pair(rng, (24, 20, 3), 40)
        assert abs(ssim(a, b) - skimage_ssim(a, b)) < 1e-6


def test_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = noisy_pair(rng, (16, 16, 1), 60)
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12


def test_errors():
    with pytest.raises(MetricError, match="smaller"):
        ssim(np.zeros((10, 30, 1)), np.zeros((10, 30, 1)))
    with pytest.raises(MetricError, match="mismatch"):
        ssim(np.zeros((12, 12, 1)), np.zeros((12, 12, 3)))
    with pytest.raises(MetricError):
        quality(np.zeros((12, 12, 1)), np.zeros((13, 12, 1)))


def test_grayscale_2d_and_tensor_inputs():
    rng = np.random.default_rng(4)
    a = rng.uniform(0, 255, (12, 12))
    assert ssim(a, a) == 1.0
    t = Tensor(a[..., None].astype(np.float32))
    assert ssim(t, t) == 1.0


def test_quality_report():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 200, (16, 16, 3))
    same = quality(x, x)
    assert same.ssim == 1.0 and same.max_abs_err == 0 and math.isinf(same.psnr)
    assert same.to_dict()["psnr"] is None
    shifted = quality(x, x + 1.0)
    assert shifted.max_abs_err == pytest.approx(1.0) and shifted.mean_abs_err == pytest.approx(1.0)
    assert shifted.psnr == pytest.approx(10 * math.log10(255 ** 2))
    assert psnr(x, x + 1.0) == shifted.psnr
