import numpy as np
import pytest

from spikefield.errors import DimensionMismatch, TooSmall
from spikefield.metrics import PSNR_CAP, psnr, ssim


def test_psnr_examples():
    a = np.random.default_rng(0).random((8, 8))
    assert psnr(a, a) == PSNR_CAP == 99.0
    b = np.zeros((10, 10))
    assert psnr(b, b + 0.1) == pytest.approx(20.0)
    assert psnr(b, b + 1.0, peak=255) == pytest.approx(20 * np.log10(255))
    with pytest.raises(DimensionMismatch):
        psnr(b, np.zeros((10, 9)))
    with pytest.raises(ValueError):
        psnr(b, b, peak=0)


def test_psnr_mask():
    a = np.zeros((4, 4))
    b = a.copy()
    b[0, 0] = 1.0
    mask = np.zeros((4, 4), bool)
    mask[2:, 2:] = True
    assert psnr(a, b, mask=mask) == PSNR_CAP
    mask[0, 0] = True
    assert psnr(a, b, mask=mask) == pytest.approx(10 * np.log10(5))


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(1)
    img = rng.random((32, 32))
    means = [np.mean([psnr(img, img + s * rng.normal(size=img.shape)) for _ in range(5)]) for s in (0.01, 0.03, 0.1)]
    assert means[0] > means[1] > means[2]


def test_ssim_examples():
    rng = np.random.default_rng(2)
    a = rng.random((24, 24))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, 1.0 - a) < 1.0
    const = np.full((24, 24), 0.5)
    vals = [ssim(const, const + s * rng.normal(size=const.shape)) for s in (0.01, 0.05, 0.2)]
    assert all(0 < v < 1 for v in vals)
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(TooSmall):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))
    with pytest.raises(DimensionMismatch):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_symmetry():
    rng = np.random.default_rng(3)
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)


def test_ssim_matches_reference_implementation():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(4)
    a = rng.random((40, 36))
    b = np.clip(a + 0.1 * rng.normal(size=a.shape), 0, 1)
    ref = skm.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-10)


def test_ssim_mask_restricts_windows():
    rng = np.random.default_rng(5)
    a = rng.random((30, 30))
    b = a.copy()
    b[:12] = rng.random((12, 30))  # damage only the top rows
    mask = np.zeros_like(a, bool)
    mask[20:, :] = True
    assert ssim(a, b, mask=mask) == pytest.approx(1.0)
    assert ssim(a, b) < 0.9
