"""Full-reference image quality metrics."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionMismatch, TooSmall

PSNR_CAP = 99.0


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0, mask=None) -> float:
    """Peak signal-to-noise ratio in dB; identical images return 99 dB.

    With ``mask`` only the selected pixels enter the mean squared error.
    """
    a, b = _pair(a, b)
    if not peak > 0:
        raise ValueError("peak must be positive")
    diff = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise DimensionMismatch("mask shape differs from the images")
        if not mask.any():
            return PSNR_CAP
        diff = diff[mask]
    mse = float(diff.mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(a, b, peak: float = 1.0, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03):
    """Local SSIM over every fully-contained window position ('valid' region)."""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise DimensionMismatch("ssim expects 2-D grayscale images")
    if min(a.shape) < window:
        raise TooSmall(f"images of shape {a.shape} are smaller than the {window}x{window} window")
    w = gaussian_window(window, sigma)

    def filt(x):
        return convolve2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim(a, b, peak: float = 1.0, mask=None, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity; ``mask`` restricts the mean to windows centred on selected pixels."""
    m = ssim_map(a, b, peak, window, sigma, k1, k2)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != np.shape(a):
            raise DimensionMismatch("mask shape differs from the images")
        half = window // 2
        inner = mask[half:mask.shape[0] - half, half:mask.shape[1] - half]
        if not inner.any():
            return 1.0
        return float(m[inner].mean())
    return float(m.mean())
