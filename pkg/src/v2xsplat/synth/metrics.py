"""PSNR and SSIM over [0, 1] images (numpy)."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from ..errors import InvalidInputError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def psnr(a, b, cap: float = PSNR_CAP) -> float:
    """10·log10(1/MSE) on [0, 1] images; identical images return the cap."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidInputError("psnr: image shapes differ")
    mse = float(((x - y) ** 2).mean())
    if mse <= 0.0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def _window() -> np.ndarray:
    half = (SSIM_WINDOW - 1) / 2.0
    x = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(x**2) / (2 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Windowed SSIM (11×11 Gaussian, σ=1.5), averaged over valid windows
    and channels. Matches the differentiable training-side implementation."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidInputError("ssim: image shapes differ")
    if x.ndim == 2:
        x = x[..., None]
        y = y[..., None]
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise InvalidInputError(f"ssim: image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = _window()

    vals = []
    for c in range(x.shape[2]):
        xc, yc = x[..., c], y[..., c]
        mu_x = convolve2d(xc, win, mode="valid")
        mu_y = convolve2d(yc, win, mode="valid")
        var_x = convolve2d(xc * xc, win, mode="valid") - mu_x**2
        var_y = convolve2d(yc * yc, win, mode="valid") - mu_y**2
        cov = convolve2d(xc * yc, win, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        vals.append((num / den).mean())
    return float(np.mean(vals))
