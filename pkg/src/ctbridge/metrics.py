"""Reconstruction quality metrics: RMSE on the HU scale and SSIM.

Images arrive as 2-D float arrays in attenuation units; ``mu_water`` sets
the unit so the HU conversion HU = 1000 (mu - mu_water) / mu_water works
for both physical 1/mm values and water-normalized ones (pass 1.0 there).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError

# Declared attenuation of water at the simulated tube energy.
MU_WATER_PER_MM = 0.0192

SSIM_WINDOW_RADIUS = 5          # 11x11 window
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(x, ref):
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise DomainError(f"shape mismatch {x.shape} vs {ref.shape}")
    return x, ref


def rmse_hu(x: np.ndarray, ref: np.ndarray, mu_water: float = MU_WATER_PER_MM) -> float:
    """Root mean square error in Hounsfield units."""
    x, ref = _check_pair(x, ref)
    if not mu_water > 0:
        raise DomainError("mu_water must be positive")
    diff_hu = (x - ref) * (1000.0 / mu_water)
    return float(np.sqrt(np.mean(diff_hu * diff_hu)))


def _local_mean(img: np.ndarray) -> np.ndarray:
    # truncate = radius / sigma gives exactly an 11-tap kernel per axis
    return gaussian_filter(img, SSIM_SIGMA,
                           truncate=SSIM_WINDOW_RADIUS / SSIM_SIGMA)


def ssim(x: np.ndarray, ref: np.ndarray, data_range: float) -> float:
    """Mean structural similarity over Gaussian-weighted 11x11 windows.

    Border pixels whose window would leave the image are excluded from the
    average, so padding policy never influences the score.
    """
    x, ref = _check_pair(x, ref)
    if not data_range > 0:
        raise DomainError("data_range must be positive")
    r = SSIM_WINDOW_RADIUS
    if min(x.shape) < 2 * r + 1:
        raise DomainError("image smaller than the similarity window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = _local_mean(x)
    mu_r = _local_mean(ref)
    var_x = _local_mean(x * x) - mu_x * mu_x
    var_r = _local_mean(ref * ref) - mu_r * mu_r
    cov = _local_mean(x * ref) - mu_x * mu_r
    score = (((2 * mu_x * mu_r + c1) * (2 * cov + c2))
             / ((mu_x * mu_x + mu_r * mu_r + c1) * (var_x + var_r + c2)))
    return float(np.mean(score[r:-r, r:-r]))
