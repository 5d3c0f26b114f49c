"""Sinogram corruption, conditioning, and filtered backprojection.

Covers the measurement side of the pipeline: cutting a complete scan down
to sparse-view / limited-angle / truncated data, adding transmission
counting noise, the FBP-only preprocessing steps (conjugate-redundancy
reweighting for limited arcs, lateral ramp extension for truncation), and
weighted fan-beam FBP for flat and arc detectors.

Preprocessing never touches its input; reconstruction-side code keeps the
raw extracted measurements for data-consistency use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, rfft

from .errors import DomainError
from .geometry import (
    EQUIANGULAR,
    EQUISPACED,
    FULL,
    LIMITED_ANGLE,
    SPARSE_VIEW,
    TRUNCATED,
    FanBeamGeometry,
    IncompletenessMask,
    full_mask,
    widen_truncated_mask,
)
from .rng import sinogram_stream


def extract_incomplete(y_full: np.ndarray, geometry: FanBeamGeometry,
                       mask: IncompletenessMask) -> np.ndarray:
    """Restrict a complete sinogram to the rows/columns a mask keeps."""
    y_full = np.asarray(y_full, dtype=float)
    expect = (geometry.n_views, geometry.n_detector_pixels)
    if y_full.shape != expect:
        raise DomainError(f"complete sinogram must have shape {expect}")
    return y_full[np.ix_(mask.kept_views, mask.kept_detector_pixels)]


@dataclass(frozen=True)
class NoiseModel:
    """Post-log transmission counting noise.

    A line integral p picks up Gaussian noise of variance exp(p) / n_air,
    the first-order image of Poisson counting around n_air * exp(-p)
    transmitted photons.
    """

    n_air: float = 2.5e5
    seed: int = 0

    def __post_init__(self):
        if not self.n_air > 0:
            raise DomainError("n_air must be positive")


def add_noise(y: np.ndarray, model: NoiseModel) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    z = sinogram_stream(model.seed).standard_normal(y.shape)
    return y + np.exp(0.5 * y) * z / np.sqrt(model.n_air)


def add_noise_water_normalized(y: np.ndarray, model: NoiseModel,
                               mu_water: float = 0.0192) -> np.ndarray:
    """Counting noise for sinograms of water-normalized images.

    Projecting an image with water at 1.0 over mm-scale paths yields line
    integrals 1/mu_water times the physical log-transmission the noise
    model expects (a 300 mm water path reads ~300 here but ~5.8
    physically).  Rescale to physical units, apply the model, scale back.
    """
    if not mu_water > 0:
        raise DomainError("mu_water must be positive")
    y = np.asarray(y, dtype=float)
    return add_noise(y * mu_water, model) / mu_water


@dataclass(frozen=True)
class PreprocessSpec:
    """FBP-side conditioning knobs.

    ``limited_weighting`` toggles conjugate-redundancy reweighting for
    limited-angle data; ``limited_taper_deg`` is the smoothing band of those
    weights.  ``truncated_margin_px`` is the lateral ramp extension in
    detector pixels; None picks 10% of the truncated width.
    """

    limited_weighting: bool = True
    limited_taper_deg: float = 10.0
    truncated_margin_px: int | None = None

    def __post_init__(self):
        if self.limited_taper_deg <= 0:
            raise DomainError("taper width must be positive")
        if self.truncated_margin_px is not None and self.truncated_margin_px < 0:
            raise DomainError("margin must be non-negative")


def redundancy_weights(geometry: FanBeamGeometry, mask: IncompletenessMask,
                       taper_deg: float = 10.0) -> np.ndarray:
    """Per-ray weights in [1, 2] compensating missing conjugate rays.

    A fan ray (beta, gamma) coincides with the ray (beta + pi + 2 gamma,
    -gamma) seen from the far side.  Rays whose conjugate source angle was
    also scanned keep weight 1; rays measured only once are counted twice,
    with a cosine taper over ``taper_deg`` of conjugate-angle distance so
    the weight field stays smooth.  Complete angular coverage therefore
    yields all ones.
    """
    angles = geometry.view_angles()[mask.kept_views]
    gamma = geometry.fan_angles()[mask.kept_detector_pixels]
    two_pi = 2.0 * np.pi
    spacing = np.deg2rad(geometry.angular_coverage_deg) / geometry.n_views
    arc = min(mask.n_views * spacing, two_pi)
    conj = np.mod(angles[:, None] + np.pi + 2.0 * gamma[None, :], two_pi)
    # circular distance from the scanned arc [0, arc]
    dist = np.minimum(np.mod(conj - arc, two_pi), np.mod(-conj, two_pi))
    dist = np.where(conj <= arc, 0.0, dist)
    taper = np.deg2rad(taper_deg)
    ramp = np.clip(dist / taper, 0.0, 1.0)
    return 1.0 + 0.5 * (1.0 - np.cos(np.pi * ramp))


def preprocess(y: np.ndarray, geometry: FanBeamGeometry, mask: IncompletenessMask,
               spec: PreprocessSpec | None = None
               ) -> tuple[np.ndarray, IncompletenessMask]:
    """Condition extracted measurements for FBP.

    Returns the conditioned sinogram with the mask it now corresponds to;
    truncation widens the mask by the synthetic margin columns.  Sparse-view
    and complete data pass through unchanged.
    """
    spec = spec or PreprocessSpec()
    y = np.asarray(y, dtype=float)
    if y.shape != mask.sinogram_shape():
        raise DomainError(f"sinogram shape {y.shape} != {mask.sinogram_shape()}")

    if mask.kind in (FULL, SPARSE_VIEW):
        return y.copy(), mask

    if mask.kind == LIMITED_ANGLE:
        if not spec.limited_weighting:
            return y.copy(), mask
        return y * redundancy_weights(geometry, mask, spec.limited_taper_deg), mask

    if mask.kind == TRUNCATED:
        margin = spec.truncated_margin_px
        if margin is None:
            margin = int(round(0.1 * mask.n_detector_pixels))
        if margin == 0:
            return y.copy(), mask
        wide = widen_truncated_mask(geometry, mask, margin)
        ramp = 1.0 - np.arange(1, margin + 1) / margin   # ends exactly at 0
        left = y[:, 0:1] * ramp[::-1][None, :]
        right = y[:, -1:] * ramp[None, :]
        return np.concatenate([left, y, right], axis=1), wide

    raise DomainError(f"unknown mask kind {mask.kind!r}")


# -- filtered backprojection ---------------------------------------------------


def _pad_length(n: int) -> int:
    target = 2 * n
    pad = 1
    while pad < target:
        pad *= 2
    return pad


def _flat_kernel_response(pad: int, spacing: float) -> np.ndarray:
    """Band-limited ramp response for flat-detector rows.

    The spatial kernel (unit spacing) is 1/4 at zero displacement and
    -1 / (pi m)^2 at odd displacements; sampling at ``spacing`` scales it by
    1/spacing^2 and the convolution picks up one factor of spacing, while
    the redundancy of a full-turn fan scan contributes the remaining 1/2.
    """
    m = np.arange(pad)
    m = np.where(m > pad // 2, m - pad, m)
    kern = np.zeros(pad)
    kern[0] = 0.25
    odd = (m % 2) != 0
    kern[odd] = -1.0 / (np.pi * m[odd]) ** 2
    return rfft(kern).real / (2.0 * spacing)


def _arc_kernel_response(pad: int, dgamma: float) -> np.ndarray:
    """Band-limited ramp response for equiangular rows.

    Same construction with the fan-geometry correction folded in: the odd
    taps become -1 / (2 (pi sin(m dgamma))^2) and the zero tap 1/(8 dgamma^2);
    the convolution carries one factor of dgamma.
    """
    m = np.arange(pad)
    m = np.where(m > pad // 2, m - pad, m)
    kern = np.zeros(pad)
    kern[0] = 1.0 / (8.0 * dgamma * dgamma)
    odd = (m % 2) != 0
    s = np.sin(m[odd] * dgamma)
    kern[odd] = -1.0 / (2.0 * (np.pi * s) ** 2)
    return rfft(kern).real * dgamma


def _filter_rows(rows: np.ndarray, response: np.ndarray, pad: int) -> np.ndarray:
    spec = rfft(rows, n=pad, axis=1)
    return irfft(spec * response[None, :], n=pad, axis=1)[:, : rows.shape[1]]


def fbp(y: np.ndarray, geometry: FanBeamGeometry,
        mask: IncompletenessMask | None = None) -> np.ndarray:
    """Weighted fan-beam filtered backprojection over the kept views.

    Rows are cosine-weighted, ramp-filtered with a zero-padded FFT, then
    backprojected with the fan distance weight and scaled by the angular
    spacing of the kept views.  The kept detector pixels must be contiguous;
    image pixels whose projection falls outside them receive no
    contribution from that view.
    """
    mask = full_mask(geometry) if mask is None else mask
    y = np.asarray(y, dtype=float)
    if y.shape != mask.sinogram_shape():
        raise DomainError(f"sinogram shape {y.shape} != {mask.sinogram_shape()}")
    if np.any(np.diff(mask.kept_detector_pixels) != 1):
        raise DomainError("FBP needs a contiguous detector range")

    geom = geometry
    r_si = geom.source_to_iso_mm
    n_det = mask.n_detector_pixels
    pad = _pad_length(n_det)

    if geom.ray_spacing == EQUISPACED:
        # work on the detector line rescaled through the isocenter
        ds = geom.detector_pixel_size_mm * r_si / geom.source_to_detector_mm
        s = geom.detector_offsets()[mask.kept_detector_pixels] * r_si / geom.source_to_detector_mm
        weighted = y * (r_si / np.sqrt(r_si * r_si + s * s))[None, :]
        filtered = _filter_rows(weighted, _flat_kernel_response(pad, ds), pad)
        coord_scale = 1.0 / ds
    else:
        dgamma = geom.detector_pixel_size_mm / geom.source_to_detector_mm
        gamma = geom.detector_offsets()[mask.kept_detector_pixels]
        weighted = y * (r_si * np.cos(gamma))[None, :]
        filtered = _filter_rows(weighted, _arc_kernel_response(pad, dgamma), pad)
        coord_scale = 1.0 / dgamma

    angles = geom.view_angles()[mask.kept_views]
    if angles.size > 1:
        dbeta = float(np.median(np.diff(angles)))
    else:
        dbeta = np.deg2rad(geom.angular_coverage_deg) / geom.n_views

    n = geom.image_size
    p = geom.image_pixel_size_mm
    c = 0.5 * (n - 1)
    xs = (np.arange(n) - c) * p
    grid_x = xs[None, :]
    grid_y = -xs[:, None]          # row index grows downward
    center = 0.5 * (geom.n_detector_pixels - 1)
    col0 = float(mask.kept_detector_pixels[0])

    out = np.zeros((n, n))
    for v, beta in enumerate(angles):
        cosb, sinb = np.cos(beta), np.sin(beta)
        depth = r_si - (grid_x * cosb + grid_y * sinb)
        lateral = -grid_x * sinb + grid_y * cosb
        if geom.ray_spacing == EQUISPACED:
            coord = (r_si * lateral / depth) * coord_scale + (center - col0)
            weight = (r_si * r_si) / (depth * depth)
        else:
            coord = np.arctan2(lateral, depth) * coord_scale + (center - col0)
            weight = 1.0 / (depth * depth + lateral * lateral)
        k0 = np.floor(coord).astype(np.intp)
        frac = coord - k0
        inside = (k0 >= 0) & (k0 < n_det - 1)
        k0c = np.clip(k0, 0, n_det - 2)
        row = filtered[v]
        vals = row[k0c] * (1.0 - frac) + row[k0c + 1] * frac
        out += weight * np.where(inside, vals, 0.0)
    return dbeta * out
