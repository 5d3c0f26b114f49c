"""Fan-beam acquisition geometry and incomplete-data masks.

Coordinates are millimetres in the isocenter frame, x to the right and y up.
Image pixel (i, j) sits at x = (j - c) * p, y = (c - i) * p with
c = (n - 1) / 2, so row index grows downward.  The source rotates on a
circle of radius ``source_to_iso_mm``; view v looks from angle
beta_v = coverage * v / n_views.  Detector elements are either equispaced
on a flat line orthogonal to the central ray at distance
``source_to_detector_mm`` from the source, or equiangular on an arc of that
radius centred on the source.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

EQUISPACED = "equispaced"
EQUIANGULAR = "equiangular"

FULL = "full"
SPARSE_VIEW = "sparse_view"
LIMITED_ANGLE = "limited_angle"
TRUNCATED = "truncated"
MASK_KINDS = (FULL, SPARSE_VIEW, LIMITED_ANGLE, TRUNCATED)


@dataclass(frozen=True)
class FanBeamGeometry:
    """Circular fan-beam scan description.

    ``detector_pixel_size_mm`` is flat-panel element pitch for equispaced
    rays and arc length at the detector radius for equiangular rays.
    """

    source_to_iso_mm: float
    source_to_detector_mm: float
    n_views: int
    angular_coverage_deg: float
    n_detector_pixels: int
    detector_pixel_size_mm: float
    ray_spacing: str
    image_size: int
    image_pixel_size_mm: float

    def __post_init__(self):
        if not 0 < self.source_to_iso_mm < self.source_to_detector_mm:
            raise DomainError("need 0 < source_to_iso < source_to_detector")
        if self.n_views < 1 or self.n_detector_pixels < 1:
            raise DomainError("view and detector counts must be positive")
        if not 0 < self.angular_coverage_deg <= 360.0:
            raise DomainError("angular coverage must lie in (0, 360] degrees")
        if self.detector_pixel_size_mm <= 0 or self.image_pixel_size_mm <= 0:
            raise DomainError("pixel sizes must be positive")
        if self.ray_spacing not in (EQUISPACED, EQUIANGULAR):
            raise DomainError(f"unknown ray spacing {self.ray_spacing!r}")
        if self.image_size < 1:
            raise DomainError("image size must be positive")
        # the source must stay outside the reconstructed square
        half_diag = self.image_size * self.image_pixel_size_mm / np.sqrt(2.0)
        if self.source_to_iso_mm <= half_diag:
            raise DomainError("source circle intersects the image square")

    # -- derived quantities --------------------------------------------------

    def view_angles(self) -> np.ndarray:
        """Source angles in radians; full scans do not repeat the endpoint."""
        cov = np.deg2rad(self.angular_coverage_deg)
        return cov * np.arange(self.n_views) / self.n_views

    def detector_offsets(self) -> np.ndarray:
        """Signed element offsets from the central ray.

        Millimetres on the flat panel for equispaced rays, radians of fan
        angle for equiangular rays.
        """
        centered = np.arange(self.n_detector_pixels) - 0.5 * (self.n_detector_pixels - 1)
        if self.ray_spacing == EQUISPACED:
            return centered * self.detector_pixel_size_mm
        return centered * self.detector_pixel_size_mm / self.source_to_detector_mm

    def source_position(self, beta: float) -> np.ndarray:
        return self.source_to_iso_mm * np.array([np.cos(beta), np.sin(beta)])

    def fan_angles(self) -> np.ndarray:
        """Fan angle of each detector element relative to the central ray."""
        off = self.detector_offsets()
        if self.ray_spacing == EQUISPACED:
            return np.arctan2(off, self.source_to_detector_mm)
        return off

    @property
    def image_extent_mm(self) -> float:
        return self.image_size * self.image_pixel_size_mm


def desk_geometry(image_size: int = 128, n_views: int = 180,
                  ray_spacing: str = EQUISPACED) -> FanBeamGeometry:
    """Desk-scale scanner: the bench geometry shrunk 4x in pixel counts with
    pixel sizes grown 4x, so distances and the field of view are unchanged."""
    scale = 512 // image_size if image_size <= 512 else 1
    return FanBeamGeometry(
        source_to_iso_mm=595.0,
        source_to_detector_mm=1086.5,
        n_views=n_views,
        angular_coverage_deg=360.0,
        n_detector_pixels=800 * image_size // 512,
        detector_pixel_size_mm=0.83 * scale,
        ray_spacing=ray_spacing,
        image_size=image_size,
        image_pixel_size_mm=0.5 * scale,
    )


def bench_geometry(ray_spacing: str = EQUISPACED) -> FanBeamGeometry:
    """Full-size simulation scanner (512^2 image, 720 views, 800 elements)."""
    return FanBeamGeometry(
        source_to_iso_mm=595.0,
        source_to_detector_mm=1086.5,
        n_views=720,
        angular_coverage_deg=360.0,
        n_detector_pixels=800,
        detector_pixel_size_mm=0.83,
        ray_spacing=ray_spacing,
        image_size=512,
        image_pixel_size_mm=0.5,
    )


def clinical_geometry() -> FanBeamGeometry:
    """Equiangular scanner matching the real-data acquisition dimensions."""
    return FanBeamGeometry(
        source_to_iso_mm=615.0,
        source_to_detector_mm=1098.0,
        n_views=720,
        angular_coverage_deg=360.0,
        n_detector_pixels=800,
        detector_pixel_size_mm=1.05,
        ray_spacing=EQUIANGULAR,
        image_size=512,
        image_pixel_size_mm=0.625,
    )


@dataclass(frozen=True)
class IncompletenessMask:
    """Row selection of the full measurement: kept views and detector pixels.

    ``kept_views`` and ``kept_detector_pixels`` are strictly increasing
    integer index arrays into the full geometry.
    """

    kind: str
    kept_views: np.ndarray
    kept_detector_pixels: np.ndarray

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise DomainError(f"unknown mask kind {self.kind!r}")
        for name in ("kept_views", "kept_detector_pixels"):
            idx = np.asarray(getattr(self, name), dtype=np.intp)
            if idx.ndim != 1 or idx.size == 0 or np.any(np.diff(idx) <= 0):
                raise DomainError(f"{name} must be non-empty strictly increasing")
            if idx[0] < 0:
                raise DomainError(f"{name} has negative indices")
            object.__setattr__(self, name, idx)

    @property
    def n_views(self) -> int:
        return int(self.kept_views.size)

    @property
    def n_detector_pixels(self) -> int:
        return int(self.kept_detector_pixels.size)

    def sinogram_shape(self) -> tuple[int, int]:
        return (self.n_views, self.n_detector_pixels)


def full_mask(geometry: FanBeamGeometry) -> IncompletenessMask:
    return IncompletenessMask(
        kind=FULL,
        kept_views=np.arange(geometry.n_views),
        kept_detector_pixels=np.arange(geometry.n_detector_pixels),
    )


def sparse_view_mask(geometry: FanBeamGeometry, stride: int = 6) -> IncompletenessMask:
    """Keep every ``stride``-th view, all detector pixels."""
    if stride < 1 or stride > geometry.n_views:
        raise DomainError("sparse-view stride out of range")
    return IncompletenessMask(
        kind=SPARSE_VIEW,
        kept_views=np.arange(0, geometry.n_views, stride),
        kept_detector_pixels=np.arange(geometry.n_detector_pixels),
    )


def limited_angle_mask(geometry: FanBeamGeometry, arc_deg: float = 120.0) -> IncompletenessMask:
    """Keep the first contiguous run of views spanning ``arc_deg`` degrees."""
    if not 0 < arc_deg <= geometry.angular_coverage_deg:
        raise DomainError("limited-angle arc out of range")
    n_keep = int(round(geometry.n_views * arc_deg / geometry.angular_coverage_deg))
    n_keep = max(1, min(n_keep, geometry.n_views))
    return IncompletenessMask(
        kind=LIMITED_ANGLE,
        kept_views=np.arange(n_keep),
        kept_detector_pixels=np.arange(geometry.n_detector_pixels),
    )


def truncated_mask(geometry: FanBeamGeometry, keep_fraction: float = 0.5) -> IncompletenessMask:
    """Keep the central fraction of detector pixels, all views."""
    if not 0 < keep_fraction <= 1.0:
        raise DomainError("truncation keep fraction must lie in (0, 1]")
    n_det = geometry.n_detector_pixels
    n_keep = max(1, int(round(n_det * keep_fraction)))
    lo = (n_det - n_keep) // 2
    return IncompletenessMask(
        kind=TRUNCATED,
        kept_views=np.arange(geometry.n_views),
        kept_detector_pixels=np.arange(lo, lo + n_keep),
    )


def mask_for_kind(geometry: FanBeamGeometry, kind: str, *, sparse_stride: int = 6,
                  limited_arc_deg: float = 120.0,
                  truncated_keep_fraction: float = 0.5) -> IncompletenessMask:
    if kind == FULL:
        return full_mask(geometry)
    if kind == SPARSE_VIEW:
        return sparse_view_mask(geometry, sparse_stride)
    if kind == LIMITED_ANGLE:
        return limited_angle_mask(geometry, limited_arc_deg)
    if kind == TRUNCATED:
        return truncated_mask(geometry, truncated_keep_fraction)
    raise DomainError(f"unknown incompleteness kind {kind!r}")


def widen_truncated_mask(geometry: FanBeamGeometry, mask: IncompletenessMask,
                         margin: int) -> IncompletenessMask:
    """Grow a truncated mask laterally by ``margin`` pixels on each side."""
    if margin < 0:
        raise DomainError("margin must be non-negative")
    lo = int(mask.kept_detector_pixels[0]) - margin
    hi = int(mask.kept_detector_pixels[-1]) + 1 + margin
    if lo < 0 or hi > geometry.n_detector_pixels:
        raise DomainError("margin exceeds detector width")
    return replace(mask, kept_detector_pixels=np.arange(lo, hi))
