"""Test objects on the reconstruction grid.

Values are dimensionless relative attenuation with 1.0 meaning water, so a
phantom becomes physical attenuation by multiplying with the water
coefficient (see metrics.MU_WATER_PER_MM) and Hounsfield conversion is just
1000 * (value - 1).

Rasterization is pixel-center membership by default; ``supersample`` averages
a k x k subgrid per pixel, which matters whenever a discrete phantom stands
in for the underlying continuous object (projection experiments, FBP error
measurements) because hard pixel edges carry energy a band-limited
reconstruction cannot reproduce.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .geometry import EQUISPACED
from .rng import phantom_stream

# Shepp-Logan head phantom, standard ellipse table.
# Columns: additive value, x semi-axis, y semi-axis, x center, y center,
# rotation in degrees.  Coordinates live in the [-1, 1] square.
SHEPP_LOGAN_ELLIPSES = np.array([
    [2.00, 0.6900, 0.9200,  0.00,  0.0000,   0.0],
    [-0.98, 0.6624, 0.8740,  0.00, -0.0184,   0.0],
    [-0.02, 0.1100, 0.3100,  0.22,  0.0000, -18.0],
    [-0.02, 0.1600, 0.4100, -0.22,  0.0000,  18.0],
    [0.01, 0.2100, 0.2500,  0.00,  0.3500,   0.0],
    [0.01, 0.0460, 0.0460,  0.00,  0.1000,   0.0],
    [0.01, 0.0460, 0.0460,  0.00, -0.1000,   0.0],
    [0.01, 0.0460, 0.0230, -0.08, -0.6050,   0.0],
    [0.01, 0.0230, 0.0230,  0.00, -0.6050,   0.0],
    [0.01, 0.0230, 0.0460,  0.06, -0.6050,   0.0],
])

PHANTOM_KINDS = ("shepp_logan", "disks", "random_ellipses")


def _grid(n: int) -> tuple[np.ndarray, np.ndarray, float]:
    c = 0.5 * (n - 1)
    step = 2.0 / n
    xs = (np.arange(n) - c) * step
    return xs[None, :], -xs[:, None], step


def rasterize_ellipses(table: np.ndarray, n: int, supersample: int = 1) -> np.ndarray:
    """Sum of ellipse indicator functions sampled on an n x n grid."""
    if n < 2:
        raise DomainError("grid needs at least 2 pixels")
    if supersample < 1:
        raise DomainError("supersample factor must be >= 1")
    table = np.asarray(table, dtype=float)
    gx, gy, step = _grid(n)
    offsets = (np.arange(supersample) - 0.5 * (supersample - 1)) / supersample * step
    out = np.zeros((n, n))
    for ox in offsets:
        for oy in offsets:
            x = gx + ox
            y = gy + oy
            for value, a, b, x0, y0, deg in table:
                phi = np.deg2rad(deg)
                dx = x - x0
                dy = y - y0
                u = dx * np.cos(phi) + dy * np.sin(phi)
                v = -dx * np.sin(phi) + dy * np.cos(phi)
                out += np.where((u / a) ** 2 + (v / b) ** 2 <= 1.0, value, 0.0)
    return out / (supersample * supersample)


def shepp_logan(n: int, supersample: int = 1) -> np.ndarray:
    return rasterize_ellipses(SHEPP_LOGAN_ELLIPSES, n, supersample)


def disk(n: int, radius: float = 0.6, value: float = 1.0,
         supersample: int = 1) -> np.ndarray:
    if not 0 < radius <= 1:
        raise DomainError("disk radius must be in (0, 1]")
    table = np.array([[value, radius, radius, 0.0, 0.0, 0.0]])
    return rasterize_ellipses(table, n, supersample)


def disks(n: int, n_disks: int = 3, seed: int = 0,
          supersample: int = 1) -> np.ndarray:
    """A few random disks on empty background; zero disks gives a zero image."""
    if n_disks < 0:
        raise DomainError("n_disks must be non-negative")
    rng = phantom_stream(seed)
    rows = []
    for _ in range(n_disks):
        radius = rng.uniform(0.08, 0.25)
        r = rng.uniform(0.0, 0.7 - radius)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rows.append([rng.uniform(0.5, 1.5), radius, radius,
                     r * np.cos(ang), r * np.sin(ang), 0.0])
    if not rows:
        return np.zeros((n, n))
    return rasterize_ellipses(np.array(rows), n, supersample)


def random_ellipses(n: int, seed: int = 0, n_ellipses: int = 6,
                    supersample: int = 1) -> np.ndarray:
    """Water disk carrying a few random soft-contrast ellipses.

    Same seed, same image; the generator stream is keyed only by ``seed``.
    """
    rng = phantom_stream(seed)
    rows = [[1.0, 0.88, 0.88, 0.0, 0.0, 0.0]]
    for _ in range(n_ellipses):
        a = rng.uniform(0.05, 0.30)
        b = rng.uniform(0.05, 0.30)
        # keep the ellipse inside the water disk
        rmax = 0.82 - max(a, b)
        r = rng.uniform(0.0, rmax)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rows.append([
            rng.uniform(-0.08, 0.08),
            a, b,
            r * np.cos(ang), r * np.sin(ang),
            rng.uniform(0.0, 180.0),
        ])
    return rasterize_ellipses(np.array(rows), n, supersample)


def make_phantom(kind: str, n: int, seed: int = 0, supersample: int = 1) -> np.ndarray:
    """Dispatch on phantom kind name; see PHANTOM_KINDS."""
    if n < 16:
        raise DomainError("phantom size below 16 pixels is not supported")
    if kind == "shepp_logan":
        return shepp_logan(n, supersample)
    if kind == "disks":
        return disks(n, seed=seed, supersample=supersample)
    if kind == "random_ellipses":
        return random_ellipses(n, seed=seed, supersample=supersample)
    raise DomainError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")


def reconstruction_circle(n: int, radius: float = 1.0) -> np.ndarray:
    """Boolean mask of pixels inside the inscribed circle of the grid."""
    gx, gy, _ = _grid(n)
    return (gx * gx + gy * gy) <= radius * radius


def ellipse_sinogram(table: np.ndarray, geometry) -> np.ndarray:
    """Exact fan-beam line integrals of an ellipse-table phantom.

    Chord lengths come from the ray-ellipse quadratic, so this is the
    continuous forward model with no discretization at all: the reference
    against which ray-driven projectors and FBP are judged.  Table
    coordinates are normalized as in rasterize_ellipses and are scaled to
    millimetres by half the image extent of ``geometry``.
    """
    table = np.asarray(table, dtype=float)
    betas = geometry.view_angles()
    offs = geometry.detector_offsets()
    r_si = geometry.source_to_iso_mm
    r_sd = geometry.source_to_detector_mm
    half = geometry.image_size * geometry.image_pixel_size_mm / 2.0
    out = np.zeros((geometry.n_views, geometry.n_detector_pixels))
    for i, beta in enumerate(betas):
        u = np.array([-np.cos(beta), -np.sin(beta)])
        v = np.array([-np.sin(beta), np.cos(beta)])
        src = -r_si * u
        if geometry.ray_spacing == EQUISPACED:
            tgt = src + r_sd * u[None, :] + offs[:, None] * v[None, :]
        else:
            tgt = src + r_sd * (np.cos(offs)[:, None] * u[None, :]
                                + np.sin(offs)[:, None] * v[None, :])
        d = tgt - src
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        acc = np.zeros(offs.size)
        for value, a, b, x0, y0, deg in table:
            phi = np.deg2rad(deg)
            cp, sp = np.cos(phi), np.sin(phi)
            rx = (src[0] - x0 * half) * cp + (src[1] - y0 * half) * sp
            ry = -(src[0] - x0 * half) * sp + (src[1] - y0 * half) * cp
            dx = d[:, 0] * cp + d[:, 1] * sp
            dy = -d[:, 0] * sp + d[:, 1] * cp
            ax, by = a * half, b * half
            qa = (dx / ax) ** 2 + (dy / by) ** 2
            qb = 2.0 * (rx * dx / ax ** 2 + ry * dy / by ** 2)
            qc = (rx / ax) ** 2 + (ry / by) ** 2 - 1.0
            disc = qb * qb - 4.0 * qa * qc
            hit = disc > 0
            acc[hit] += value * np.sqrt(disc[hit]) / qa[hit]
        out[i] = acc
    return out
