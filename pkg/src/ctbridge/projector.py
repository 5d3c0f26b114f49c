"""Matrix-free fan-beam projection via ray tracing.

Each ray is integrated by stepping along its dominant axis one image
row/column at a time and linearly interpolating the two neighbouring pixels
at every crossing (Joseph's scheme).  The adjoint scatters with the
identical interpolation weights, so the pair passes exact adjoint tests up
to summation roundoff.  Rays that never meet the image support contribute
exactly zero, as do the out-of-range halves of boundary interpolations.

Projection values are post-log line integrals: image values carry 1/mm and
step lengths are millimetres.  Interpolation tables are held in compact
float32/int32 form (identical in both directions); accumulation always runs
in float64.  Views are processed in fixed-size blocks with a fixed reduction
order, so repeated runs are bitwise identical.  Tables are cached per block
when the whole scan fits a modest memory budget, which desk-scale scans do
and full-size scans do not.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .geometry import EQUIANGULAR, FanBeamGeometry, IncompletenessMask, full_mask
from .linop import LinearOperator

# view blocks are sized to keep the (ray, step) work arrays near this many
# entries, trading numpy call overhead against peak memory
_BLOCK_ELEMENTS = 1 << 20
# cache interpolation tables only while their total stays under this
_CACHE_BUDGET_BYTES = 192 * (1 << 20)


class FanBeamProjector:
    """Forward/adjoint projection for one geometry and row mask."""

    def __init__(self, geometry: FanBeamGeometry, mask: IncompletenessMask | None = None):
        self.geometry = geometry
        self.mask = full_mask(geometry) if mask is None else mask
        if self.mask.kept_views[-1] >= geometry.n_views:
            raise DomainError("mask keeps views outside the geometry")
        if self.mask.kept_detector_pixels[-1] >= geometry.n_detector_pixels:
            raise DomainError("mask keeps detector pixels outside the geometry")
        self._angles = geometry.view_angles()[self.mask.kept_views]
        per_view = self.mask.n_detector_pixels * geometry.image_size
        self._block = max(1, _BLOCK_ELEMENTS // per_view)
        # ~16 bytes per (ray, step) entry across the two index/weight tables
        total = self._angles.size * per_view * 16
        self._cache: dict[int, list] | None = {} if total <= _CACHE_BUDGET_BYTES else None

    # -- public API ----------------------------------------------------------

    @property
    def image_shape(self) -> tuple[int, int]:
        n = self.geometry.image_size
        return (n, n)

    @property
    def sinogram_shape(self) -> tuple[int, int]:
        return self.mask.sinogram_shape()

    def forward(self, image: np.ndarray) -> np.ndarray:
        image = self._check_image(image)
        flat = image.ravel()
        n_det = self.mask.n_detector_pixels
        out = np.zeros(self._angles.size * n_det, dtype=float)
        for lo, n_views in self._view_blocks():
            vals = np.zeros(n_views * n_det, dtype=float)
            for pos, step_mm, flat_lo, flat_hi, w_lo, w_hi in self._tables(lo, n_views):
                acc = np.einsum("ij,ij->i", flat[flat_lo], w_lo)
                acc += np.einsum("ij,ij->i", flat[flat_hi], w_hi)
                vals[pos] = step_mm * acc
            out[lo * n_det:(lo + n_views) * n_det] = vals
        return out.reshape(self.sinogram_shape)

    def adjoint(self, sinogram: np.ndarray) -> np.ndarray:
        sinogram = np.asarray(sinogram, dtype=float)
        if sinogram.shape != self.sinogram_shape:
            raise DomainError(
                f"sinogram shape {sinogram.shape} != {self.sinogram_shape}"
            )
        n = self.geometry.image_size
        n_det = self.mask.n_detector_pixels
        flat_sino = sinogram.ravel()
        out = np.zeros(n * n, dtype=float)
        for lo, n_views in self._view_blocks():
            rows = flat_sino[lo * n_det:(lo + n_views) * n_det]
            for pos, step_mm, flat_lo, flat_hi, w_lo, w_hi in self._tables(lo, n_views):
                ray = (rows[pos] * step_mm)[:, None]
                out += np.bincount(
                    flat_lo.ravel(), weights=(ray * w_lo).ravel(), minlength=out.size
                )
                out += np.bincount(
                    flat_hi.ravel(), weights=(ray * w_hi).ravel(), minlength=out.size
                )
        return out.reshape(n, n)

    def normal(self, image: np.ndarray, weight: float = 0.0) -> np.ndarray:
        """(A^T A + weight * I) applied to an image."""
        if weight < 0:
            raise DomainError("normal-equation weight must be non-negative")
        out = self.adjoint(self.forward(image))
        if weight != 0.0:
            out = out + weight * np.asarray(image, dtype=float)
        return out

    def as_operator(self) -> LinearOperator:
        return LinearOperator(
            forward=self.forward,
            adjoint=self.adjoint,
            x_shape=self.image_shape,
            y_shape=self.sinogram_shape,
            supports_batch=False,
        )

    def dense_matrix(self) -> np.ndarray:
        """Explicit (n_rays, n_pixels) matrix built column by column.

        Intended for toy sizes; cost grows as pixels * rays * image_size.
        """
        n = self.geometry.image_size
        n_rays = int(np.prod(self.sinogram_shape))
        dense = np.empty((n_rays, n * n), dtype=float)
        basis = np.zeros((n, n), dtype=float)
        for k in range(n * n):
            basis.flat[k] = 1.0
            dense[:, k] = self.forward(basis).ravel()
            basis.flat[k] = 0.0
        return dense

    # -- ray tracing ----------------------------------------------------------

    def _view_blocks(self):
        for lo in range(0, self._angles.size, self._block):
            yield lo, min(self._block, self._angles.size - lo)

    def _tables(self, lo: int, n_views: int) -> list:
        if self._cache is not None:
            hit = self._cache.get(lo)
            if hit is not None:
                return hit
        tables = list(self._trace(self._angles[lo:lo + n_views]))
        if self._cache is not None:
            self._cache[lo] = tables
        return tables

    def _ray_geometry(self, betas: np.ndarray):
        """Source positions (B, 2) and ray directions (B, R, 2) for a block."""
        geom = self.geometry
        cosb, sinb = np.cos(betas), np.sin(betas)
        u_hat = np.stack((-cosb, -sinb), axis=1)
        v_hat = np.stack((-sinb, cosb), axis=1)
        src = -geom.source_to_iso_mm * u_hat
        off = geom.detector_offsets()[self.mask.kept_detector_pixels]
        if geom.ray_spacing == EQUIANGULAR:
            directions = geom.source_to_detector_mm * (
                np.cos(off)[None, :, None] * u_hat[:, None, :]
                + np.sin(off)[None, :, None] * v_hat[:, None, :]
            )
        else:
            directions = (
                geom.source_to_detector_mm * u_hat[:, None, :]
                + off[None, :, None] * v_hat[:, None, :]
            )
        return src, directions

    def _trace(self, betas: np.ndarray):
        """Interpolation tables for a block of views.

        Yields per dominant-axis group: (pos, step_mm, flat_lo, flat_hi,
        w_lo, w_hi) where ``pos`` indexes the flattened (view, ray) axis of
        the block, ``flat_*`` (int32) index the flattened image and ``w_*``
        (float32) carry interpolation weights, zero outside the support.
        """
        geom = self.geometry
        n = geom.image_size
        p = geom.image_pixel_size_mm
        c = 0.5 * (n - 1)
        src, directions = self._ray_geometry(betas)
        # pixel-unit coordinates: col = c + x/p, row = c - y/p
        col_s = c + src[:, 0:1] / p
        row_s = c - src[:, 1:2] / p
        dcol = directions[:, :, 0] / p
        drow = -directions[:, :, 1] / p
        length = np.hypot(dcol, drow)
        col_major = np.abs(dcol) >= np.abs(drow)

        shape = dcol.shape
        col_start = np.broadcast_to(col_s, shape).ravel()
        row_start = np.broadcast_to(row_s, shape).ravel()
        dcol, drow, length = dcol.ravel(), drow.ravel(), length.ravel()
        steps = np.arange(n, dtype=np.float32)
        isteps = np.arange(n, dtype=np.int32)
        un = np.uint32(n)

        for along_cols, sel in ((True, col_major.ravel()), (False, ~col_major.ravel())):
            pos = np.nonzero(sel)[0]
            if pos.size == 0:
                continue
            if along_cols:
                slope = drow[pos] / dcol[pos]
                intercept = row_start[pos] - col_start[pos] * slope
                step_mm = p * length[pos] / np.abs(dcol[pos])
            else:
                slope = dcol[pos] / drow[pos]
                intercept = col_start[pos] - row_start[pos] * slope
                step_mm = p * length[pos] / np.abs(drow[pos])
            cross = slope.astype(np.float32)[:, None] * steps[None, :]
            cross += intercept.astype(np.float32)[:, None]
            whole = np.floor(cross)
            np.subtract(cross, whole, out=cross)      # cross now holds frac
            base = whole.astype(np.int32)
            valid_lo = base.view(np.uint32) < un      # 0 <= base < n, one pass
            base_hi = base + np.int32(1)
            valid_hi = base_hi.view(np.uint32) < un
            np.subtract(np.float32(1.0), cross, out=whole)   # reuse: 1 - frac
            w_lo = np.multiply(whole, valid_lo, out=whole)
            w_hi = np.multiply(cross, valid_hi, out=cross)
            np.multiply(base, valid_lo, out=base)     # invalid entries -> 0
            np.multiply(base_hi, valid_hi, out=base_hi)
            if along_cols:
                np.multiply(base, np.int32(n), out=base)
                np.add(base, isteps[None, :], out=base)
                np.multiply(base_hi, np.int32(n), out=base_hi)
                np.add(base_hi, isteps[None, :], out=base_hi)
            else:
                np.add(base, isteps[None, :] * np.int32(n), out=base)
                np.add(base_hi, isteps[None, :] * np.int32(n), out=base_hi)
            yield pos, step_mm, base, base_hi, w_lo, w_hi

    def _check_image(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=float)
        if image.shape != self.image_shape:
            raise DomainError(f"image shape {image.shape} != {self.image_shape}")
        return image
