"""Self-describing binary arrays and PGM image export.

The container layout is: 8 magic bytes ``CTBARR1\\n``, a little-endian
uint32 rank, that many little-endian uint32 dimensions, then the C-order
float64 little-endian payload.  Nothing else; readers can validate length
from the header alone.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CTBARR1\n"
_MAX_RANK = 8


class FormatError(ValueError):
    """File is not a valid array container."""


def save_array(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    if array.ndim == 0 or array.ndim > _MAX_RANK:
        raise FormatError(f"rank {array.ndim} outside 1..{_MAX_RANK}")
    header = MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.tobytes())


def load_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise FormatError("file too short for header")
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic bytes")
    (rank,) = struct.unpack_from("<I", raw, len(MAGIC))
    if rank == 0 or rank > _MAX_RANK:
        raise FormatError(f"rank {rank} outside 1..{_MAX_RANK}")
    off = len(MAGIC) + 4
    if len(raw) < off + 4 * rank:
        raise FormatError("file too short for dimensions")
    dims = struct.unpack_from(f"<{rank}I", raw, off)
    off += 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) != off + 8 * count:
        raise FormatError("payload length does not match dimensions")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    return data.reshape(dims).astype(float, copy=True)


def save_pgm(path, image: np.ndarray, window: tuple[float, float] | None = None) -> None:
    """Write a 2-D array as 8-bit binary PGM.

    ``window`` maps (low, high) to black..white; default is the image range.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise FormatError("PGM export needs a 2-D array")
    if window is None:
        lo, hi = float(image.min()), float(image.max())
    else:
        lo, hi = map(float, window)
    if not hi > lo:
        hi = lo + 1.0
    scaled = np.clip((image - lo) / (hi - lo), 0.0, 1.0)
    gray = np.round(scaled * 255.0).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
