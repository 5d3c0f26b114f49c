"""Clean-image predictors the sampler can plug in.

A predictor maps (X_t, t, X_FBP) to an estimate of the clean image.  None
of these are trained networks: the package ships an identity stub, a
schedule-aware shrinkage surrogate built from a blurred FBP, affine maps
loaded from arrays, and a child-process hook that lets any external program
(including a trained model) serve predictions over a binary pipe.
"""

from __future__ import annotations

import struct
import subprocess
import threading

import numpy as np
from scipy.ndimage import gaussian_filter

from .arrayio import load_array
from .errors import DomainError, ProtocolError
from .schedule import Schedule


def identity_predictor():
    """Predict the current state unchanged."""
    def predict(xt, t, xfbp):
        return np.asarray(xt, dtype=float)
    return predict


def shrinkage_predictor(schedule: Schedule, blur_sigma_px: float = 2.0):
    """Schedule-aware pull from the noisy state toward a smoothed FBP.

    The estimate X_t + (sigma_t^2 / sigma_T^2) (blur(X_FBP) - X_FBP) starts
    at the blurred FBP when the bridge sits at its anchor and fades to the
    raw state as t -> 0, so late steps trust the state and early steps
    trust the denoised reconstruction.  A deliberately crude stand-in for a
    trained image-domain predictor; batched inputs blur only the image axes.
    """
    if blur_sigma_px < 0:
        raise DomainError("blur width must be non-negative")

    def predict(xt, t, xfbp):
        xt = np.asarray(xt, dtype=float)
        xfbp = np.asarray(xfbp, dtype=float)
        sig = [0.0] * (xfbp.ndim - 2) + [blur_sigma_px, blur_sigma_px]
        blurred = gaussian_filter(xfbp, sigma=sig)
        lam = schedule.sigma2(t) / schedule.total_variance
        return xt + lam * (blurred - xfbp)

    return predict


def affine_predictor(m_xt: np.ndarray, m_xfbp: np.ndarray | None = None,
                     offset: np.ndarray | None = None):
    """X0 estimate as a fixed affine map of the flattened inputs."""
    m_xt = np.asarray(m_xt, dtype=float)
    d = m_xt.shape[0]
    if m_xt.shape != (d, d):
        raise DomainError("state matrix must be square")
    if m_xfbp is not None:
        m_xfbp = np.asarray(m_xfbp, dtype=float)
        if m_xfbp.shape != (d, d):
            raise DomainError("anchor matrix must match the state matrix")
    if offset is not None:
        offset = np.asarray(offset, dtype=float).reshape(-1)
        if offset.shape != (d,):
            raise DomainError("offset length must match the matrix")

    def predict(xt, t, xfbp):
        """Inputs are (d,) vectors or (B, d) batches."""
        xt = np.asarray(xt, dtype=float)
        shape = xt.shape
        out = xt.reshape(-1, d) @ m_xt.T
        if m_xfbp is not None:
            out = out + np.asarray(xfbp, dtype=float).reshape(-1, d) @ m_xfbp.T
        if offset is not None:
            out = out + offset
        return out.reshape(shape)

    return predict


def affine_predictor_from_files(m_xt_path, m_xfbp_path=None, offset_path=None):
    """Load the affine map's pieces from array files."""
    m_xt = load_array(m_xt_path)
    m_xfbp = load_array(m_xfbp_path) if m_xfbp_path else None
    offset = load_array(offset_path) if offset_path else None
    return affine_predictor(m_xt, m_xfbp, offset)


REQUEST_MAGIC = 0x51524243   # "CBRQ" little-endian
RESPONSE_MAGIC = 0x53524243  # "CBRS" little-endian


def encode_request(xt: np.ndarray, t: float, xfbp: np.ndarray) -> bytes:
    """Frame one prediction request: u32 length prefix, then the body."""
    xt = np.ascontiguousarray(xt, dtype="<f8")
    xfbp = np.ascontiguousarray(xfbp, dtype="<f8")
    if xt.ndim != 2 or xt.shape != xfbp.shape:
        raise DomainError("external predictor requires matching 2-D images")
    h, w = xt.shape
    body = struct.pack("<IdII", REQUEST_MAGIC, float(t), h, w)
    body += xt.tobytes() + xfbp.tobytes()
    return struct.pack("<I", len(body)) + body


def decode_response(body: bytes, h: int, w: int) -> np.ndarray:
    if len(body) != 4 + 8 * h * w:
        raise ProtocolError(f"response body has {len(body)} bytes, "
                            f"expected {4 + 8 * h * w}")
    (magic,) = struct.unpack_from("<I", body, 0)
    if magic != RESPONSE_MAGIC:
        raise ProtocolError(f"bad response magic 0x{magic:08x}")
    out = np.frombuffer(body, dtype="<f8", offset=4).reshape(h, w)
    return out.astype(float)


class ExternalPredictor:
    """Serve predictions from a child process over length-prefixed frames.

    One request is in flight at a time; concurrent callers serialize on an
    internal lock.  Use as a context manager or call close() to end the
    child.  Single 2-D images only.
    """

    def __init__(self, command: list[str]):
        self._proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        self._lock = threading.Lock()

    def __call__(self, xt, t, xfbp):
        xt = np.asarray(xt, dtype=float)
        frame = encode_request(xt, t, np.asarray(xfbp, dtype=float))
        with self._lock:
            if self._proc.poll() is not None:
                raise ProtocolError("external predictor process has exited")
            self._proc.stdin.write(frame)
            self._proc.stdin.flush()
            header = self._read_exact(4)
            (length,) = struct.unpack("<I", header)
            body = self._read_exact(length)
        return decode_response(body, *xt.shape)

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._proc.stdout.read(remaining)
            if not chunk:
                raise ProtocolError("external predictor closed its stream")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
