"""Dense float64 tensors, zero-padded "same" 2D convolution and the OSCT file format.

Tensors are plain :class:`numpy.ndarray` objects of dtype float64. Convolution
is true convolution (kernel flipped); its adjoint is the matching correlation.
"""
import struct
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "PadMode",
    "conv2d",
    "conv2d_adjoint",
    "conv2d_fft",
    "conv2d_adjoint_fft",
    "masked_sq_norm",
    "fft_shape",
    "save_osct",
    "load_osct",
]

MAGIC = b"OSCT"
VERSION = 1


class PadMode(Enum):
    ZERO_SAME = "zero_same"


def _check(filt, image, pad):
    filt = np.asarray(filt, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    if PadMode(pad) is not PadMode.ZERO_SAME:
        raise ValueError(f"unsupported pad mode {pad!r}")
    if filt.ndim != 2 or filt.shape[0] != filt.shape[1]:
        raise ValueError(f"filter must be square 2D, got shape {filt.shape}")
    if image.ndim != 2:
        raise ValueError(f"map must be 2D, got shape {image.shape}")
    p = filt.shape[0]
    if p % 2 == 0:
        raise ValueError(f"filter size must be odd, got {p}")
    if p > min(image.shape):
        raise ValueError(f"filter size {p} exceeds image extent {image.shape}")
    return filt, image


def conv2d(filt, image, pad=PadMode.ZERO_SAME):
    """Direct zero-padded "same" convolution.

    ``out[i, j] = sum_{u,v} filt[u, v] * image[i - u + c, j - v + c]`` with
    ``c = (p - 1) // 2`` and zeros outside the image. Accumulation runs over
    the ``p * p`` taps in a fixed order.
    """
    filt, image = _check(filt, image, pad)
    p = filt.shape[0]
    c = (p - 1) // 2
    H, W = image.shape
    padded = np.zeros((H + p - 1, W + p - 1))
    padded[c:c + H, c:c + W] = image
    out = np.zeros((H, W))
    for u in range(p):
        for v in range(p):
            w = filt[u, v]
            if w != 0.0:
                # image[i - u + c] == padded[i - u + 2c]
                out += w * padded[2 * c - u:2 * c - u + H, 2 * c - v:2 * c - v + W]
    return out


def conv2d_adjoint(filt, residual, pad=PadMode.ZERO_SAME):
    """Exact adjoint of :func:`conv2d` (zero-padded correlation)."""
    filt, residual = _check(filt, residual, pad)
    p = filt.shape[0]
    c = (p - 1) // 2
    H, W = residual.shape
    padded = np.zeros((H + p - 1, W + p - 1))
    padded[c:c + H, c:c + W] = residual
    out = np.zeros((H, W))
    for u in range(p):
        for v in range(p):
            w = filt[u, v]
            if w != 0.0:
                # residual[m + u - c] == padded[m + u]
                out += w * padded[u:u + H, v:v + W]
    return out


def fft_shape(image_shape, p):
    """Linear-convolution FFT grid for an ``H x W`` map and ``p x p`` filters."""
    H, W = image_shape
    return H + p - 1, W + p - 1


def filter_spectrum(filters, image_shape):
    """rfft2 of one filter or a stack ``(..., p, p)`` on the linear-convolution grid."""
    filters = np.asarray(filters, dtype=np.float64)
    p = filters.shape[-1]
    return np.fft.rfft2(filters, s=fft_shape(image_shape, p))


def conv2d_fft(filt, image, pad=PadMode.ZERO_SAME):
    """FFT-based equivalent of :func:`conv2d`."""
    filt, image = _check(filt, image, pad)
    p = filt.shape[0]
    c = (p - 1) // 2
    H, W = image.shape
    s = fft_shape(image.shape, p)
    full = np.fft.irfft2(np.fft.rfft2(filt, s=s) * np.fft.rfft2(image, s=s), s=s)
    return full[c:c + H, c:c + W]


def conv2d_adjoint_fft(filt, residual, pad=PadMode.ZERO_SAME):
    """FFT-based equivalent of :func:`conv2d_adjoint`."""
    filt, residual = _check(filt, residual, pad)
    p = filt.shape[0]
    c = (p - 1) // 2
    H, W = residual.shape
    s = fft_shape(residual.shape, p)
    embedded = np.zeros(s)
    embedded[c:c + H, c:c + W] = residual
    full = np.fft.irfft2(np.conj(np.fft.rfft2(filt, s=s)) * np.fft.rfft2(embedded), s=s)
    return full[:H, :W]


def masked_sq_norm(t, mask):
    """``sum(mask * t**2)`` for a binary mask of the same shape."""
    t = np.asarray(t, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if t.shape != mask.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {mask.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must be binary")
    return float(np.sum(mask * t * t))


def save_osct(path, array):
    """Write ``array`` as an OSCT v1 file (little-endian u32 extents, f64 payload)."""
    array = np.ascontiguousarray(array, dtype=np.float64)
    if array.ndim > 255 or array.ndim == 0:
        raise ValueError(f"cannot store a {array.ndim}-d tensor")
    if not np.all(np.isfinite(array)):
        raise ValueError("tensor contains non-finite values")
    header = MAGIC + struct.pack("<BBH", VERSION, array.ndim, 0)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.astype("<f8").tobytes())


def load_osct(path):
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an OSCT file")
    version, ndim, reserved = struct.unpack("<BBH", raw[4:8])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported OSCT version {version}")
    if reserved != 0:
        raise ValueError(f"{path}: reserved header bytes must be zero")
    dims = struct.unpack(f"<{ndim}I", raw[8:8 + 4 * ndim])
    if any(d <= 0 for d in dims):
        raise ValueError(f"{path}: extents must be positive, got {dims}")
    payload = raw[8 + 4 * ndim:]
    expected = 8 * int(np.prod(dims))
    if len(payload) != expected:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
