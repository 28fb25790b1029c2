"""Orientation-shared convolutional dictionaries: synthesis, adjoint, accounting, storage.

Feature maps are stored channels-first as ``(L * K, H, W)`` arrays, channel
``l * K + k`` pairing filter ``k`` with rotation angle ``2 pi l / L``.
"""
from enum import Enum
from pathlib import Path

import numpy as np

from .filters import BasisVariant, CoefficientSet, assemble_bank, bank_basis
from .tensor import conv2d, conv2d_adjoint, fft_shape, load_osct, save_osct

__all__ = [
    "OSCDictionary",
    "FreeDictionary",
    "CountMode",
    "synthesize",
    "adjoint",
    "filter_gradient",
    "param_count",
    "operator_norm",
    "save_dictionary",
    "load_dictionary",
]


class _FilterBank:
    """Shared machinery for dictionaries backed by an ``(n_channels, p, p)`` filter stack."""

    filters: np.ndarray

    @property
    def p(self):
        return self.filters.shape[-1]

    @property
    def n_channels(self):
        return self.filters.shape[0]

    def spectrum(self, image_shape):
        """rfft2 of every filter on the linear-convolution grid for ``image_shape``."""
        key = tuple(image_shape)
        cache = self.__dict__.setdefault("_spectra", {})
        if key not in cache:
            spec = np.fft.rfft2(self.filters, s=fft_shape(key, self.p))
            spec.flags.writeable = False
            cache[key] = spec
        return cache[key]


class OSCDictionary(_FilterBank):
    """``L * K`` rotated filters assembled from one shared :class:`CoefficientSet`.

    Instances are treated as immutable; :meth:`with_coeffs` returns a rebuilt copy.
    """

    def __init__(self, coeffs, L, variant=BasisVariant.ALIAS_FREE):
        if L < 1:
            raise ValueError(f"angle count must be positive, got {L}")
        self.coeffs = coeffs
        self.L = int(L)
        self.variant = BasisVariant(variant)
        self.filters = assemble_bank(coeffs, self.L, self.variant)
        self.filters.flags.writeable = False

    def __repr__(self):
        return (f"OSCDictionary(p={self.p}, L={self.L}, K={self.K}, "
                f"h={self.coeffs.h}, variant={self.variant.value})")

    @property
    def K(self):
        return self.coeffs.K

    @property
    def h(self):
        return self.coeffs.h

    def with_coeffs(self, coeffs):
        return OSCDictionary(coeffs, self.L, self.variant)

    def bases(self):
        return bank_basis(self.p, self.h, self.L, self.variant)


class FreeDictionary(_FilterBank):
    """Unconstrained filter stack; the non-shared baseline with ``L * K`` free filters."""

    variant = None

    def __init__(self, filters, L=1):
        filters = np.array(filters, dtype=np.float64)
        if filters.ndim != 3 or filters.shape[1] != filters.shape[2] or filters.shape[1] % 2 == 0:
            raise ValueError(f"expected (n, p, p) filters with odd p, got {filters.shape}")
        if filters.shape[0] % L:
            raise ValueError(f"{filters.shape[0]} filters do not split into {L} angles")
        self.L = int(L)
        self.filters = filters
        self.filters.flags.writeable = False

    def __repr__(self):
        return f"FreeDictionary(p={self.p}, n_filters={self.n_channels})"

    @property
    def K(self):
        return self.n_channels // self.L

    def with_filters(self, filters):
        return FreeDictionary(filters, self.L)


def _check_maps(dictionary, M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 3 or M.shape[0] != dictionary.n_channels:
        raise ValueError(
            f"feature maps must have shape ({dictionary.n_channels}, H, W), got {M.shape}")
    return M


def synthesize(dictionary, M, method="fft"):
    """Artifact layer ``sum_c filters[c] (*) M[c]`` with zero-padded same convolution."""
    M = _check_maps(dictionary, M)
    H, W = M.shape[1:]
    if method == "direct":
        out = np.zeros((H, W))
        for filt, m in zip(dictionary.filters, M):
            out += conv2d(filt, m)
        return out
    p = dictionary.p
    c = (p - 1) // 2
    s = fft_shape((H, W), p)
    spec = dictionary.spectrum((H, W))
    full = np.fft.irfft2(np.einsum("cuv,cuv->uv", spec, np.fft.rfft2(M, s=s)), s=s)
    return full[c:c + H, c:c + W]


def adjoint(dictionary, residual, method="fft"):
    """Per-channel correlation of ``residual`` with each filter; returns ``(C, H, W)``."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.ndim != 2:
        raise ValueError(f"residual must be 2D, got shape {residual.shape}")
    if method == "direct":
        return np.stack([conv2d_adjoint(f, residual) for f in dictionary.filters])
    H, W = residual.shape
    p = dictionary.p
    c = (p - 1) // 2
    s = fft_shape((H, W), p)
    embedded = np.zeros(s)
    embedded[c:c + H, c:c + W] = residual
    spec = dictionary.spectrum((H, W))
    full = np.fft.irfft2(np.conj(spec) * np.fft.rfft2(embedded)[None], s=s)
    return full[:, :H, :W]


def filter_gradient(M, residual, p):
    """Gradient of ``<residual, sum_c f_c (*) M[c]>`` with respect to each ``p x p`` filter.

    Entry ``[c, u, v]`` is ``sum_ij residual[i, j] * M[c, i - u + r, j - v + r]``
    with ``r = (p - 1) // 2``.
    """
    M = np.asarray(M, dtype=np.float64)
    H, W = residual.shape
    r = (p - 1) // 2
    s = fft_shape((H, W), p)
    corr = np.fft.irfft2(np.fft.rfft2(residual, s=s)[None] * np.conj(np.fft.rfft2(M, s=s)), s=s)
    # lag u - r wraps to index (u - r) mod s
    rows = (np.arange(p) - r) % s[0]
    cols = (np.arange(p) - r) % s[1]
    return corr[:, rows][:, :, cols]


class CountMode(str, Enum):
    PARAMETRIZED = "parametrized"
    FREE_FILTERS = "free_filters"


def param_count(dictionary, mode=CountMode.PARAMETRIZED):
    """Learnable filter parameters: ``2 p^2 K - K`` shared coefficients, or ``p^2 L K`` free taps."""
    mode = CountMode(mode)
    p, L, K = dictionary.p, dictionary.L, dictionary.K
    if mode is CountMode.FREE_FILTERS:
        return p * p * L * K
    return 2 * p * p * K - K


def operator_norm(dictionary, image_shape, n_iter=50, seed=0):
    """Power-iteration estimate of the largest eigenvalue of ``adjoint o synthesize``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((dictionary.n_channels, *image_shape))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = adjoint(dictionary, synthesize(dictionary, v))
        lam = float(np.vdot(v, w))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return lam


META_KEYS = ("p", "L", "K", "h", "variant", "coeffs")


def save_dictionary(path, dictionary):
    """Write ``dict.meta`` (fixed-order ``key=value`` lines) plus an OSCT parameter file beside it.

    Shared dictionaries store their ``(2, K, p, p)`` coefficients; free
    dictionaries store the ``(L * K, p, p)`` filter stack with ``variant=free``.
    """
    path = Path(path)
    data_name = path.stem + ".coeffs.osct"
    if isinstance(dictionary, OSCDictionary):
        save_osct(path.parent / data_name, dictionary.coeffs.to_array())
        variant, h = dictionary.variant.value, dictionary.h
    else:
        save_osct(path.parent / data_name, dictionary.filters)
        variant, h = "free", 0.0
    values = {"p": dictionary.p, "L": dictionary.L, "K": dictionary.K,
              "h": repr(float(h)), "variant": variant, "coeffs": data_name}
    path.write_text("".join(f"{k}={values[k]}\n" for k in META_KEYS))


def load_dictionary(path):
    path = Path(path)
    meta = {}
    for line in path.read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise ValueError(f"{path}: missing keys {missing}")
    p, L, K = int(meta["p"]), int(meta["L"]), int(meta["K"])
    arr = load_osct(path.parent / meta["coeffs"])
    if meta["variant"] == "free":
        if arr.shape != (L * K, p, p):
            raise ValueError(f"{path}: filter stack has shape {arr.shape}")
        return FreeDictionary(arr, L)
    coeffs = CoefficientSet.from_array(arr, float(meta["h"]))
    if (coeffs.p, coeffs.K) != (p, K):
        raise ValueError(f"{path}: coefficient shape {arr.shape} disagrees with header")
    return OSCDictionary(coeffs, L, meta["variant"])
