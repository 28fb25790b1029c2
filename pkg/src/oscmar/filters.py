"""Fourier-series filter parametrization with rotated, radially masked bases.

A ``p x p`` filter is the sampled continuous function

    phi(x) = sum_{q,t} a[q, t] * Omega(x) cos(w . x) + b[q, t] * Omega(x) sin(w . x),

with ``w = 2 pi / (p h) * (f(q), f(t))``. ``f`` is the identity for the plain
basis and the symmetric index remap for the alias-free one. Rotating a filter
means resampling ``phi`` at rotated grid coordinates, so every orientation
shares the same coefficients.
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

__all__ = [
    "BasisVariant",
    "CoefficientSet",
    "index_remap",
    "radial_mask",
    "rotate_coords",
    "eval_basis",
    "grid_coords",
    "basis_tensors",
    "bank_basis",
    "assemble_filter",
    "assemble_bank",
    "bank_angles",
    "fit_coefficients",
]


class BasisVariant(str, Enum):
    PLAIN = "plain"
    ALIAS_FREE = "alias_free"


@dataclass
class CoefficientSet:
    """Expansion coefficients shared across rotation angles.

    ``a`` and ``b`` have shape ``(K, p, p)`` and are indexed ``[k, q, t]``.
    ``b[k, 0, 0]`` multiplies an identically zero basis and is ignored.
    """

    p: int
    K: int
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    h: float = 0.25

    def __post_init__(self):
        if self.p < 1 or self.p % 2 == 0:
            raise ValueError(f"p must be a positive odd integer, got {self.p}")
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.h <= 0:
            raise ValueError(f"mesh size must be positive, got {self.h}")
        self.a = np.array(self.a, dtype=np.float64).reshape(self.K, self.p, self.p)
        self.b = np.array(self.b, dtype=np.float64).reshape(self.K, self.p, self.p)
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("coefficients must be finite")

    @classmethod
    def zeros(cls, p, K, h=0.25):
        return cls(p, K, np.zeros((K, p, p)), np.zeros((K, p, p)), h)

    @classmethod
    def random(cls, p, K, h=0.25, scale=None, seed=None):
        """I.i.d. uniform coefficients in ``[-scale, scale]`` (default ``0.1 / p``)."""
        rng = np.random.default_rng(seed)
        scale = 0.1 / p if scale is None else scale
        a = rng.uniform(-scale, scale, size=(K, p, p))
        b = rng.uniform(-scale, scale, size=(K, p, p))
        b[:, 0, 0] = 0.0
        return cls(p, K, a, b, h)

    def copy(self):
        return CoefficientSet(self.p, self.K, self.a.copy(), self.b.copy(), self.h)

    def to_array(self):
        """Stacked ``(2, K, p, p)`` array: index 0 holds ``a``, index 1 holds ``b``."""
        return np.stack([self.a, self.b])

    @classmethod
    def from_array(cls, arr, h):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[0] != 2 or arr.shape[2] != arr.shape[3]:
            raise ValueError(f"expected a (2, K, p, p) array, got {arr.shape}")
        return cls(arr.shape[2], arr.shape[1], arr[0], arr[1], h)


def index_remap(y, p):
    """Symmetric frequency index: ``y`` if ``2y <= p`` else ``y - p``."""
    if p < 1 or p % 2 == 0:
        raise ValueError(f"p must be a positive odd integer, got {p}")
    if not 0 <= y <= p - 1:
        raise ValueError(f"index {y} outside [0, {p - 1}]")
    return y if 2 * y <= p else y - p


def _cutoff(p, h):
    return (p + 1) * h / 2


def _mask_profile(r, p, h):
    R = _cutoff(p, h)
    r = np.asarray(r, dtype=np.float64)
    return np.where(r < R, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, R) / R)), 0.0)


def radial_mask(x, p, h):
    """Raised-cosine radial weight, 1 at the origin and 0 beyond ``(p + 1) h / 2``.

    ``x`` is a coordinate pair or an array with trailing dimension 2.
    """
    x = np.asarray(x, dtype=np.float64)
    out = _mask_profile(np.hypot(x[..., 0], x[..., 1]), p, h)
    return float(out) if out.ndim == 0 else out


def rotate_coords(theta, x):
    """Apply ``[[cos, -sin], [sin, cos]]^T`` to coordinates (trailing dimension 2)."""
    x = np.asarray(x, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    xi, xj = x[..., 0], x[..., 1]
    return np.stack([c * xi + s * xj, -s * xi + c * xj], axis=-1)


def _frequencies(p, variant):
    variant = BasisVariant(variant)
    if variant is BasisVariant.PLAIN:
        return np.arange(p, dtype=np.float64)
    return np.array([index_remap(y, p) for y in range(p)], dtype=np.float64)


def eval_basis(q, t, x, variant=BasisVariant.ALIAS_FREE, p=9, h=0.25):
    """Return ``(cos_value, sin_value)`` of basis ``(q, t)`` at coordinate(s) ``x``."""
    if not (0 <= q <= p - 1 and 0 <= t <= p - 1):
        raise ValueError(f"basis index ({q}, {t}) outside [0, {p - 1}]^2")
    x = np.asarray(x, dtype=np.float64)
    freq = _frequencies(p, variant)
    arg = 2 * np.pi / (p * h) * (freq[q] * x[..., 0] + freq[t] * x[..., 1])
    omega = radial_mask(x, p, h)
    cos_v, sin_v = omega * np.cos(arg), omega * np.sin(arg)
    if np.ndim(cos_v) == 0:
        return float(cos_v), float(sin_v)
    return cos_v, sin_v


def grid_coords(p, h):
    """Centered ``(p, p, 2)`` sampling grid; entry ``[i, j]`` is ``((i - c) h, (j - c) h)``."""
    if p < 1 or p % 2 == 0:
        raise ValueError(f"p must be a positive odd integer, got {p}")
    r = (np.arange(p) - (p - 1) / 2) * h
    xi, xj = np.meshgrid(r, r, indexing="ij")
    return np.stack([xi, xj], axis=-1)


def basis_tensors(p, h, theta, variant=BasisVariant.ALIAS_FREE):
    """Sampled bases at angle ``theta``: two ``(p, p, p, p)`` arrays indexed ``[q, t, i, j]``."""
    x = rotate_coords(theta, grid_coords(p, h))
    freq = _frequencies(p, variant)
    scale = 2 * np.pi / (p * h)
    arg = scale * (freq[:, None, None, None] * x[None, None, :, :, 0]
                   + freq[None, :, None, None] * x[None, None, :, :, 1])
    omega = radial_mask(x, p, h)
    phi_c = omega * np.cos(arg)
    phi_s = omega * np.sin(arg)
    phi_s[0, 0] = 0.0
    return phi_c, phi_s


def bank_angles(L):
    if L < 1:
        raise ValueError(f"angle count must be positive, got {L}")
    return 2 * np.pi * np.arange(L) / L


@lru_cache(maxsize=32)
def _bank_basis(p, h, L, variant):
    phis = [basis_tensors(p, h, theta, variant) for theta in bank_angles(L)]
    phi_c = np.stack([c for c, _ in phis])
    phi_s = np.stack([s for _, s in phis])
    phi_c.flags.writeable = False
    phi_s.flags.writeable = False
    return phi_c, phi_s


def bank_basis(p, h, L, variant=BasisVariant.ALIAS_FREE):
    """Cached read-only bases for all ``L`` angles, each ``(L, p, p, p, p)`` = ``[l, q, t, i, j]``."""
    return _bank_basis(int(p), float(h), int(L), BasisVariant(variant))


def assemble_filter(coeffs, k, theta, variant=BasisVariant.ALIAS_FREE):
    """Filter ``k`` (0-based) of ``coeffs`` rotated by ``theta`` radians."""
    if not 0 <= k < coeffs.K:
        raise ValueError(f"filter index {k} outside [0, {coeffs.K - 1}]")
    phi_c, phi_s = basis_tensors(coeffs.p, coeffs.h, theta, variant)
    return (np.einsum("qt,qtij->ij", coeffs.a[k], phi_c)
            + np.einsum("qt,qtij->ij", coeffs.b[k], phi_s))


def assemble_bank(coeffs, L, variant=BasisVariant.ALIAS_FREE):
    """All ``L * K`` filters as an ``(L * K, p, p)`` stack, l-major and k-minor."""
    phi_c, phi_s = bank_basis(coeffs.p, coeffs.h, L, variant)
    bank = (np.einsum("kqt,lqtij->lkij", coeffs.a, phi_c)
            + np.einsum("kqt,lqtij->lkij", coeffs.b, phi_s))
    return bank.reshape(L * coeffs.K, coeffs.p, coeffs.p)


def fit_coefficients(target, h=0.25, variant=BasisVariant.ALIAS_FREE, rcond=1e-10):
    """Least-squares coefficients reproducing a discrete ``p x p`` filter at angle 0.

    Uses a pseudo-inverse with singular values below ``rcond * s_max`` dropped,
    since the basis is rank deficient. Returns a single-filter :class:`CoefficientSet`.
    """
    target = np.asarray(target, dtype=np.float64)
    p = target.shape[0]
    if target.shape != (p, p):
        raise ValueError(f"target must be square, got {target.shape}")
    phi_c, phi_s = basis_tensors(p, h, 0.0, variant)
    design = np.concatenate([phi_c.reshape(p * p, -1), phi_s.reshape(p * p, -1)]).T
    sol = np.linalg.pinv(design, rcond=rcond) @ target.ravel()
    a, b = sol[:p * p].reshape(1, p, p), sol[p * p:].reshape(1, p, p)
    b[0, 0, 0] = 0.0
    return CoefficientSet(p, 1, a, b, h)
