"""Parallel-beam CT simulation: phantoms, Radon transform, FBP, metal corruption and LI.

Image pixel ``(i, j)`` sits at coordinate ``(i - c, j - c)`` with ``c = (N - 1) / 2``.
View ``v`` looks along angle ``phi = 2 pi v / n_views``; detector offset ``s``
measures position along ``(cos phi, sin phi)`` and rays run along
``(-sin phi, cos phi)``.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

__all__ = [
    "Geometry",
    "Ellipse",
    "MetalDisk",
    "PhantomSpec",
    "random_phantom_spec",
    "make_phantom",
    "radon",
    "metal_trace",
    "ramp_filter",
    "backproject",
    "fbp",
    "corrupt",
    "li_correct",
    "UnrecoverableViewError",
    "make_pair",
    "li_image",
]

RAY_STEP = 0.25
TRACE_EPS = 1e-12
SUBPIXELS = 4


@dataclass(frozen=True)
class Geometry:
    n_views: int = 180
    n_det: int = 185
    det_spacing: float = 1.0
    image_size: int = 128

    def __post_init__(self):
        if self.n_views < 2:
            raise ValueError(f"need at least 2 views, got {self.n_views}")
        if self.image_size < 1 or self.n_det < 1 or self.det_spacing <= 0:
            raise ValueError("image size, detector count and spacing must be positive")
        span = self.n_det * self.det_spacing
        if span < np.sqrt(2) * (self.image_size - 1):
            raise ValueError(f"detector span {span} does not cover the image diagonal")

    @property
    def angles(self):
        return 2 * np.pi * np.arange(self.n_views) / self.n_views

    @property
    def offsets(self):
        return (np.arange(self.n_det) - (self.n_det - 1) / 2) * self.det_spacing


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    axes: tuple
    angle: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if min(self.axes) <= 0:
            raise ValueError(f"ellipse semi-axes must be positive, got {self.axes}")


@dataclass(frozen=True)
class MetalDisk:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"metal radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class PhantomSpec:
    """Ellipses add their intensities; coordinates are pixels relative to the image center.

    ``blur`` is a Gaussian sigma (pixels) applied before clamping to ``[0, 1]``.
    ``metal_value`` is the intensity that replaces the phantom inside metal disks.
    ``texture`` adds smooth seeded noise of that standard deviation inside the body
    (pixels above 0.05); it is a raster effect and is not rotated by :meth:`rotated`.
    """

    ellipses: tuple = ()
    metals: tuple = ()
    blur: float = 0.0
    metal_value: float = 3.0
    texture: float = 0.0
    texture_seed: int = 0

    def rotated(self, angle):
        """Phantom rotated by ``angle`` radians in the (row, col) coordinate plane."""
        rot = _rotation(angle)
        return replace(
            self,
            ellipses=tuple(replace(e, center=tuple(rot @ e.center), angle=e.angle + angle)
                           for e in self.ellipses),
            metals=tuple(replace(m, center=tuple(rot @ m.center)) for m in self.metals),
        )


def _rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def random_phantom_spec(seed, size=128, n_metals=None, centered_metal=False):
    """Body ellipse with soft-tissue and bone-like inserts plus 1-3 metal disks."""
    rng = np.random.default_rng(seed)
    half = size / 2
    body_axes = (half * rng.uniform(0.62, 0.78), half * rng.uniform(0.5, 0.7))
    ellipses = [Ellipse((0.0, 0.0), body_axes, rng.uniform(-0.3, 0.3), rng.uniform(0.3, 0.45))]
    for _ in range(rng.integers(3, 7)):
        ellipses.append(Ellipse(
            tuple(rng.uniform(-0.45, 0.45, 2) * np.array(body_axes)),
            tuple(half * rng.uniform(0.06, 0.22, 2)),
            rng.uniform(0, np.pi),
            rng.uniform(-0.15, 0.25),
        ))
    for _ in range(rng.integers(1, 4)):
        ellipses.append(Ellipse(
            tuple(rng.uniform(-0.55, 0.55, 2) * np.array(body_axes)),
            tuple(half * rng.uniform(0.03, 0.09, 2)),
            rng.uniform(0, np.pi),
            rng.uniform(0.3, 0.5),
        ))
    if n_metals is None:
        n_metals = int(rng.integers(1, 4))
    metals = []
    for m in range(n_metals):
        if centered_metal and m == 0:
            center = (0.0, 0.0)
        else:
            center = tuple(rng.uniform(-0.5, 0.5, 2) * np.array(body_axes))
        metals.append(MetalDisk(center, float(rng.uniform(3.0, 7.0)) * size / 128))
    return PhantomSpec(tuple(ellipses), tuple(metals), blur=0.8, texture=0.03, texture_seed=int(seed))


def _coords(size):
    c = (size - 1) / 2
    return np.meshgrid(np.arange(size) - c, np.arange(size) - c, indexing="ij")


def make_phantom(spec=None, size=128):
    """Rasterize a phantom; returns ``(clean image in [0, 1], binary metal mask)``.

    ``spec`` may be a :class:`PhantomSpec`, an integer seed for
    :func:`random_phantom_spec`, or ``None`` for an empty phantom.
    """
    if spec is None:
        spec = PhantomSpec()
    elif not isinstance(spec, PhantomSpec):
        spec = random_phantom_spec(int(spec), size)
    u, v = _coords(size)
    # ellipses are rasterized by their area coverage on a SUBPIXELS x SUBPIXELS grid
    offsets = (np.arange(SUBPIXELS) + 0.5) / SUBPIXELS - 0.5
    fine = (np.arange(size)[:, None] + offsets[None, :]).ravel() - (size - 1) / 2
    fu, fv = np.meshgrid(fine, fine, indexing="ij")
    image = np.zeros((size, size))
    for e in spec.ellipses:
        c, s = np.cos(e.angle), np.sin(e.angle)
        du, dv = fu - e.center[0], fv - e.center[1]
        ru = (c * du + s * dv) / e.axes[0]
        rv = (-s * du + c * dv) / e.axes[1]
        inside = (ru * ru + rv * rv <= 1.0).reshape(size, SUBPIXELS, size, SUBPIXELS)
        image += e.intensity * inside.mean(axis=(1, 3))
    if spec.blur > 0:
        image = ndimage.gaussian_filter(image, spec.blur, mode="constant")
    image = np.clip(image, 0.0, 1.0)
    if spec.texture > 0:
        noise = ndimage.gaussian_filter(
            np.random.default_rng(spec.texture_seed).standard_normal(image.shape), 1.0)
        noise *= spec.texture / noise.std()
        image = np.clip(image + np.where(image > 0.05, noise, 0.0), 0.0, 1.0)
    metal = np.zeros((size, size))
    for m in spec.metals:
        metal[(u - m.center[0]) ** 2 + (v - m.center[1]) ** 2 <= m.radius ** 2] = 1.0
    return image, metal


def radon(image, geom):
    """Line integrals by bilinear ray sampling at quarter-pixel steps, ``(n_views, n_det)``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"radon needs a square image, got {image.shape}")
    n = image.shape[0]
    c = (n - 1) / 2
    reach = np.sqrt(2) * (c + 1)
    tau = np.arange(-reach, reach + RAY_STEP / 2, RAY_STEP)
    s = geom.offsets
    sino = np.empty((geom.n_views, geom.n_det))
    for k, phi in enumerate(geom.angles):
        cp, sp = np.cos(phi), np.sin(phi)
        rows = s[:, None] * cp - tau[None, :] * sp + c
        cols = s[:, None] * sp + tau[None, :] * cp + c
        vals = ndimage.map_coordinates(image, [rows.ravel(), cols.ravel()],
                                       order=1, mode="constant", cval=0.0)
        sino[k] = vals.reshape(rows.shape).sum(axis=1) * RAY_STEP
    return sino


def metal_trace(metal_mask, geom):
    """Binary sinogram support of the forward-projected metal mask."""
    return (radon(metal_mask, geom) > TRACE_EPS).astype(np.float64)


def ramp_filter(sino, det_spacing=1.0, crop=True):
    """Ram-Lak ``|omega|`` filtering of each view through a ``2 * n_det`` zero-padded FFT.

    With ``crop=False`` the full padded rows are returned; their sums vanish
    because the ramp removes the DC component.
    """
    sino = np.asarray(sino, dtype=np.float64)
    n_det = sino.shape[1]
    n_fft = 2 * n_det
    ramp = np.abs(np.fft.rfftfreq(n_fft, d=det_spacing))
    out = np.fft.irfft(np.fft.rfft(sino, n=n_fft, axis=1) * ramp, n=n_fft, axis=1)
    return out[:, :n_det] if crop else out


def backproject(sino, geom):
    """Sum of views smeared back with linear detector interpolation (unscaled)."""
    sino = np.asarray(sino, dtype=np.float64)
    u, v = _coords(geom.image_size)
    s = geom.offsets
    out = np.zeros((geom.image_size, geom.image_size))
    for row, phi in zip(sino, geom.angles):
        out += np.interp(u * np.cos(phi) + v * np.sin(phi), s, row, left=0.0, right=0.0)
    return out


def fbp(sino, geom):
    """Backprojection scaled by ``pi / n_views``; pass a ramp-filtered sinogram for FBP."""
    return backproject(sino, geom) * (np.pi / geom.n_views)


def corrupt(sino, trace, severity, length_scale=None):
    """Beam-hardening surrogate inside the metal trace.

    With ``w = v / length_scale`` (line integrals measured in units of the
    field-of-view radius, ``n_det / 2`` cells by default), traced cells gain the
    increment ``length_scale * severity * w**2``, i.e. become
    ``length_scale * (w + severity * w**2)``. On traced cells bordering the
    untraced region the increment is amplified by ``1 + severity``, clipped to
    the largest increment inside the trace. Cells outside the trace are untouched.
    """
    if severity < 0:
        raise ValueError(f"severity must be non-negative, got {severity}")
    sino = np.asarray(sino, dtype=np.float64)
    trace = np.asarray(trace) > 0
    if trace.shape != sino.shape:
        raise ValueError(f"trace shape {trace.shape} does not match sinogram {sino.shape}")
    out = sino.copy()
    if not trace.any() or severity == 0:
        return out
    scale = float(sino.shape[1] / 2 if length_scale is None else length_scale)
    w = sino / scale
    increment = scale * severity * w * w
    cap = increment[trace].max()
    interior = trace.copy()
    interior[:, 1:] &= trace[:, :-1]
    interior[:, :-1] &= trace[:, 1:]
    border = trace & ~interior
    increment[border] = np.minimum(increment[border] * (1 + severity), cap)
    out[trace] += increment[trace]
    return out


class UnrecoverableViewError(ValueError):
    """A whole detector row lies inside the metal trace."""


def li_correct(sino, trace):
    """Replace traced detector cells by linear interpolation along each view."""
    sino = np.asarray(sino, dtype=np.float64)
    trace = np.asarray(trace) > 0
    out = sino.copy()
    idx = np.arange(sino.shape[1])
    for k in range(sino.shape[0]):
        bad = trace[k]
        if not bad.any():
            continue
        if bad.all():
            raise UnrecoverableViewError(f"view {k} is entirely inside the metal trace")
        good = ~bad
        out[k, bad] = np.interp(idx[bad], idx[good], sino[k, good])
    return out


def _ct_image(sino, geom):
    return np.clip(fbp(ramp_filter(sino, geom.det_spacing), geom), 0.0, 1.0)


def make_pair(seed, geom=None, severity=0.5, spec=None, with_li=False):
    """Paired ``(Y, X, I, metal_mask)`` from a seeded random phantom.

    ``X`` is the reconstruction of the metal-free phantom and ``Y`` that of the
    phantom with metal after sinogram corruption. With ``with_li`` the LI
    baseline reconstruction is appended to the tuple.
    """
    geom = geom or Geometry()
    if spec is None:
        spec = random_phantom_spec(seed, geom.image_size)
    phantom, metal = make_phantom(spec, geom.image_size)
    clean_sino = radon(phantom, geom)
    X = _ct_image(clean_sino, geom)
    I = 1.0 - metal
    if not metal.any():
        Y = _ct_image(corrupt(clean_sino, np.zeros_like(clean_sino), severity), geom)
        result = (Y, X, I, metal)
        return result + (Y.copy(),) if with_li else result
    trace = metal_trace(metal, geom)
    with_metal = np.where(metal > 0, spec.metal_value, phantom)
    metal_sino = radon(with_metal, geom)
    Y = _ct_image(corrupt(metal_sino, trace, severity), geom)
    result = (Y, X, I, metal)
    if with_li:
        result += (_ct_image(li_correct(metal_sino, trace), geom),)
    return result


def li_image(Y_sino, trace, geom):
    """LI baseline reconstruction from a (corrupted) sinogram and its metal trace."""
    return _ct_image(li_correct(Y_sino, trace), geom)
