"""Planted-model instances: known streak dictionaries and sparse feature maps."""
import numpy as np

from .filters import BasisVariant, CoefficientSet, fit_coefficients, grid_coords
from .model import OSCDictionary, synthesize

__all__ = ["streak_targets", "streak_dictionary", "sparse_maps", "planted_artifact"]


def streak_targets(p=9, K=4, width=0.7):
    """``K`` line-like ``p x p`` prototypes: ridge, edge, bar pair and blob (cycled if ``K > 4``).

    Coordinates are in pixels; ``width`` is the Gaussian cross-section sigma.
    """
    g = grid_coords(p, 1.0)
    u, v = g[..., 0], g[..., 1]
    along = np.exp(-v * v / (2 * (p / 3) ** 2))
    shapes = [
        np.exp(-u * u / (2 * width ** 2)) * along,
        -u / width * np.exp(-u * u / (2 * width ** 2)) * along,
        (np.exp(-(u - 1.5) ** 2 / (2 * width ** 2)) - np.exp(-(u + 1.5) ** 2 / (2 * width ** 2))
         ) * along * np.sign(v + 1e-9),
        np.exp(-(u * u + v * v) / (2 * (1.5 * width) ** 2)),
    ]
    out = np.stack([shapes[k % len(shapes)] for k in range(K)])
    return out / np.linalg.norm(out.reshape(K, -1), axis=1)[:, None, None]


def streak_dictionary(p=9, L=8, K=4, h=0.25, variant=BasisVariant.ALIAS_FREE):
    """Shared dictionary whose angle-0 filters best fit :func:`streak_targets`."""
    fits = [fit_coefficients(t, h, variant) for t in streak_targets(p, K)]
    coeffs = CoefficientSet(p, K, np.concatenate([f.a for f in fits]),
                            np.concatenate([f.b for f in fits]), h)
    dictionary = OSCDictionary(coeffs, L, variant)
    norms = np.linalg.norm(dictionary.filters[:K].reshape(K, -1), axis=1)
    scaled = CoefficientSet(p, K, coeffs.a / norms[:, None, None], coeffs.b / norms[:, None, None], h)
    return OSCDictionary(scaled, L, variant)


def sparse_maps(n_channels, shape, density=0.01, amplitude=1.0, rng=None):
    """Feature maps with i.i.d. Bernoulli(``density``) support and ``+-amplitude * U[0.5, 1.5]`` values."""
    rng = np.random.default_rng(rng)
    size = (n_channels, *shape)
    support = rng.random(size) < density
    values = amplitude * rng.uniform(0.5, 1.5, size) * rng.choice([-1.0, 1.0], size)
    return np.where(support, values, 0.0)


def planted_artifact(dictionary, shape, density=0.01, amplitude=1.0, rng=None):
    """``(A, M)`` with ``A = synthesize(dictionary, M)`` for sparse random ``M``."""
    M = sparse_maps(dictionary.n_channels, shape, density, amplitude, rng)
    return synthesize(dictionary, M), M
