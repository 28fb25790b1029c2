"""Alternating proximal-gradient separation of a CT image into clean image and artifact layer.

The problem solved is

    min_{M, X}  ||I * (Y - X - D(M))||_F^2 + alpha ||M||_1 + beta ||X - X_ref||_F^2,
    subject to 0 <= X <= 1,

where ``D`` is the dictionary synthesis operator. Each iteration takes one
proximal-gradient step in ``M`` (soft thresholding) and then one in ``X``
(weighted average with ``X_ref`` followed by clamping), the ``X`` step using
the freshly updated ``M``.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .model import adjoint, operator_norm, synthesize

__all__ = [
    "XInit",
    "SolverConfig",
    "SolverState",
    "SolveResult",
    "grad_M",
    "grad_X",
    "prox_l1",
    "prox_image",
    "objective",
    "lipschitz",
    "resolve_steps",
    "init_state",
    "step",
    "solve",
    "sparse_code",
    "smoothed_prior",
]

AUTO = "auto"
STEP_SAFETY = 0.99


class XInit(str, Enum):
    Y_CLONE = "yclone"
    ZERO = "zero"


@dataclass
class SolverConfig:
    """Solver parameters. ``eta1``/``eta2`` set to ``"auto"`` resolve to ``0.99 / Lipschitz``."""

    alpha: float = 1e-3
    beta: float = 0.0
    eta1: object = AUTO
    eta2: object = AUTO
    iterations: int = 100
    x_init: XInit = XInit.Y_CLONE
    record_history: bool = True

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.iterations < 0:
            raise ValueError(f"iterations must be non-negative, got {self.iterations}")
        for name in ("eta1", "eta2"):
            value = getattr(self, name)
            if value != AUTO and not value > 0:
                raise ValueError(f"{name} must be positive or 'auto', got {value!r}")
        self.x_init = XInit(self.x_init)


@dataclass
class SolverState:
    M: np.ndarray
    X: np.ndarray
    n: int = 0
    history: list = field(default_factory=list)


class SolveResult(NamedTuple):
    X: np.ndarray
    M: np.ndarray
    A: np.ndarray
    history: list


def _masked(I, r):
    # exact +0.0 outside the mask keeps metal-region inputs from leaking through signed zeros
    return np.where(I > 0, r, 0.0)


def _residual(state, dictionary, Y, I):
    Y = np.asarray(Y, dtype=np.float64)
    if not (Y.shape == np.shape(I) == state.X.shape == state.M.shape[1:]):
        raise ValueError(
            f"shape mismatch: Y {Y.shape}, I {np.shape(I)}, X {state.X.shape}, M {state.M.shape}")
    return _masked(I, synthesize(dictionary, state.M) + state.X - Y)


def grad_M(state, dictionary, Y, I):
    """``D^T(I * (D(M) + X - Y))``: gradient of ``0.5 ||I * (Y - X - D(M))||^2`` in ``M``."""
    return adjoint(dictionary, _residual(state, dictionary, Y, I))


def grad_X(state, dictionary, Y, I):
    """``I * (D(M) + X - Y)``."""
    return _residual(state, dictionary, Y, I)


def prox_l1(v, tau):
    """Soft thresholding ``sign(v) * max(|v| - tau, 0)``."""
    if tau < 0:
        raise ValueError(f"threshold must be non-negative, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def prox_image(v, reference=None, weight=0.0):
    """Clamp to ``[0, 1]``; with ``weight > 0`` first pull toward ``reference``.

    This is the proximal map of ``weight/2 ||x - reference||^2`` plus the box
    indicator, i.e. ``clip((v + weight * reference) / (1 + weight), 0, 1)``.
    """
    v = np.asarray(v, dtype=np.float64)
    if weight > 0:
        v = (v + weight * reference) / (1.0 + weight)
    return np.clip(v, 0.0, 1.0)


def objective(state, dictionary, Y, I, config, reference=None):
    """``||I * (Y - X - D(M))||_F^2 + alpha ||M||_1 + beta ||X - X_ref||_F^2``.

    The box indicator adds nothing for feasible ``X`` and ``inf`` otherwise.
    """
    r = _residual(state, dictionary, Y, I)
    value = float(np.sum(r * r)) + config.alpha * float(np.sum(np.abs(state.M)))
    if config.beta > 0 and reference is not None:
        d = state.X - reference
        value += config.beta * float(np.sum(d * d))
    if np.any(state.X < 0) or np.any(state.X > 1):
        return np.inf
    return value


def lipschitz(dictionary, image_shape, n_iter=50):
    """Upper estimate of ``||D^T D||``.

    Takes the larger of a power-iteration estimate and the peak of the summed
    filter power spectra, which bounds the zero-padded operator from above.
    """
    est = operator_norm(dictionary, image_shape, n_iter=n_iter) if n_iter else 0.0
    spectral = float(np.max(np.sum(np.abs(dictionary.spectrum(image_shape)) ** 2, axis=0)))
    return max(est, spectral)


def resolve_steps(config, dictionary, image_shape):
    """Concrete ``(eta1, eta2)`` for ``config``; fixed for the whole solve."""
    if config.eta1 == AUTO:
        lip = lipschitz(dictionary, image_shape)
        eta1 = STEP_SAFETY / lip if lip > 0 else 1.0
    else:
        eta1 = float(config.eta1)
    eta2 = STEP_SAFETY if config.eta2 == AUTO else float(config.eta2)
    return eta1, eta2


def init_state(Y, I, dictionary, config, x0=None):
    """Zero feature maps and ``X`` from ``x0``, ``config.x_init`` or the masked-mean clone of ``Y``."""
    Y = np.asarray(Y, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    M = np.zeros((dictionary.n_channels, *Y.shape))
    if x0 is not None:
        X = np.clip(np.array(x0, dtype=np.float64), 0.0, 1.0)
    elif config.x_init is XInit.ZERO:
        X = np.zeros_like(Y)
    else:
        keep = I > 0
        fill = float(Y[keep].mean()) if keep.any() else 0.0
        X = np.clip(np.where(keep, Y, fill), 0.0, 1.0)
    return SolverState(M, X)


def step(state, dictionary, Y, I, config, steps=None, reference=None):
    """One M update followed by one X update; returns a new state."""
    eta1, eta2 = steps if steps is not None else resolve_steps(config, dictionary, state.X.shape)
    # grad_M is half the gradient of the squared data term, hence alpha / 2
    M = prox_l1(state.M - eta1 * grad_M(state, dictionary, Y, I), 0.5 * config.alpha * eta1)
    mid = SolverState(M, state.X, state.n, state.history)
    weight = eta2 * config.beta if reference is not None else 0.0
    X = prox_image(state.X - eta2 * grad_X(mid, dictionary, Y, I), reference, weight)
    return SolverState(M, X, state.n + 1, list(state.history))


def _check_inputs(Y, I):
    Y = np.asarray(Y, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    if Y.shape != I.shape or Y.ndim != 2:
        raise ValueError(f"Y and I must be equal-shape 2D arrays, got {Y.shape} and {I.shape}")
    if not np.all((I == 0) | (I == 1)):
        raise ValueError("mask must be binary")
    return Y, I


def solve(Y, I, dictionary, config=None, x0=None, reference=None):
    """Run ``config.iterations`` alternating steps from ``M = 0``.

    ``x0`` overrides the initial image; ``reference`` is the image ``X_ref`` that
    ``beta`` pulls toward and defaults to the initial image.
    """
    config = config or SolverConfig()
    Y, I = _check_inputs(Y, I)
    state = init_state(Y, I, dictionary, config, x0)
    if config.beta > 0 and reference is None:
        reference = state.X.copy()
    steps = resolve_steps(config, dictionary, Y.shape) if config.iterations else (1.0, 1.0)
    if config.record_history:
        state.history.append(objective(state, dictionary, Y, I, config, reference))
    for _ in range(config.iterations):
        state = step(state, dictionary, Y, I, config, steps, reference)
        if config.record_history:
            state.history.append(objective(state, dictionary, Y, I, config, reference))
    return SolveResult(state.X, state.M, synthesize(dictionary, state.M), state.history)


def sparse_code(dictionary, target, I, alpha, iterations, eta=None, M0=None):
    """ISTA for ``min_M ||I * (target - D(M))||^2 + alpha ||M||_1`` from ``M0`` (default zeros)."""
    target = np.asarray(target, dtype=np.float64)
    if eta is None:
        eta = STEP_SAFETY / max(lipschitz(dictionary, target.shape, n_iter=0), 1e-300)
    M = np.zeros((dictionary.n_channels, *target.shape)) if M0 is None else M0.copy()
    for _ in range(iterations):
        r = _masked(I, synthesize(dictionary, M) - target)
        M = prox_l1(M - eta * adjoint(dictionary, r), 0.5 * alpha * eta)
    return M


def smoothed_prior(Y, I, sigma=1.0):
    """Mask-normalized Gaussian smoothing of ``Y``, usable as ``X_ref`` when no better prior exists.

    Pixels outside the mask neither contribute nor receive their own values;
    they are filled from the smoothed neighbourhood (or the masked mean when
    no masked pixel lies nearby).
    """
    Y, I = _check_inputs(Y, I)
    num = ndimage.gaussian_filter(Y * I, sigma, mode="reflect")
    den = ndimage.gaussian_filter(I, sigma, mode="reflect")
    fill = float(Y[I > 0].mean()) if I.any() else 0.0
    return np.clip(np.where(den > 1e-8, num / np.maximum(den, 1e-8), fill), 0.0, 1.0)
