"""Learning shared expansion coefficients from training pairs by alternating minimization.

For every sample the artifact target ``A_obs = I * (Y - X)`` is sparse coded
against the current dictionary, then the filter parameters take one gradient
step on

    ||I * (A_obs - D(M))||_F^2 + lambda1 ||I * (A_obs - D(M))||_1.

Shared dictionaries chain the filter gradient through the cached rotated
bases to the coefficients; free-filter dictionaries update the taps directly.
"""
from dataclasses import dataclass

import numpy as np

from .filters import BasisVariant, CoefficientSet
from .model import FreeDictionary, OSCDictionary, filter_gradient, synthesize
from .solver import lipschitz, sparse_code

__all__ = [
    "TrainConfig",
    "TrainSample",
    "init_dictionary",
    "init_free_dictionary",
    "coeff_gradient",
    "sample_loss",
    "training_loss",
    "normalize_dictionary",
    "extract_patches",
    "train",
]


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 5e-3
    alpha: float = 0.1
    inner_iters: int = 30
    lambda1: float = 0.0
    seed: int = 0
    norm_constraint: bool = True
    optimizer: str = "adam"
    warm_start: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.inner_iters < 0:
            raise ValueError("epochs and inner_iters must be non-negative")
        if self.lr < 0 or self.alpha < 0 or self.lambda1 < 0:
            raise ValueError("lr, alpha and lambda1 must be non-negative")
        if self.optimizer not in ("adam", "sgd", "linesearch"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainSample:
    Y: np.ndarray
    X: np.ndarray
    I: np.ndarray

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=np.float64)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.I = np.asarray(self.I, dtype=np.float64)
        if not self.Y.shape == self.X.shape == self.I.shape:
            raise ValueError("Y, X and I must share one shape")
        if not np.all((self.I == 0) | (self.I == 1)):
            raise ValueError("mask must be binary")

    @property
    def a_obs(self):
        return self.I * (self.Y - self.X)


def init_dictionary(p=9, L=8, K=4, h=0.25, variant=BasisVariant.ALIAS_FREE, seed=0):
    """Shared dictionary with i.i.d. uniform coefficients in ``[-0.1/p, 0.1/p]``."""
    return OSCDictionary(CoefficientSet.random(p, K, h, seed=seed), L, variant)


def init_free_dictionary(p=9, L=8, K=4, seed=0):
    """Free-filter baseline with ``L * K`` independent uniform filters in ``[-0.1/p, 0.1/p]``."""
    rng = np.random.default_rng(seed)
    return FreeDictionary(rng.uniform(-0.1 / p, 0.1 / p, size=(L * K, p, p)), L)


def _loss_parts(dictionary, M, sample):
    r = sample.I * (sample.a_obs - synthesize(dictionary, M))
    return r, float(np.sum(r * r)), float(np.sum(np.abs(r)))


def sample_loss(dictionary, M, sample, lambda1=0.0):
    _, sq, l1 = _loss_parts(dictionary, M, sample)
    return sq + lambda1 * l1


def _filter_grad(dictionary, M, sample, lambda1):
    r, _, _ = _loss_parts(dictionary, M, sample)
    # d/dD of ||r||^2 is -2 r; the L1 subgradient uses sign(0) = 0
    weight = -2.0 * r - lambda1 * sample.I * np.sign(r)
    return filter_gradient(M, weight, dictionary.p)


def coeff_gradient(dictionary, M, sample, lambda1=0.0):
    """Loss gradient with respect to the dictionary parameters.

    Returns ``(grad_a, grad_b)`` of shape ``(K, p, p)`` for an
    :class:`OSCDictionary` and an ``(L * K, p, p)`` tap gradient for a
    :class:`FreeDictionary`.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (dictionary.n_channels, *sample.Y.shape):
        raise ValueError(f"feature maps have shape {M.shape}")
    G = _filter_grad(dictionary, M, sample, lambda1)
    if isinstance(dictionary, FreeDictionary):
        return G
    phi_c, phi_s = dictionary.bases()
    G = G.reshape(dictionary.L, dictionary.K, dictionary.p, dictionary.p)
    grad_a = np.einsum("lkij,lqtij->kqt", G, phi_c)
    grad_b = np.einsum("lkij,lqtij->kqt", G, phi_s)
    grad_b[:, 0, 0] = 0.0
    return grad_a, grad_b


def training_loss(dictionary, dataset, config):
    """Mean sample loss with feature maps freshly sparse coded from zero."""
    total = 0.0
    for sample in dataset:
        eta = 0.99 / max(lipschitz(dictionary, sample.Y.shape, n_iter=0), 1e-300)
        M = sparse_code(dictionary, sample.a_obs, sample.I, config.alpha, config.inner_iters, eta=eta)
        total += sample_loss(dictionary, M, sample, config.lambda1)
    return total / len(dataset)


def normalize_dictionary(dictionary):
    """Rescale each filter family so its angle-0 member has unit Frobenius norm."""
    if isinstance(dictionary, FreeDictionary):
        norms = np.linalg.norm(dictionary.filters.reshape(dictionary.n_channels, -1), axis=1)
        norms[norms == 0] = 1.0
        return dictionary.with_filters(dictionary.filters / norms[:, None, None])
    norms = np.linalg.norm(dictionary.filters[:dictionary.K].reshape(dictionary.K, -1), axis=1)
    norms[norms == 0] = 1.0
    c = dictionary.coeffs
    scaled = CoefficientSet(c.p, c.K, c.a / norms[:, None, None], c.b / norms[:, None, None], c.h)
    return dictionary.with_coeffs(scaled)


class _Adam:
    def __init__(self, lr, beta1=0.5, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def update(self, params, grad):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _params(dictionary):
    if isinstance(dictionary, FreeDictionary):
        return dictionary.filters.copy()
    return dictionary.coeffs.to_array()


def _with_params(dictionary, params):
    if isinstance(dictionary, FreeDictionary):
        return dictionary.with_filters(params)
    params = params.copy()
    params[1, :, 0, 0] = 0.0
    return dictionary.with_coeffs(CoefficientSet.from_array(params, dictionary.h))


def _grad(dictionary, M, sample, lambda1):
    g = coeff_gradient(dictionary, M, sample, lambda1)
    return g if isinstance(dictionary, FreeDictionary) else np.stack(g)


def _exact_step(dictionary, M, grad, I):
    """Minimizer of the squared loss along ``-grad``: ``|g|^2 / (2 |I * D_g(M)|^2)``.

    The masked squared data term is quadratic in the filter parameters, so its
    restriction to the gradient direction has this closed-form minimizer;
    ``D_g`` is the dictionary whose parameters are ``grad`` itself. With a
    nonzero ``lambda1`` the step ignores the L1 term.
    """
    direction = I * synthesize(_with_params(dictionary, grad), M)
    curvature = float(np.sum(direction * direction))
    return float(np.sum(grad * grad)) / (2.0 * curvature) if curvature > 0 else 0.0


def extract_patches(sample, size, count, rng):
    """Random ``size x size`` crops of a sample, biased toward pixels with artifact energy."""
    H, W = sample.Y.shape
    if size >= min(H, W):
        return [sample]
    energy = np.abs(sample.a_obs)[: H - size + 1, : W - size + 1]
    weights = energy.ravel() + energy.mean() + 1e-12
    picks = rng.choice(weights.size, size=count, p=weights / weights.sum())
    out = []
    for idx in picks:
        i, j = divmod(int(idx), W - size + 1)
        sl = np.s_[i:i + size, j:j + size]
        out.append(TrainSample(sample.Y[sl], sample.X[sl], sample.I[sl]))
    return out


def train(dataset, dictionary, config, callback=None):
    """Alternate sparse coding and parameter steps over ``config.epochs`` epochs.

    Samples are visited in a seeded random order each epoch. With
    ``config.warm_start`` each sample's sparse coding resumes from its feature
    maps of the previous epoch, so the codes keep converging across epochs
    instead of being limited to ``inner_iters`` steps from zero. Returns the final
    dictionary and a loss curve of ``epochs + 1`` entries: entry 0 is
    :func:`training_loss` of the initial dictionary, entry ``e`` the mean
    sample loss during epoch ``e``, each measured right after that sample's
    sparse coding step.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(config.seed)
    opt = _Adam(config.lr) if config.optimizer == "adam" else None
    curve = [training_loss(dictionary, dataset, config)]
    codes = [None] * len(dataset)
    for epoch in range(config.epochs):
        total = 0.0
        for idx in rng.permutation(len(dataset)):
            sample = dataset[idx]
            eta = 0.99 / max(lipschitz(dictionary, sample.Y.shape, n_iter=0), 1e-300)
            M = sparse_code(dictionary, sample.a_obs, sample.I, config.alpha,
                            config.inner_iters, eta=eta, M0=codes[idx])
            if config.warm_start:
                codes[idx] = M
            total += sample_loss(dictionary, M, sample, config.lambda1)
            if config.lr > 0:
                params, grad = _params(dictionary), _grad(dictionary, M, sample, config.lambda1)
                if opt is not None:
                    params = opt.update(params, grad)
                elif config.optimizer == "linesearch":
                    params = params - config.lr * _exact_step(dictionary, M, grad, sample.I) * grad
                else:
                    params = params - config.lr * grad
                dictionary = _with_params(dictionary, params)
            if config.norm_constraint:
                dictionary = normalize_dictionary(dictionary)
        curve.append(total / len(dataset))
        if callback is not None:
            callback(epoch, curve[-1], dictionary)
    return dictionary, curve
