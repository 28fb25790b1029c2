"""scikit-learn style wrappers around dictionary learning and artifact removal.

Image stacks are ``(n_samples, H, W)`` arrays; single ``(H, W)`` images are
promoted to a stack of one. Masks mark non-metal pixels with 1.
"""
from os import PathLike

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .filters import BasisVariant
from .learn import (
    TrainConfig, TrainSample, extract_patches, init_dictionary, init_free_dictionary, train,
    training_loss,
)
from .model import FreeDictionary, OSCDictionary, load_dictionary
from .solver import SolverConfig, smoothed_prior, solve, sparse_code

__all__ = ["check_image_stack", "check_mask_stack", "DictionaryLearner", "ArtifactRemover"]


def check_image_stack(images, name="images"):
    """Finite float64 ``(n, H, W)`` copy of ``images``."""
    arr = check_array(images, allow_nd=True, ensure_2d=False, dtype=np.float64,
                      input_name=name, copy=True)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be an image or a stack of images, got shape {arr.shape}")
    return arr


def check_mask_stack(mask, shape, name="mask"):
    """Binary ``(n, H, W)`` mask matching ``shape``; ``None`` means all pixels count."""
    if mask is None:
        return np.ones(shape)
    arr = check_image_stack(mask, name)
    if arr.shape[0] == 1 and shape[0] > 1:
        arr = np.broadcast_to(arr, shape).copy()
    if arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match images {tuple(shape)}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be binary")
    return arr


class DictionaryLearner(BaseEstimator):
    """Learn a rotation-shared (or free-filter) convolutional dictionary from paired images.

    ``fit(Y, X_clean, mask)`` trains on the artifact layers ``mask * (Y - X_clean)``
    using ``patches_per_sample`` random crops of side ``patch_size`` per image
    (the whole image when ``patch_size`` is ``None``).

    Attributes
    ----------
    dictionary_ : OSCDictionary or FreeDictionary
    loss_curve_ : list of float, ``epochs + 1`` entries
    """

    def __init__(self, p=9, L=8, K=4, h=0.25, variant="alias_free", shared=True, epochs=10,
                 lr=1e-2, alpha=0.01, inner_iters=30, lambda1=0.0, norm_constraint=True,
                 patch_size=64, patches_per_sample=2, optimizer="adam", seed=0):
        self.p = p
        self.L = L
        self.K = K
        self.h = h
        self.variant = variant
        self.shared = shared
        self.epochs = epochs
        self.lr = lr
        self.alpha = alpha
        self.inner_iters = inner_iters
        self.lambda1 = lambda1
        self.norm_constraint = norm_constraint
        self.patch_size = patch_size
        self.patches_per_sample = patches_per_sample
        self.optimizer = optimizer
        self.seed = seed

    def _config(self):
        return TrainConfig(epochs=self.epochs, lr=self.lr, alpha=self.alpha,
                           inner_iters=self.inner_iters, lambda1=self.lambda1, seed=self.seed,
                           norm_constraint=self.norm_constraint, optimizer=self.optimizer)

    def _samples(self, Y, X_clean, mask):
        Y = check_image_stack(Y, "Y")
        X_clean = check_image_stack(X_clean, "X_clean")
        if X_clean.shape != Y.shape:
            raise ValueError(f"X_clean shape {X_clean.shape} does not match Y {Y.shape}")
        mask = check_mask_stack(mask, Y.shape)
        return [TrainSample(y, x, m) for y, x, m in zip(Y, X_clean, mask)]

    def fit(self, Y, X_clean, mask=None):
        config = self._config()
        samples = self._samples(Y, X_clean, mask)
        rng = np.random.default_rng(self.seed)
        if self.patch_size is not None:
            samples = [patch for s in samples
                       for patch in extract_patches(s, self.patch_size, self.patches_per_sample, rng)]
        if self.shared:
            init = init_dictionary(self.p, self.L, self.K, self.h, BasisVariant(self.variant), self.seed)
        else:
            init = init_free_dictionary(self.p, self.L, self.K, self.seed)
        self.dictionary_, self.loss_curve_ = train(samples, init, config)
        self.n_params_ = (2 * self.p * self.p - 1) * self.K if self.shared else self.p ** 2 * self.L * self.K
        return self

    def transform(self, artifacts, mask=None):
        """Sparse feature maps ``(n, L*K, H, W)`` coding each artifact image."""
        check_is_fitted(self, "dictionary_")
        A = check_image_stack(artifacts, "artifacts")
        mask = check_mask_stack(mask, A.shape)
        return np.stack([sparse_code(self.dictionary_, a, m, self.alpha, self.inner_iters)
                         for a, m in zip(A, mask)])

    def score(self, Y, X_clean, mask=None):
        """Negative mean training loss on the given pairs (higher is better)."""
        check_is_fitted(self, "dictionary_")
        return -training_loss(self.dictionary_, self._samples(Y, X_clean, mask), self._config())


class ArtifactRemover(BaseEstimator, TransformerMixin):
    """Separate corrupted images into clean image and dictionary-sparse artifact layer.

    ``dictionary`` is a dictionary object or a path to a ``dict.meta`` file.
    ``prior`` selects the reference image ``beta`` pulls toward when
    :meth:`transform` receives no explicit prior images: ``"smooth"`` (mask-
    normalized Gaussian smoothing of the input, width ``prior_sigma``) or
    ``"init"`` (the solver's initial image).

    Attributes set by :meth:`transform`: ``artifacts_`` (the artifact layers)
    and ``histories_`` (objective histories).
    """

    def __init__(self, dictionary=None, alpha=0.01, beta=0.3, iterations=50, eta1="auto",
                 eta2="auto", x_init="yclone", prior="smooth", prior_sigma=1.0):
        self.dictionary = dictionary
        self.alpha = alpha
        self.beta = beta
        self.iterations = iterations
        self.eta1 = eta1
        self.eta2 = eta2
        self.x_init = x_init
        self.prior = prior
        self.prior_sigma = prior_sigma

    def fit(self, Y=None, y=None):
        """Resolve the dictionary; no parameters are estimated from ``Y``."""
        if self.dictionary is None:
            raise ValueError("ArtifactRemover needs a dictionary")
        if isinstance(self.dictionary, (str, PathLike)):
            self.dictionary_ = load_dictionary(self.dictionary)
        elif isinstance(self.dictionary, (OSCDictionary, FreeDictionary)):
            self.dictionary_ = self.dictionary
        else:
            raise TypeError(f"unsupported dictionary {type(self.dictionary).__name__}")
        if self.prior not in ("smooth", "init"):
            raise ValueError(f"prior must be 'smooth' or 'init', got {self.prior!r}")
        self.config_ = SolverConfig(alpha=self.alpha, beta=self.beta, eta1=self.eta1,
                                    eta2=self.eta2, iterations=self.iterations, x_init=self.x_init)
        return self

    def solve_one(self, y, mask, prior=None):
        """Full :class:`~oscmar.solver.SolveResult` for a single image."""
        check_is_fitted(self, "dictionary_")
        x0 = reference = None
        if prior is not None:
            x0 = reference = prior
        elif self.prior == "smooth" and self.beta > 0:
            reference = smoothed_prior(y, mask, self.prior_sigma)
        return solve(y, mask, self.dictionary_, self.config_, x0=x0, reference=reference)

    def transform(self, Y, mask=None, prior=None):
        """Clean image estimates, one per input image.

        ``prior`` (optional, same shape as ``Y``) supplies per-image reference
        images, e.g. an interpolation-corrected reconstruction; they also
        serve as the initial ``X``.
        """
        check_is_fitted(self, "dictionary_")
        Y = check_image_stack(Y, "Y")
        mask = check_mask_stack(mask, Y.shape)
        priors = [None] * len(Y) if prior is None else check_image_stack(prior, "prior")
        if prior is not None and priors.shape != Y.shape:
            raise ValueError(f"prior shape {priors.shape} does not match Y {Y.shape}")
        results = [self.solve_one(y, m, r) for y, m, r in zip(Y, mask, priors)]
        self.artifacts_ = np.stack([r.A for r in results])
        self.histories_ = [r.history for r in results]
        return np.stack([r.X for r in results])

    predict = transform
