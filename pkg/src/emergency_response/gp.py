"""Exact Gaussian process regression with fixed hyperparameters.

The model is the textbook one: with training inputs ``X`` (n x d), targets
``y`` and a stationary kernel ``k``,

    K      = k(X, X) + noise * I
    mean   = prior_mean + k(x*, X) K^-1 (y - prior_mean)
    var    = k(x*, x*) - k(x*, X) K^-1 k(X, x*)

``K`` is factorized once with a Cholesky decomposition at fit time. The
returned variance is that of the latent function; observation noise is not
added at the query point.

Hyperparameters are never learned from data. The defaults (Matern 5/2,
signal variance 0.01, noise 0.01, length scale 0.2 on a unit action box) are
those used by the response generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_point, as_points, as_series, check_positive
from .exceptions import NumericalFailureError

KERNEL_KINDS = ("matern52", "matern32", "squared_exponential")

# Escalation ladder tried when K is not numerically positive definite.
JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class KernelSpec:
    """Stationary isotropic covariance function.

    Parameters
    ----------
    kind : {"matern52", "matern32", "squared_exponential"}
    length_scale : float
        Distance scale in input units.
    output_scale : float
        Signal variance; ``k(x, x) == output_scale``.
    """

    kind: str = "matern52"
    length_scale: float = 0.2
    output_scale: float = 0.01

    def __post_init__(self):
        key = "".join(ch for ch in self.kind.lower() if ch.isalnum())
        aliases = {"se": "squared_exponential", "rbf": "squared_exponential", "squaredexponential": "squared_exponential"}
        kind = aliases.get(key, key)
        if kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        object.__setattr__(self, "kind", kind)
        check_positive(self.length_scale, "length_scale")
        check_positive(self.output_scale, "output_scale")

    def from_distance(self, r: np.ndarray) -> np.ndarray:
        """Covariance as a function of Euclidean distance ``r``."""
        s = np.asarray(r, dtype=float) / self.length_scale
        if self.kind == "matern52":
            t = np.sqrt(5.0) * s
            return self.output_scale * (1.0 + t + t * t / 3.0) * np.exp(-t)
        if self.kind == "matern32":
            t = np.sqrt(3.0) * s
            return self.output_scale * (1.0 + t) * np.exp(-t)
        return self.output_scale * np.exp(-0.5 * s * s)

    def __call__(self, A, B) -> np.ndarray:
        """Cross-covariance matrix between the rows of ``A`` and ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[1] != B.shape[1]:
            raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        diff = A[:, None, :] - B[None, :, :]
        return self.from_distance(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Covariance between two single points."""
    a = as_point(a, name="a")
    b = as_point(b, name="b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(spec.from_distance(np.linalg.norm(a - b)))


def _factorize(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, escalating diagonal jitter on failure.

    A factor obtained with jitter ``j`` is only accepted when its smallest
    pivot is clearly larger than ``j``; otherwise positive definiteness is an
    artefact of the jitter (e.g. duplicated inputs without noise).
    """
    n = K.shape[0]
    eye = np.eye(n)
    for jitter in JITTER_LEVELS:
        try:
            L = np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        if jitter == 0.0 or np.min(np.diag(L)) ** 2 > 10.0 * jitter:
            return L, jitter
    tried = ", ".join(f"{j:g}" for j in JITTER_LEVELS)
    raise NumericalFailureError(
        f"covariance matrix ({n}x{n}) is not positive definite; jitter levels tried: {tried}"
    )


class GaussianProcess(RegressorMixin, BaseEstimator):
    """GP regressor with fixed kernel, noise and constant prior mean.

    Parameters
    ----------
    kernel : KernelSpec, optional
        Defaults to ``KernelSpec()`` (Matern 5/2, length 0.2, variance 0.01).
    noise : float
        Observation-noise variance added to the diagonal of K.
    prior_mean : float
        Constant mean function.

    Attributes
    ----------
    X_train_, y_train_ : ndarray
    L_ : ndarray
        Lower Cholesky factor of K (plus ``jitter_`` on the diagonal).
    alpha_ : ndarray
        ``K^-1 (y - prior_mean)``.
    """

    def __init__(self, kernel: KernelSpec | None = None, noise: float = 0.01, prior_mean: float = 0.0):
        self.kernel = kernel
        self.noise = noise
        self.prior_mean = prior_mean

    @property
    def kernel_(self) -> KernelSpec:
        return self.kernel if self.kernel is not None else KernelSpec()

    def fit(self, X, y):
        """Assemble K, factorize it and cache the weight vector.

        ``X`` may have zero rows (shape ``(0, d)``); the model then returns
        the prior everywhere.
        """
        if self.noise < 0:
            raise ValueError(f"noise must be nonnegative, got {self.noise}")
        X = as_points(X)
        y = as_series(y, name="y")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        kern = self.kernel_
        self.X_train_ = X
        self.y_train_ = y
        self.n_features_in_ = X.shape[1]
        K = kern(X, X) + self.noise * np.eye(X.shape[0])
        self.K_ = K
        if X.shape[0] == 0:
            self.L_ = np.zeros((0, 0))
            self.jitter_ = 0.0
            self.alpha_ = np.zeros(0)
            return self
        self.L_, self.jitter_ = _factorize(K)
        self.alpha_ = cho_solve((self.L_, True), y - self.prior_mean)
        return self

    def predict(self, X, return_var: bool = False):
        """Posterior mean (and latent variance) at the rows of ``X``."""
        check_is_fitted(self, "L_")
        X = as_points(X, dim=self.n_features_in_)
        kern = self.kernel_
        if self.X_train_.shape[0] == 0:
            mean = np.full(X.shape[0], float(self.prior_mean))
            var = np.full(X.shape[0], kern.output_scale)
        else:
            Ks = kern(X, self.X_train_)
            mean = self.prior_mean + Ks @ self.alpha_
            v = solve_triangular(self.L_, Ks.T, lower=True, check_finite=False)
            var = np.maximum(kern.output_scale - np.einsum("ij,ij->j", v, v), 0.0)
        return (mean, var) if return_var else mean


def fit_gp(X, y, kernel: KernelSpec | None = None, noise: float = 0.01, prior_mean: float = 0.0) -> GaussianProcess:
    return GaussianProcess(kernel=kernel, noise=noise, prior_mean=prior_mean).fit(X, y)


def posterior(model: GaussianProcess, x_star) -> tuple[float, float]:
    """Posterior ``(mean, variance)`` at a single point."""
    mean, var = model.predict(as_point(x_star, dim=model.n_features_in_)[None, :], return_var=True)
    return float(mean[0]), float(var[0])
