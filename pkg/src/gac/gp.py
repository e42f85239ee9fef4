"""Gaussian-process posterior in kernel form and in feature-space form.

With a finite feature map ``phi`` and prior ``theta ~ N(0, I)``, the GP
with kernel ``K = phi phi^T`` and noise ``lam`` has a posterior that can be
sampled in parameter space. The tangent kernel of ``f(x) = theta^T phi(x)``
stays ``K`` before and after conditioning, whereas the GP covariance
(the GPK) shrinks. This separates model complexity from function complexity.
"""
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import factorial

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .complexity import gac_from_kernel
from .exceptions import DomainError, ShapeError, SingularityError
from .kernels import KernelSpec, kernel_matrix
from .numerics import solve_spd

__all__ = [
    "GpProblem",
    "GpPosterior",
    "GpkNtkReport",
    "gp_posterior",
    "theta_posterior_sample",
    "gpk_ntk_report",
    "feature_map",
    "prior_function_draws",
    "GaussianProcess",
]


@dataclass
class GpProblem:
    """Training data, query points, kernel and noise level.

    ``mean`` and ``mean_train`` are prior means at the query and training
    points; both default to zero.
    """

    x_train: np.ndarray
    y: np.ndarray
    x_query: np.ndarray
    spec: KernelSpec
    lam: float = 1e-5
    mean: np.ndarray = None
    mean_train: np.ndarray = None

    def __post_init__(self):
        self.x_train = _as_2d(self.x_train)
        self.x_query = _as_2d(self.x_query)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape[0] != self.x_train.shape[0]:
            raise ShapeError("y must have one entry per training point")
        if self.x_train.shape[1] != self.x_query.shape[1]:
            raise ShapeError("training and query points differ in dimension")
        if self.lam < 0:
            raise DomainError("lam must be nonnegative")
        n, nt = self.x_query.shape[0], self.x_train.shape[0]
        self.mean = np.zeros(n) if self.mean is None else np.asarray(self.mean, float)
        self.mean_train = (np.zeros(nt) if self.mean_train is None
                           else np.asarray(self.mean_train, float))


@dataclass(frozen=True)
class GpPosterior:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class GpkNtkReport:
    prior_gpk: np.ndarray
    posterior_gpk: np.ndarray
    ntk: np.ndarray
    gac_prior_gpk: float
    gac_posterior_gpk: float
    gac_ntk: float


def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _solve_train(k_tt, lam, rhs):
    try:
        return solve_spd(k_tt + lam * np.eye(k_tt.shape[0]), rhs)
    except SingularityError as exc:
        raise SingularityError(
            "K_tt + lam*I is singular; increase lam (e.g. 1e-8) as jitter"
        ) from exc


def gp_posterior(problem):
    """Posterior mean ``mu + K_t^T (K_tt + lam I)^{-1} (y - mu_t)`` and covariance."""
    p = problem
    k = kernel_matrix(p.spec, p.x_query)
    k_t = kernel_matrix(p.spec, p.x_train, p.x_query)
    k_tt = kernel_matrix(p.spec, p.x_train)
    sol = _solve_train(k_tt, p.lam, np.column_stack([p.y - p.mean_train, k_t]))
    mean = p.mean + k_t.T @ sol[:, 0]
    cov = k - k_t.T @ sol[:, 1:]
    return GpPosterior(mean=mean, cov=0.5 * (cov + cov.T))


def theta_posterior_sample(phi_t, y, lam, z):
    """Posterior parameter draw(s) in feature space.

    ``theta = (Phi^T Phi + lam I)^{-1} Phi^T y + (I + Phi^T Phi / lam)^{-1/2} z``.

    Parameters
    ----------
    phi_t : ndarray (n_t, p)
    y : ndarray (n_t,)
    lam : float
        0 gives the minimum-norm least-squares fit plus the prior draw
        projected onto the null space of ``phi_t``.
    z : ndarray (p,) or (p, m)
        Standard normal draws; columns give independent samples.
    """
    phi_t = np.asarray(phi_t, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if lam < 0:
        raise DomainError("lam must be nonnegative")
    p = phi_t.shape[1]
    if z.shape[0] != p:
        raise ShapeError(f"z needs {p} rows, got {z.shape[0]}")
    gram = phi_t.T @ phi_t
    s, v = np.linalg.eigh(0.5 * (gram + gram.T))
    s = np.maximum(s, 0.0)
    if lam == 0:
        det = np.linalg.pinv(phi_t) @ y
        tol = s.max(initial=0.0) * p * np.finfo(float).eps
        scale = (s <= tol).astype(float)
    else:
        det = np.linalg.solve(gram + lam * np.eye(p), phi_t.T @ y)
        scale = 1.0 / np.sqrt(np.maximum(1.0 + s / lam, 1e-12))
    shrink = (v * scale) @ v.T
    rand = shrink @ z
    return rand + (det[:, None] if z.ndim == 2 else det)


def gpk_ntk_report(problem):
    """Prior GPK, posterior GPK and NTK at the query points, with their GACs."""
    post = gp_posterior(problem)
    k = kernel_matrix(problem.spec, problem.x_query)
    g_prior = gac_from_kernel(k).value
    return GpkNtkReport(
        prior_gpk=k,
        posterior_gpk=post.cov,
        ntk=k,
        gac_prior_gpk=g_prior,
        gac_posterior_gpk=gac_from_kernel(post.cov).value,
        gac_ntk=g_prior,
    )


def feature_map(spec, x):
    """Explicit finite feature map with ``phi(x)^T phi(x') = k(x, x')``.

    Available for the linear and polynomial kernels only. The polynomial map
    lists all degree-``p`` monomials of ``(sqrt(c), x_1, ..., x_d)`` weighted
    by square-rooted multinomial coefficients.
    """
    x = _as_2d(x)
    if spec.kind == "linear":
        return np.column_stack([np.full(len(x), np.sqrt(spec.c)), x])
    if spec.kind != "polynomial":
        raise DomainError(f"no finite feature map for the {spec.kind} kernel")
    u = np.column_stack([np.full(len(x), np.sqrt(spec.c)), x])
    p = int(spec.p)
    cols = []
    for combo in combinations_with_replacement(range(u.shape[1]), p):
        counts = np.bincount(combo, minlength=u.shape[1])
        coef = factorial(p) / np.prod([factorial(int(m)) for m in counts])
        cols.append(np.sqrt(coef) * np.prod(u[:, list(combo)], axis=1))
    if not cols:  # p = 0
        return np.ones((len(x), 1))
    return np.column_stack(cols)


def prior_function_draws(phi, n_draws, random_state=None):
    """Draw ``f = Phi theta`` for ``theta ~ N(0, I)``; returns (n_draws, n)."""
    phi = np.asarray(phi, dtype=float)
    rng = np.random.default_rng(random_state)
    return rng.standard_normal((n_draws, phi.shape[1])) @ phi.T


class GaussianProcess(RegressorMixin, BaseEstimator):
    """GP regression with a fixed kernel and noise level ``lam``."""

    def __init__(self, kernel="gaussian", p=1, c=1.0, l=1.0, nu=1.5, lam=1e-5):
        self.kernel = kernel
        self.p = p
        self.c = c
        self.l = l
        self.nu = nu
        self.lam = lam

    @property
    def spec(self):
        return KernelSpec(kind=self.kernel, p=self.p, c=self.c, l=self.l, nu=self.nu)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if self.lam < 0:
            raise DomainError("lam must be nonnegative")
        self.X_fit_ = X
        self.y_fit_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def posterior(self, X):
        check_is_fitted(self, "X_fit_")
        return gp_posterior(GpProblem(self.X_fit_, self.y_fit_, check_array(X), self.spec,
                                      self.lam))

    def predict(self, X, return_cov=False):
        post = self.posterior(X)
        return (post.mean, post.cov) if return_cov else post.mean

    def report(self, X):
        check_is_fitted(self, "X_fit_")
        return gpk_ntk_report(GpProblem(self.X_fit_, self.y_fit_, check_array(X), self.spec,
                                        self.lam))
