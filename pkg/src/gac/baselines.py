"""Comparison complexity measures for linear smoothers.

ENP is the trace of the training smoother ``S``; GENP-V is the scaled trace
of ``S*^T S*`` for the out-of-sample smoother; GENP-RX rescales the observed
optimism into a degrees-of-freedom count; the parameter norm is the RKHS
norm of the fitted function.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError, MissingMatrixError, ShapeError

__all__ = [
    "SmootherMatrices",
    "ErrorSummary",
    "enp",
    "genp_v",
    "genp_rx",
    "param_norm",
    "error_summary",
]


@dataclass
class SmootherMatrices:
    """Training smoother ``s_in`` (n x n) and out-of-sample smoother ``s_out`` (n* x n)."""

    s_in: Optional[np.ndarray] = None
    s_out: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.s_in is not None:
            self.s_in = np.asarray(self.s_in, dtype=float)
        if self.s_out is not None:
            self.s_out = np.asarray(self.s_out, dtype=float)
        if self.s_in is not None and self.s_out is not None:
            if self.s_in.shape[1] != self.s_out.shape[1]:
                raise ShapeError("s_in and s_out must have the same number of columns")

    @property
    def n(self):
        src = self.s_in if self.s_in is not None else self.s_out
        return src.shape[1]

    @property
    def n_star(self):
        return None if self.s_out is None else self.s_out.shape[0]


@dataclass
class ErrorSummary:
    mse_in: float
    mse_out: float
    sigma2_hat: float

    def __post_init__(self):
        if min(self.mse_in, self.mse_out) < 0:
            raise DomainError("mean squared errors must be nonnegative")


def enp(s, normalized=False):
    """Effective number of parameters ``Tr(S)``; ``/ n`` when normalized."""
    if s.s_in is None:
        raise MissingMatrixError("ENP needs the training smoother s_in")
    m = s.s_in
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"s_in must be square, got shape {m.shape}")
    value = float(np.trace(m))
    return value / m.shape[0] if normalized else value


def genp_v(s, normalized=False):
    """``(n / n*) Tr(S*^T S*)``; ``/ n`` when normalized."""
    if s.s_out is None:
        raise MissingMatrixError("GENP-V needs the out-of-sample smoother s_out")
    n_star, n = s.s_out.shape
    value = n / n_star * float(np.sum(s.s_out * s.s_out))
    return value / n if normalized else value


def genp_rx(e, n, normalized=False):
    """Optimism-based effective parameter count ``n (mse_out - mse_in) / (2 sigma2_hat)``.

    Derived from the covariance-penalty relation
    ``E[optimism] = 2 sigma^2 df / n``. Negative optimism is returned as is.
    """
    if not e.sigma2_hat > 0:
        raise DomainError("sigma2_hat must be positive")
    value = n * (e.mse_out - e.mse_in) / (2.0 * e.sigma2_hat)
    return value / n if normalized else value


def error_summary(s, y, y_star, sigma2_hat):
    """In- and out-of-sample mean squared errors of a linear smoother."""
    y = np.asarray(y, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    mse_in = float(np.mean((y - s.s_in @ y) ** 2))
    mse_out = float(np.mean((y_star - s.s_out @ y) ** 2))
    return ErrorSummary(mse_in=mse_in, mse_out=mse_out, sigma2_hat=sigma2_hat)


def param_norm(alpha, k):
    """Squared feature-space parameter norm ``alpha^T K alpha`` of a kernel model."""
    alpha = np.asarray(alpha, dtype=float)
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or alpha.shape[0] != k.shape[0]:
        raise ShapeError(f"alpha of shape {alpha.shape} does not match K of shape {k.shape}")
    return float(np.sum(alpha * (k @ alpha)))
