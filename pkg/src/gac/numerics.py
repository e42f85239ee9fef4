"""Dense linear algebra and special functions.

Eigenvalues, Cholesky solves, the gamma function and the modified Bessel
function of the second kind ``K_nu``. Everything operates on float64 numpy
arrays and is free of shared state.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import linalg, special

from .exceptions import DomainError, ShapeError, SingularityError

__all__ = [
    "Spectrum",
    "check_symmetric",
    "sym_eigvals",
    "solve_spd",
    "gamma_fn",
    "bessel_k",
    "log_bessel_k",
]

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a symmetric matrix, sorted in descending order."""

    eigenvalues: np.ndarray

    @property
    def normalized_eigenvalues(self):
        """Eigenvalues divided by their sum (the trace).

        Raises
        ------
        DomainError
            If the trace is not positive.
        """
        total = self.eigenvalues.sum()
        if not total > 0:
            raise DomainError("normalized eigenvalues need a positive trace")
        return self.eigenvalues / total


def check_symmetric(m, name="matrix"):
    """Return ``m`` as a float array after verifying it is square and symmetric."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape}")
    tol = SYMMETRY_RTOL * np.maximum(1.0, np.abs(m))
    if np.any(np.abs(m - m.T) > tol):
        raise ShapeError(f"{name} is not symmetric")
    return m


def sym_eigvals(m):
    """Eigenvalues of a symmetric matrix.

    Parameters
    ----------
    m : array-like of shape (n, n)
        Symmetric matrix (checked to ``1e-12`` relative).

    Returns
    -------
    Spectrum
    """
    m = check_symmetric(m)
    # eigvalsh only reads one triangle; symmetrizing keeps both halves in play
    vals = np.linalg.eigvalsh(0.5 * (m + m.T))
    return Spectrum(eigenvalues=vals[::-1].copy())


def solve_spd(a, b):
    """Solve ``a @ x = b`` for symmetric positive definite ``a`` via Cholesky."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"a must be square, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ShapeError(f"b has {b.shape[0]} rows, expected {a.shape[0]}")
    try:
        factor = linalg.cho_factor(a, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularityError(
            "matrix is not positive definite; consider adding jitter to the diagonal"
        ) from exc
    return linalg.cho_solve(factor, b)


def gamma_fn(x):
    """Gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"gamma_fn requires x > 0, got {x}")
    return float(special.gamma(x))


def _half_integer_order(nu):
    m = nu - 0.5
    if m >= 0 and m == int(m) and m <= 20:
        return int(m)
    return None


def _bessel_k_half(m, z):
    # K_{m+1/2}(z) = sqrt(pi/(2z)) e^{-z} sum_k (m+k)! / (k! (m-k)!) (2z)^{-k}
    z = np.asarray(z, dtype=float)
    total = np.zeros_like(z)
    for k in range(m + 1):
        coef = math.factorial(m + k) / (math.factorial(k) * math.factorial(m - k))
        total = total + coef * (2.0 * z) ** (-k)
    return np.sqrt(np.pi / (2.0 * z)) * np.exp(-z) * total


def bessel_k(nu, z):
    """Modified Bessel function of the second kind ``K_nu(z)``.

    Half-integer orders up to 20.5 use the terminating closed form; other
    orders go through :func:`scipy.special.kv`. Accepts scalar or array ``z``.
    """
    nu = float(nu)
    if not nu > 0:
        raise DomainError(f"bessel_k requires nu > 0, got {nu}")
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr > 0)):
        raise DomainError("bessel_k requires z > 0")
    m = _half_integer_order(nu)
    out = _bessel_k_half(m, z_arr) if m is not None else special.kv(nu, z_arr)
    return float(out) if np.ndim(z) == 0 else out


def _log_bessel_k_debye(nu, z):
    # Uniform asymptotic expansion in nu with two correction terms.
    t = z / nu
    s = np.sqrt(1.0 + t * t)
    eta = s + np.log(t / (1.0 + s))
    p = 1.0 / s
    u1 = (3.0 * p - 5.0 * p**3) / 24.0
    u2 = (81.0 * p**2 - 462.0 * p**4 + 385.0 * p**6) / 1152.0
    series = 1.0 - u1 / nu + u2 / nu**2
    return 0.5 * np.log(np.pi / (2.0 * nu)) - nu * eta - 0.5 * np.log(s) + np.log(series)


def log_bessel_k(nu, z):
    """``log K_nu(z)`` for array ``z > 0``, robust to overflow for large ``nu``.

    Uses ``log(kve) - z`` where that is finite and falls back to the Debye
    expansion where ``K_nu`` overflows double precision.
    """
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        kve = special.kve(nu, z)
        out = np.log(kve) - z
    bad = ~np.isfinite(out)
    if np.any(bad):
        out = np.where(bad, _log_bessel_k_debye(nu, np.where(bad, z, 1.0)), out)
    return out
