"""Closed-form kernels, kernel matrices and normalization."""
from dataclasses import asdict, dataclass
import json

import numpy as np
from scipy import special

from .exceptions import DomainError, NormalizationError, ShapeError
from .numerics import bessel_k, log_bessel_k

__all__ = [
    "KernelSpec",
    "kernel_eval",
    "kernel_matrix",
    "normalize",
    "ntk_gram",
    "matern_from_distance",
]

KINDS = ("linear", "polynomial", "gaussian", "laplace", "matern")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and its hyperparameters.

    ``linear`` is ``c + x.x'``, ``polynomial`` is ``(c + x.x')**p``,
    ``gaussian`` is ``exp(-|x-x'|^2 / (2 l^2))``, ``laplace`` is
    ``exp(-|x-x'| / l)`` and ``matern`` is the Matérn covariance with
    length scale ``l`` and smoothness ``nu`` (unit variance).
    """

    kind: str
    p: int = 1
    c: float = 1.0
    l: float = 1.0
    nu: float = 1.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "polynomial":
            if self.c <= 0:
                raise DomainError("polynomial kernel requires c > 0")
            if self.p < 0 or int(self.p) != self.p:
                raise DomainError("polynomial kernel requires an integer degree p >= 0")
        if self.kind == "linear" and self.c < 0:
            raise DomainError("linear kernel requires c >= 0")
        if self.kind in ("gaussian", "laplace", "matern") and not self.l > 0:
            raise DomainError(f"{self.kind} kernel requires l > 0")
        if self.kind == "matern" and not self.nu > 0:
            raise DomainError("matern kernel requires nu > 0")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "kind" not in d:
            raise DomainError("kernel spec needs a 'kind' field")
        unknown = set(d) - {"kind", "p", "c", "l", "nu"}
        if unknown:
            raise DomainError(f"unknown kernel spec fields: {sorted(unknown)}")
        if "p" in d:
            d["p"] = int(d["p"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        """Parse e.g. ``{"kind": "matern", "l": 0.5, "nu": 1.5}``."""
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        d = asdict(self)
        keep = {
            "linear": ("c",),
            "polynomial": ("p", "c"),
            "gaussian": ("l",),
            "laplace": ("l",),
            "matern": ("l", "nu"),
        }[self.kind]
        return {"kind": self.kind, **{k: d[k] for k in keep}}

    def with_params(self, **changes):
        return KernelSpec(**{**asdict(self), **changes})


def _as_points(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D point set, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ShapeError(f"{name} is empty")
    return a


def _sq_dists(a, b):
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def matern_from_distance(r, l, nu):
    """Matérn covariance as a function of distance ``r`` (array), exactly 1 at r = 0."""
    r = np.asarray(r, dtype=float)
    z = np.sqrt(2.0 * nu) * r / l
    out = np.ones_like(z)
    pos = z > 0
    if np.any(pos):
        zp = z[pos]
        if float(nu - 0.5).is_integer() and nu <= 20.5:
            vals = 2.0 ** (1.0 - nu) / special.gamma(nu) * zp**nu * bessel_k(nu, zp)
        else:
            logk = (1.0 - nu) * np.log(2.0) - special.gammaln(nu) + nu * np.log(zp)
            logk = logk + log_bessel_k(nu, zp)
            vals = np.exp(logk)
        out[pos] = np.minimum(vals, 1.0)
    return out


def _kernel_from_parts(spec, a, b):
    if spec.kind == "linear":
        return spec.c + a @ b.T
    if spec.kind == "polynomial":
        return (spec.c + a @ b.T) ** spec.p
    d2 = _sq_dists(a, b)
    if spec.kind == "gaussian":
        return np.exp(-d2 / (2.0 * spec.l**2))
    r = np.sqrt(d2)
    if spec.kind == "laplace":
        return np.exp(-r / spec.l)
    return matern_from_distance(r, spec.l, spec.nu)


def kernel_eval(spec, x, x2):
    """Evaluate ``spec`` at a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.ndim != 1:
        raise ShapeError(f"points must be vectors of equal length, got {x.shape} and {x2.shape}")
    if spec.kind in ("linear", "polynomial"):
        return float(_kernel_from_parts(spec, x[None, :], x2[None, :])[0, 0])
    r = float(np.sqrt(max(0.0, float(((x - x2) ** 2).sum()))))
    if spec.kind == "gaussian":
        return float(np.exp(-r * r / (2.0 * spec.l**2)))
    if spec.kind == "laplace":
        return float(np.exp(-r / spec.l))
    return float(matern_from_distance(np.array([r]), spec.l, spec.nu)[0])


def kernel_matrix(spec, a, b=None):
    """Kernel matrix with entries ``k(a_i, b_j)``.

    Passing ``b=None`` computes the symmetric train-train matrix; for the
    stationary kernels its diagonal is exactly 1.
    """
    a = _as_points(a, "a")
    same = b is None
    b = a if same else _as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    k = _kernel_from_parts(spec, a, b)
    if same:
        k = 0.5 * (k + k.T)
        if spec.kind in ("gaussian", "laplace", "matern"):
            np.fill_diagonal(k, 1.0)
    return k


def normalize(k):
    """Normalized kernel ``k_ij / sqrt(k_ii k_jj)`` with an exact unit diagonal.

    Square non-symmetric inputs (e.g. nearest-neighbour kernels) are accepted
    and normalized entrywise; symmetric inputs stay exactly symmetric.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got shape {k.shape}")
    diag = np.diag(k).copy()
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise NormalizationError(
            f"kernel diagonal entry {bad[0]} is {diag[bad[0]]!r}; "
            "a zero-norm gradient or feature row cannot be normalized",
            index=int(bad[0]),
        )
    s = np.sqrt(diag)
    kbar = k / s[:, None] / s[None, :]
    if np.all(np.abs(k - k.T) <= 1e-12 * np.maximum(1.0, np.abs(k))):
        kbar = 0.5 * (kbar + kbar.T)
    kbar = np.clip(kbar, -1.0, 1.0)
    np.fill_diagonal(kbar, 1.0)
    return kbar


def ntk_gram(features):
    """Gram matrix of gradient (or flattened Jacobian) rows."""
    g = np.asarray(features, dtype=float)
    if g.ndim > 2:
        g = g.reshape(g.shape[0], -1)
    if g.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {g.shape}")
    k = g @ g.T
    return 0.5 * (k + k.T)
