"""Gradient Alignment Complexity (GAC) and related spectral measures.

The empirical GAC of gradient rows ``phi_1..phi_n`` is one minus the mean
squared cosine similarity over all ordered pairs ``i != j``. It is computed
here from gradients, multi-output Jacobians, or any symmetric kernel matrix
(via its normalized form).
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    DomainError,
    InsufficientSampleError,
    NormalizationError,
    ShapeError,
    UndefinedTotalError,
)
from .kernels import normalize
from .numerics import check_symmetric, sym_eigvals

__all__ = [
    "ComplexityReport",
    "TrainingTrace",
    "EnsembleStats",
    "gac_from_gradients",
    "gac_from_kernel",
    "gac_from_jacobians",
    "gac_value",
    "matrix_entropy",
    "total_gac",
    "ensemble_gac",
    "ensemble_moments",
    "bootstrap_gac_se",
]


@dataclass
class ComplexityReport:
    """One complexity value together with how it was obtained."""

    measure: str
    value: float
    n_used: int
    subsample_seed: Optional[int] = None
    notes: str = ""

    def __float__(self):
        return float(self.value)

    def to_row(self, experiment="measure", seed=None, sweep_name="", sweep_value=""):
        """Row dict in the harness CSV schema."""
        return {
            "experiment": experiment,
            "seed": "" if seed is None else seed,
            "sweep_name": sweep_name,
            "sweep_value": sweep_value,
            "measure": self.measure,
            "value": self.value,
            "n": self.n_used,
            "runtime_ms": 0,
        }


@dataclass
class TrainingTrace:
    """Losses ``L_0..L_T`` and the GAC measured after each of the T steps."""

    losses: list = field(default_factory=list)
    gacs: list = field(default_factory=list)

    def __post_init__(self):
        self.losses = list(self.losses)
        self.gacs = list(self.gacs)

    def validate(self):
        if len(self.losses) != len(self.gacs) + 1:
            raise ShapeError(
                f"trace needs len(losses) == len(gacs) + 1, got {len(self.losses)} and {len(self.gacs)}"
            )
        return self


@dataclass
class EnsembleStats:
    gac_single: float
    var_kbar: float
    rho: float
    b_count: int
    q: float = 1.0

    def __post_init__(self):
        if self.var_kbar < 0:
            raise DomainError("var_kbar must be nonnegative")
        if self.b_count < 1:
            raise DomainError("b_count must be at least 1")


def _subsample(n, subsample, random_state):
    if subsample is None or subsample >= n:
        return None
    rng = np.random.default_rng(random_state)
    return np.sort(rng.choice(n, size=subsample, replace=False))


def gac_value(kbar):
    """GAC of an already normalized (unit-diagonal) matrix, as a float."""
    n = kbar.shape[0]
    if n < 2:
        raise InsufficientSampleError(f"GAC needs at least 2 samples, got {n}")
    off = kbar.copy()
    np.fill_diagonal(off, 0.0)
    value = 1.0 - float((off * off).sum()) / (n * n - n)
    return min(1.0, max(0.0, value))


def gac_from_gradients(g, subsample=None, random_state=None, measure="gac"):
    """Empirical GAC of per-example gradient rows.

    Parameters
    ----------
    g : array-like of shape (n, p)
        Row ``i`` is the parameter gradient at input ``x_i``.
    subsample : int, optional
        Evaluate on a random subset of this many rows.
    random_state : int, optional
        Seed for the subset draw.

    Returns
    -------
    ComplexityReport
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 2:
        raise ShapeError(f"gradients must be 2-D (n, p), got shape {g.shape}")
    idx = _subsample(g.shape[0], subsample, random_state)
    if idx is not None:
        g = g[idx]
    n = g.shape[0]
    if n < 2:
        raise InsufficientSampleError(f"GAC needs at least 2 samples, got {n}")
    norms = np.linalg.norm(g, axis=1)
    bad = np.flatnonzero(~(norms > 0))
    if bad.size:
        i = int(bad[0] if idx is None else idx[bad[0]])
        raise NormalizationError(f"gradient row {i} has zero norm", index=i)
    u = g / norms[:, None]
    kbar = np.clip(u @ u.T, -1.0, 1.0)
    return ComplexityReport(
        measure=measure,
        value=gac_value(kbar),
        n_used=n,
        subsample_seed=random_state if idx is not None else None,
    )


def gac_from_jacobians(j, subsample=None, random_state=None):
    """Empirical GAC of multi-output Jacobians using the Frobenius inner product.

    ``j`` has shape (n, c, p); each Jacobian is flattened row-wise.
    """
    j = np.asarray(j, dtype=float)
    if j.ndim == 2:
        j = j[:, None, :]
    if j.ndim != 3:
        raise ShapeError(f"jacobians must have shape (n, c, p), got {j.shape}")
    return gac_from_gradients(j.reshape(j.shape[0], -1), subsample, random_state)


def gac_from_kernel(k, subsample=None, random_state=None, measure="gac"):
    """Empirical GAC of a square kernel matrix with positive diagonal.

    The average runs over all ordered off-diagonal pairs, so asymmetric
    data-dependent kernels (nearest neighbours) are handled as well.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got shape {k.shape}")
    idx = _subsample(k.shape[0], subsample, random_state)
    if idx is not None:
        k = k[np.ix_(idx, idx)]
    kbar = normalize(k)
    return ComplexityReport(
        measure=measure,
        value=gac_value(kbar),
        n_used=k.shape[0],
        subsample_seed=random_state if idx is not None else None,
    )


def matrix_entropy(kbar, kind="linear", normalized=True):
    """Linear or von Neumann entropy of a kernel matrix's normalized spectrum.

    The linear entropy is ``sum(l * (1 - l))`` and the von Neumann entropy is
    ``-sum(l * log(l))`` over eigenvalues ``l`` divided by the trace. The
    normalized variants rescale by ``n / (n - 1)`` and ``1 / log(n)`` so that
    both lie in [0, 1].
    """
    kbar = check_symmetric(kbar, "kernel matrix")
    n = kbar.shape[0]
    if normalized and n < 2:
        raise InsufficientSampleError("normalized entropy is undefined for n = 1")
    lam = sym_eigvals(kbar).eigenvalues
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    if kind == "linear":
        value = float(np.sum(lam * (1.0 - lam)))
        if normalized:
            value *= n / (n - 1)
        name = "le"
    elif kind == "von_neumann":
        nz = lam[lam > 0]
        value = float(-np.sum(nz * np.log(nz)))
        if normalized:
            value /= np.log(n)
        name = "vne"
    else:
        raise DomainError(f"unknown entropy kind {kind!r}")
    if normalized:
        value = min(1.0, max(0.0, value))
    return ComplexityReport(measure=name, value=value, n_used=n)


def total_gac(trace):
    """Loss-decrement weighted average of per-step GAC values.

    Step ``t`` is weighted by ``max(L_{t-1} - L_t, 0)``.
    """
    trace.validate()
    losses = np.asarray(trace.losses, dtype=float)
    gacs = np.asarray(trace.gacs, dtype=float)
    dl = np.maximum(losses[:-1] - losses[1:], 0.0)
    total = dl.sum()
    if not total > 0:
        raise UndefinedTotalError("total GAC is undefined: the loss never decreased")
    value = float(np.dot(gacs, dl) / total)
    return ComplexityReport(measure="total_gac", value=value, n_used=len(gacs))


def ensemble_gac(s):
    """GAC of an average of ``B`` models from single-model statistics."""
    inner = s.gac_single + (1.0 - 1.0 / s.b_count) * (1.0 - s.rho) * s.var_kbar
    return 1.0 - s.q**2 * (1.0 - inner)


def ensemble_moments(kbars: Sequence[np.ndarray]):
    """Pooled empirical moments of ``B`` normalized kernels over off-diagonal pairs.

    Moments use population conventions over all ordered pairs and all
    members, so that :func:`ensemble_gac` with ``q = 1`` reproduces the GAC of
    the averaged kernel exactly.
    """
    kbars = [np.asarray(k, dtype=float) for k in kbars]
    b = len(kbars)
    if b < 1:
        raise DomainError("need at least one kernel")
    n = kbars[0].shape[0]
    mask = ~np.eye(n, dtype=bool)
    vals = np.stack([k[mask] for k in kbars])  # (B, n^2 - n)
    mean = vals.mean()
    second = (vals * vals).mean()
    var = max(second - mean * mean, 0.0)
    if b > 1 and var > 0:
        col = vals.sum(0)
        cross = (col * col - (vals * vals).sum(0)).mean() / (b * (b - 1))
        rho = (cross - mean * mean) / var
    else:
        rho = 1.0
    return EnsembleStats(gac_single=1.0 - second, var_kbar=var, rho=rho, b_count=b)


def bootstrap_gac_se(kbar, n_boot=200, random_state=None):
    """Bootstrap standard error of the empirical GAC of a normalized kernel.

    Resamples points with replacement; pairs of identical resampled indices
    are treated as diagonal and excluded.
    """
    kbar = np.asarray(kbar, dtype=float)
    n = kbar.shape[0]
    rng = np.random.default_rng(random_state)
    vals = np.empty(n_boot)
    for r in range(n_boot):
        idx = rng.integers(0, n, size=n)
        sub = kbar[np.ix_(idx, idx)]
        same = idx[:, None] == idx[None, :]
        m = (~same).sum()
        vals[r] = 1.0 - (sub[~same] ** 2).sum() / m
    return float(vals.std(ddof=1))
