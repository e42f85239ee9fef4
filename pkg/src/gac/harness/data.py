"""Synthetic data and readers for the MNIST (IDX) and CIFAR-10 binary formats.

Images are reduced to 8x8 grayscale in [0, 1]. MNIST 28x28 images are
cropped to the centred 24x24 window and averaged over 3x3 blocks; CIFAR
32x32 images are averaged over colour planes and then 4x4 blocks. When the
raw files are not available the experiments fall back to scikit-learn's
bundled 8x8 digits, which need no download.
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import train_test_split

from ..exceptions import DomainError, FormatError, ShapeError

__all__ = [
    "Dataset",
    "gen_gaussian",
    "read_idx",
    "load_idx",
    "load_cifar10",
    "load_digits_8x8",
    "load_table",
    "parse_synthetic",
    "split_dataset",
]

log = logging.getLogger(__name__)

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass
class Dataset:
    """Inputs ``x`` (n, d), responses ``y`` and a record of how they were made.

    ``y`` is real for regression, one-hot rows for multiclass data and
    +-1 for binary data.
    """

    x: np.ndarray
    y: np.ndarray
    source: str = "synthetic"
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2:
            raise ShapeError("x must be 2-D")
        if self.y.shape[0] != self.x.shape[0]:
            raise ShapeError("x and y differ in length")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise DomainError("dataset contains non-finite values")
        if self.y.ndim == 2 and self.y.shape[1] > 1:
            if not np.allclose(self.y.sum(1), 1.0):
                raise DomainError("one-hot rows must sum to 1")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def labels(self):
        """Integer class labels (argmax of one-hot rows), or ``y`` itself."""
        return self.y.argmax(1) if self.y.ndim == 2 else self.y

    def subset(self, rows):
        return Dataset(self.x[rows], self.y[rows], self.source, dict(self.preprocessing))


def gen_gaussian(n, d, sigma=1.0, sigma_y=1.0, seed=None):
    """Rows i.i.d. ``N(0, sigma^2 I_d)`` and responses i.i.d. ``N(0, sigma_y^2)``."""
    if n < 1 or d < 1:
        raise DomainError("n and d must be at least 1")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    rng = np.random.default_rng(seed)
    x = sigma * rng.standard_normal((n, d))
    y = sigma_y * rng.standard_normal(n)
    return Dataset(x, y, "gaussian", {"sigma": sigma, "sigma_y": sigma_y, "seed": seed})


def parse_synthetic(spec):
    """Parse ``synthetic:n=50,d=1,sigma=1,sigma_y=1,seed=0`` into a Dataset."""
    body = spec.split(":", 1)[1] if ":" in spec else ""
    kw = {"n": 50, "d": 1, "sigma": 1.0, "sigma_y": 1.0, "seed": 0}
    for part in filter(None, body.split(",")):
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in kw:
            raise DomainError(f"unknown synthetic option {key!r}")
        kw[key] = int(val) if key in ("n", "d", "seed") else float(val)
    return gen_gaussian(**kw)


# --------------------------------------------------------------------------
# IDX


def read_idx(path, expected_magic):
    """Read one IDX file into a uint8 array, checking header and length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError("truncated IDX header", offset=len(raw))
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise FormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}",
                          offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError("truncated IDX dimension list", offset=len(raw))
    dims = [int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim)]
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise FormatError(f"truncated IDX payload: need {size} bytes", offset=len(raw))
    if len(raw) > header + size:
        raise FormatError("trailing bytes after IDX payload", offset=header + size)
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def downsample_mnist(images):
    """(m, 28, 28) uint8 -> (m, 64) floats: centred 24x24 crop, 3x3 block means, /255."""
    images = np.asarray(images, dtype=float)
    if images.shape[1:] != (28, 28):
        raise ShapeError(f"expected 28x28 images, got {images.shape[1:]}")
    crop = images[:, 2:26, 2:26]
    blocks = crop.reshape(len(images), 8, 3, 8, 3).mean(axis=(2, 4))
    return blocks.reshape(len(images), 64) / 255.0


def _stratified(labels, size, seed):
    if size is None or size >= len(labels):
        return np.arange(len(labels))
    rows, _ = train_test_split(np.arange(len(labels)), train_size=size, stratify=labels,
                               random_state=seed)
    return np.sort(rows)


def load_idx(images_path, labels_path, subsample=None, seed=None):
    """MNIST images/labels as an 8x8 Dataset with one-hot labels."""
    images = read_idx(images_path, IDX_IMAGES)
    labels = read_idx(labels_path, IDX_LABELS)
    if images.ndim != 3:
        raise FormatError("image file must have three dimensions", offset=3)
    if len(labels) != len(images):
        raise FormatError(f"{len(labels)} labels for {len(images)} images", offset=4)
    if labels.size and labels.max() > 9:
        raise FormatError("label outside 0..9", offset=8 + int(np.argmax(labels > 9)))
    rows = _stratified(labels, subsample, seed)
    x = downsample_mnist(images[rows])
    y = np.eye(10)[labels[rows]]
    prep = {"resample": "crop 24x24 centred, 3x3 block mean", "scale": "1/255",
            "subsample": subsample, "seed": seed}
    return Dataset(x, y, "mnist", prep)


# --------------------------------------------------------------------------
# CIFAR-10


def load_cifar10(batch_path, classes=(3, 5), seed=None, subsample=None):
    """Two CIFAR-10 classes as 8x8 grayscale with labels -1 (first) and +1 (second).

    The default pair is cat (3) and dog (5).
    """
    if len(classes) != 2:
        raise DomainError("classes must name exactly two labels")
    with open(batch_path, "rb") as fh:
        raw = fh.read()
    if len(raw) % CIFAR_RECORD:
        whole = len(raw) - len(raw) % CIFAR_RECORD
        raise FormatError(f"file size {len(raw)} is not a multiple of {CIFAR_RECORD}",
                          offset=whole)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0]
    keep = np.isin(labels, classes)
    rec, labels = rec[keep], labels[keep]
    rows = _stratified(labels, subsample, seed)
    rec, labels = rec[rows], labels[rows]
    planes = rec[:, 1:].reshape(-1, 3, 32, 32).astype(float)
    gray = planes.mean(axis=1)
    x = gray.reshape(-1, 8, 4, 8, 4).mean(axis=(2, 4)).reshape(-1, 64) / 255.0
    y = np.where(labels == classes[1], 1.0, -1.0)
    prep = {"classes": list(classes), "gray": "(R+G+B)/3", "resample": "4x4 block mean",
            "scale": "1/255", "subsample": subsample, "seed": seed}
    return Dataset(x, y, "cifar10", prep)


# --------------------------------------------------------------------------
# offline fallback and tables


def load_digits_8x8(kind="multiclass"):
    """scikit-learn's bundled 8x8 digits scaled to [0, 1].

    ``kind="multiclass"`` gives one-hot labels over 10 classes;
    ``kind="binary"`` keeps digits 3 and 5 as -1 and +1.
    """
    from sklearn.datasets import load_digits

    x, labels = load_digits(return_X_y=True)
    x = x / 16.0
    prep = {"resample": "native 8x8", "scale": "1/16"}
    if kind == "multiclass":
        return Dataset(x, np.eye(10)[labels], "digits", prep)
    if kind == "binary":
        keep = np.isin(labels, (3, 5))
        prep["classes"] = [3, 5]
        return Dataset(x[keep], np.where(labels[keep] == 5, 1.0, -1.0), "digits", prep)
    raise DomainError(f"unknown digits kind {kind!r}")


def load_table(path):
    """Load ``x`` and ``y`` from ``.npz`` (arrays ``x``, ``y``) or ``.csv`` (last column y)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            return Dataset(z["x"], z["y"], os.path.basename(path))
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if arr.shape[1] < 2:
        raise ShapeError("CSV data needs at least one input column and one response column")
    return Dataset(arr[:, :-1], arr[:, -1], os.path.basename(path))


def split_dataset(ds, n_train, n_test, seed=None):
    """Disjoint train/test subsets, stratified by class for labelled data."""
    if n_train + n_test > ds.n:
        raise DomainError(f"need {n_train + n_test} rows, dataset has {ds.n}")
    labels = ds.labels()
    strat = labels if ds.source != "gaussian" else None
    rows = np.arange(ds.n)
    tr, te = train_test_split(rows, train_size=n_train, test_size=n_test, stratify=strat,
                              random_state=seed)
    return ds.subset(np.sort(tr)), ds.subset(np.sort(te))
