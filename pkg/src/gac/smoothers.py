"""Nearest-neighbour, decision-tree and random-forest kernel smoothers.

Each model predicts a kernel-weighted average of training responses, so its
complexity can be read off the (data-dependent) kernel matrix on the training
data. Trees are grown best-first by variance reduction.
"""
from dataclasses import dataclass, field
import heapq
import json
import math

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import SmootherMatrices
from .complexity import gac_from_kernel, gac_value
from .exceptions import DomainError, ShapeError, UndefinedPredictionError

__all__ = [
    "Partition",
    "Forest",
    "knn_indices",
    "knn_kernel",
    "knn_gac",
    "fit_tree",
    "tree_kernel",
    "fit_forest",
    "rf_kernel",
    "forest_comembership",
    "smoother_predict",
    "KNNSmoother",
    "DecisionTreeSmoother",
    "RandomForestSmoother",
]


def _points(x, name="X"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {x.shape}")
    return x


# --------------------------------------------------------------------------
# k-nearest neighbours


def knn_indices(train, query, kappa):
    """Indices of the ``kappa`` nearest training points for each query point.

    Distance ties go to the lower training index.
    """
    train = _points(train, "train")
    query = _points(query, "query")
    n = train.shape[0]
    if not 1 <= kappa <= n:
        raise DomainError(f"kappa must lie in [1, {n}], got {kappa}")
    d2 = (query[:, None, :] - train[None, :, :]) ** 2
    d2 = d2.sum(-1)
    # stable sort on distance keeps ascending index order among ties
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :kappa]


def knn_kernel(train, query, kappa):
    """Binary matrix with ``K[i, j] = 1`` iff train point j is a neighbour of query i."""
    idx = knn_indices(train, query, kappa)
    k = np.zeros((idx.shape[0], _points(train).shape[0]))
    np.put_along_axis(k, idx, 1.0, axis=1)
    return k


def knn_gac(kappa, n):
    """Closed-form GAC of the kNN training kernel, ``1 - (kappa - 1) / (n - 1)``."""
    if n < 2 or not 1 <= kappa <= n:
        raise DomainError(f"need n >= 2 and 1 <= kappa <= n, got kappa={kappa}, n={n}")
    return 1.0 - (kappa - 1) / (n - 1)


def smoother_predict(weights, y):
    """Kernel-smoother prediction ``sum(w * y) / sum(w)`` for one weight row.

    ``weights`` may also be a 2-D array of rows, one prediction per row.
    """
    w = np.asarray(weights, dtype=float)
    y = np.asarray(y, dtype=float)
    total = w.sum(axis=-1)
    if np.any(~(total > 0)):
        raise UndefinedPredictionError("weight row sums to zero")
    if w.ndim == 1:
        return (w @ y) / total
    out = w @ y
    return out / (total[:, None] if out.ndim == 2 else total)


# --------------------------------------------------------------------------
# regression trees


@dataclass
class Partition:
    """Leaf regions of a fitted regression tree.

    Attributes
    ----------
    leaf_of : ndarray of shape (n,)
        Region id of every training index.
    regions : list of dict
        ``{"id", "members", "mean"}`` per region; members are the training
        indices (with positive weight) that define the region.
    nodes : list of dict
        Split rules. Internal nodes carry ``feature``, ``threshold``,
        ``left`` and ``right``; leaves carry ``leaf: True``. Points with
        ``x[feature] <= threshold`` go left.
    history : list of ndarray
        ``leaf_of`` after 0, 1, 2, ... splits in growth order (only when
        requested at fit time). Zero-weight points stay at the root id.
    """

    leaf_of: np.ndarray
    regions: list
    nodes: list
    history: list = field(default_factory=list)

    @property
    def n_leaves(self):
        return len(self.regions)

    def apply(self, x):
        """Region id for each row of ``x``."""
        x = _points(x)
        out = np.empty(x.shape[0], dtype=int)
        stack = [(0, np.arange(x.shape[0]))]
        while stack:
            node_id, rows = stack.pop()
            node = self.nodes[node_id]
            if node["leaf"]:
                out[rows] = node_id
                continue
            go_left = x[rows, node["feature"]] <= node["threshold"]
            stack.append((node["left"], rows[go_left]))
            stack.append((node["right"], rows[~go_left]))
        return out

    def region_means(self):
        return {r["id"]: r["mean"] for r in self.regions}

    def to_dict(self):
        return {
            "nodes": [
                {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in nd.items()}
                for nd in self.nodes
            ],
            "regions": [
                {"id": int(r["id"]), "members": [int(i) for i in r["members"]],
                 "mean": np.asarray(r["mean"]).tolist()}
                for r in self.regions
            ],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _best_split(x, y, w, feature_mask):
    """Best variance-reducing split of one node.

    Returns ``(gain, feature, threshold)`` or ``None``. Ties in gain resolve
    to the lowest feature index, then the lowest threshold.
    """
    m = x.shape[0]
    if m < 2:
        return None
    wsum = w.sum()
    mean = (w[:, None] * y).sum(0) / wsum
    yc = y - mean
    sse = float((w[:, None] * yc * yc).sum())
    if not sse > 0:
        return None
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    ws = w[order]  # (m, d)
    wy = (w[:, None] * yc)[order]  # (m, d, c)
    cum_s = np.cumsum(wy, axis=0)[:-1]
    cum_w = np.cumsum(ws, axis=0)[:-1]
    valid = xs[1:] > xs[:-1]
    if feature_mask is not None:
        valid &= feature_mask[None, :]
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = (cum_s * cum_s).sum(-1) * wsum / (cum_w * (wsum - cum_w))
    gain = np.where(valid, gain, -np.inf)
    flat = gain.T.ravel()  # feature-major, ascending threshold within a feature
    best = int(np.argmax(flat))
    g = float(flat[best])
    if not g > 1e-12 * sse:
        return None
    f, k = divmod(best, m - 1)
    lo, hi = xs[k, f], xs[k + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return g, int(f), float(thr)


def fit_tree(x, y, max_leaves=None, rng_seed=None, *, max_depth=None, max_features=None,
             sample_weight=None, record_history=False):
    """Grow a regression tree best-first by greatest variance reduction.

    Parameters
    ----------
    x : array-like of shape (n, d)
    y : array-like of shape (n,) or (n, c)
        Multi-output responses use the summed squared error.
    max_leaves : int, optional
        Stop once this many leaves exist. ``None`` means unbounded.
    rng_seed : int or numpy Generator, optional
        Drives per-split feature subsampling.
    max_depth : int, optional
        Nodes at this depth are not split further.
    max_features : int, optional
        Number of candidate features drawn per split; ``None`` uses all.
    sample_weight : array-like of shape (n,), optional
        Nonnegative integer multiplicities (bootstrap counts). Points with
        zero weight do not shape the tree but still receive a leaf.
    record_history : bool
        Keep the training assignment after every split.

    Returns
    -------
    Partition
    """
    x = _points(x)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != x.shape[0]:
        raise ShapeError("x and y have different numbers of rows")
    y2 = y[:, None] if y.ndim == 1 else y
    n, d = x.shape
    if max_leaves is not None and max_leaves < 1:
        raise DomainError("max_leaves must be at least 1")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    active = np.flatnonzero(w > 0)
    if active.size == 0:
        raise ShapeError("no training points with positive weight")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n_feat = None if max_features is None else int(min(max(1, max_features), d))

    def candidate(rows, depth):
        if max_depth is not None and depth >= max_depth:
            return None
        mask = None
        if n_feat is not None and n_feat < d:
            mask = np.zeros(d, dtype=bool)
            mask[rng.choice(d, size=n_feat, replace=False)] = True
        return _best_split(x[rows], y2[rows], w[rows], mask)

    nodes = [{"leaf": True, "depth": 0}]
    rows_of = {0: active}
    heap = []
    split = candidate(active, 0)
    if split is not None:
        heapq.heappush(heap, (-split[0], 0, split))
    n_leaves = 1
    leaf_of_active = np.zeros(n, dtype=int)
    history = [leaf_of_active.copy()] if record_history else []
    while heap and (max_leaves is None or n_leaves < max_leaves):
        _, node_id, (gain, f, thr) = heapq.heappop(heap)
        rows = rows_of.pop(node_id)
        go_left = x[rows, f] <= thr
        depth = nodes[node_id]["depth"] + 1
        children = []
        for part in (rows[go_left], rows[~go_left]):
            cid = len(nodes)
            nodes.append({"leaf": True, "depth": depth})
            rows_of[cid] = part
            leaf_of_active[part] = cid
            children.append(cid)
        nodes[node_id] = {
            "leaf": False, "depth": depth - 1, "feature": f, "threshold": thr,
            "left": children[0], "right": children[1], "gain": gain,
        }
        n_leaves += 1
        for cid in children:
            s = candidate(rows_of[cid], depth)
            if s is not None:
                heapq.heappush(heap, (-s[0], cid, s))
        if record_history:
            history.append(leaf_of_active.copy())

    regions = []
    for node_id in sorted(rows_of):
        rows = rows_of[node_id]
        ww = w[rows]
        mean = (ww[:, None] * y2[rows]).sum(0) / ww.sum()
        regions.append({"id": node_id, "members": rows, "mean": mean if y.ndim > 1 else float(mean[0])})
    part = Partition(leaf_of=np.zeros(n, dtype=int), regions=regions, nodes=nodes, history=history)
    part.leaf_of = part.apply(x)
    return part


def tree_kernel(partition, query_leaves=None, train_leaves=None):
    """Binary co-membership kernel ``K[i, j] = 1`` iff query i and train j share a leaf.

    Leaf assignments default to the partition's training assignment.
    """
    q = partition.leaf_of if query_leaves is None else np.asarray(query_leaves)
    t = partition.leaf_of if train_leaves is None else np.asarray(train_leaves)
    return (q[:, None] == t[None, :]).astype(float)


# --------------------------------------------------------------------------
# random forests


@dataclass
class Forest:
    trees: list
    bootstrap_counts: np.ndarray
    b_count: int

    def apply(self, x):
        """Leaf ids, shape (B, n_query)."""
        return np.stack([t.apply(x) for t in self.trees])


def _fit_one_tree(x, y, seed, max_leaves, max_depth, max_features, bootstrap):
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    if bootstrap:
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
    else:
        counts = np.ones(n)
    tree = fit_tree(x, y, max_leaves, rng, max_depth=max_depth,
                    max_features=max_features, sample_weight=counts)
    return tree, counts


def fit_forest(x, y, n_trees, max_leaves=None, *, bootstrap=False, max_features=None,
               max_depth=None, random_state=None, n_jobs=None):
    """Fit ``n_trees`` trees with independent per-tree seeds.

    Each tree gets its own child of ``SeedSequence(random_state)``, so the
    result does not depend on ``n_jobs``.
    """
    x = _points(x)
    y = np.asarray(y, dtype=float)
    if n_trees < 1:
        raise DomainError("n_trees must be at least 1")
    seeds = np.random.SeedSequence(random_state).spawn(n_trees)
    jobs = (delayed(_fit_one_tree)(x, y, s, max_leaves, max_depth, max_features, bootstrap)
            for s in seeds)
    if n_jobs in (None, 1):
        out = [fn(*a, **kw) for fn, a, kw in jobs]
    else:
        out = Parallel(n_jobs=n_jobs)(jobs)
    trees = [t for t, _ in out]
    counts = np.stack([c for _, c in out])
    return Forest(trees=trees, bootstrap_counts=counts, b_count=n_trees)


def rf_kernel(forest, query_leaves=None, train_leaves=None):
    """Random-forest smoother kernel ``sum_b count_b(x_i) 1[same leaf] / |R_b(x*)|``.

    Every row sums to the number of trees.
    """
    tl = (np.stack([t.leaf_of for t in forest.trees]) if train_leaves is None
          else np.asarray(train_leaves))
    ql = tl if query_leaves is None else np.asarray(query_leaves)
    k = np.zeros((ql.shape[1], tl.shape[1]))
    for b in range(forest.b_count):
        kb = (ql[b][:, None] == tl[b][None, :]) * forest.bootstrap_counts[b][None, :]
        size = kb.sum(1)
        if np.any(size <= 0):
            raise RuntimeError("empty forest region encountered")
        k += kb / size[:, None]
    return k


def forest_comembership(forest, query_leaves=None, train_leaves=None):
    """Average of the binary per-tree co-membership kernels.

    This is the (normalized) tangent kernel of the tree average when each
    tree's leaf values are its parameters.
    """
    tl = (np.stack([t.leaf_of for t in forest.trees]) if train_leaves is None
          else np.asarray(train_leaves))
    ql = tl if query_leaves is None else np.asarray(query_leaves)
    k = np.zeros((ql.shape[1], tl.shape[1]))
    for b in range(forest.b_count):
        k += ql[b][:, None] == tl[b][None, :]
    return k / forest.b_count


# --------------------------------------------------------------------------
# estimators


class _SmootherMixin:
    """Shared predict / smoother / complexity logic for kernel smoothers."""

    def predict(self, X):
        check_is_fitted(self, "X_fit_")
        X = check_array(X)
        return smoother_predict(self.kernel(X), self.y_fit_)

    def smoother_matrices(self, X_test=None):
        """Row-normalized kernel matrices as linear smoothers (S, S*)."""
        check_is_fitted(self, "X_fit_")
        k_in = self.kernel()
        s_in = k_in / k_in.sum(1, keepdims=True)
        s_out = None
        if X_test is not None:
            k_out = self.kernel(check_array(X_test))
            s_out = k_out / k_out.sum(1, keepdims=True)
        return SmootherMatrices(s_in=s_in, s_out=s_out)

    def complexity(self):
        """Empirical GAC of the training kernel."""
        check_is_fitted(self, "X_fit_")
        return gac_from_kernel(self.gac_kernel())

    def gac_kernel(self):
        return self.kernel()


class KNNSmoother(_SmootherMixin, RegressorMixin, BaseEstimator):
    """k-nearest-neighbour regression written as a kernel smoother."""

    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if not 1 <= self.n_neighbors <= X.shape[0]:
            raise DomainError(f"n_neighbors must lie in [1, {X.shape[0]}]")
        self.X_fit_, self.y_fit_ = X, y
        self.n_features_in_ = X.shape[1]
        return self

    def kernel(self, X=None):
        check_is_fitted(self, "X_fit_")
        query = self.X_fit_ if X is None else check_array(X)
        return knn_kernel(self.X_fit_, query, self.n_neighbors)


class DecisionTreeSmoother(_SmootherMixin, RegressorMixin, BaseEstimator):
    """Best-first CART regression tree written as a kernel smoother.

    Parameters
    ----------
    max_leaves : int, optional
    max_depth : int, optional
    max_features : int, optional
        Candidate features drawn per split.
    random_state : int, optional
    record_history : bool
        Keep the partition after every split (see :meth:`growth_gacs`).
    """

    def __init__(self, max_leaves=None, max_depth=None, max_features=None,
                 random_state=None, record_history=False):
        self.max_leaves = max_leaves
        self.max_depth = max_depth
        self.max_features = max_features
        self.random_state = random_state
        self.record_history = record_history

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.partition_ = fit_tree(
            X, y, self.max_leaves, self.random_state, max_depth=self.max_depth,
            max_features=self.max_features, sample_weight=sample_weight,
            record_history=self.record_history,
        )
        self.X_fit_, self.y_fit_ = X, y
        self.n_features_in_ = X.shape[1]
        return self

    def kernel(self, X=None):
        check_is_fitted(self, "partition_")
        q = None if X is None else self.partition_.apply(check_array(X))
        return tree_kernel(self.partition_, q)

    def growth_gacs(self):
        """Training-kernel GAC after 0, 1, 2, ... splits."""
        check_is_fitted(self, "partition_")
        if not self.partition_.history:
            raise ValueError("fit with record_history=True to get the growth sequence")
        return [gac_value((h[:, None] == h[None, :]).astype(float))
                for h in self.partition_.history]


class RandomForestSmoother(_SmootherMixin, RegressorMixin, BaseEstimator):
    """Average of best-first regression trees.

    Predictions use the forest smoother kernel (bootstrap multiplicities
    over region sizes). The GAC uses the average per-tree co-membership
    kernel, which always has a unit diagonal.
    """

    def __init__(self, n_estimators=10, max_leaves=None, max_depth=None, bootstrap=False,
                 max_features=None, random_state=None, n_jobs=None):
        self.n_estimators = n_estimators
        self.max_leaves = max_leaves
        self.max_depth = max_depth
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _n_features(self, d):
        mf = self.max_features
        if mf is None:
            return None
        if mf == "third":
            return max(1, math.ceil(d / 3))
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        return int(mf)

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.forest_ = fit_forest(
            X, y, self.n_estimators, self.max_leaves, bootstrap=self.bootstrap,
            max_features=self._n_features(X.shape[1]), max_depth=self.max_depth,
            random_state=self.random_state, n_jobs=self.n_jobs,
        )
        self.X_fit_, self.y_fit_ = X, y
        self.n_features_in_ = X.shape[1]
        return self

    def kernel(self, X=None):
        check_is_fitted(self, "forest_")
        q = None if X is None else self.forest_.apply(check_array(X))
        return rf_kernel(self.forest_, q)

    def gac_kernel(self):
        return forest_comembership(self.forest_)

    def tree_kernels(self):
        """Per-tree binary training kernels."""
        check_is_fitted(self, "forest_")
        return [tree_kernel(t) for t in self.forest_.trees]
