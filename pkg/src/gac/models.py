"""Trainable models whose complexity is measured.

Kernel ridge regression and random Fourier features have constant features,
so their GAC is fixed by the kernel. The one-hidden-layer ReLU network and
gradient-boosted trees have features that move during training; they record
a :class:`~gac.complexity.TrainingTrace` for the total GAC.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import SmootherMatrices
from .complexity import TrainingTrace, gac_from_gradients, gac_from_kernel, gac_value
from .exceptions import DomainError, ShapeError, SingularityError, TrainingDivergedError
from .kernels import KernelSpec, kernel_matrix, normalize
from .smoothers import fit_tree, tree_kernel

__all__ = [
    "KernelRidge",
    "RandomFourierFeatures",
    "RFFRegressor",
    "rff_features",
    "rff_fit",
    "MLPRegressor",
    "mlp_train",
    "GradientBoostingRegressor",
    "gbdt_train",
]


# --------------------------------------------------------------------------
# kernel ridge regression


class KernelRidge(RegressorMixin, BaseEstimator):
    """Kernel ridge regression ``alpha = (K + lam I)^{-1} y``.

    Parameters
    ----------
    kernel : {"linear", "polynomial", "gaussian", "laplace", "matern"}
    p, c, l, nu : float
        Kernel hyperparameters, see :class:`~gac.kernels.KernelSpec`.
    lam : float
        Ridge penalty; 1e-5 keeps ``K + lam I`` well conditioned.
    """

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
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if self.lam < 0:
            raise DomainError("lam must be nonnegative")
        self.X_fit_ = X
        self.K_ = kernel_matrix(self.spec, X)
        # eigendecomposition instead of Cholesky: high-degree polynomial
        # kernels are numerically rank deficient even with lam = 1e-5
        s, v = np.linalg.eigh(self.K_)
        s = np.maximum(s, 0.0)
        denom = s + self.lam
        if denom.min() <= X.shape[0] * np.finfo(float).eps * max(s.max(), 1.0):
            raise SingularityError(
                "K + lam*I is singular; use lam > 0 (e.g. 1e-5) as jitter"
            )
        self._eig = (s, v, 1.0 / denom)
        self.dual_coef_ = self._inverse_apply(y)
        self.n_features_in_ = X.shape[1]
        return self

    def _inverse_apply(self, b):
        s, v, inv = self._eig
        coef = v.T @ b
        return v @ (coef * (inv[:, None] if coef.ndim == 2 else inv))

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X)
        return kernel_matrix(self.spec, X, self.X_fit_) @ self.dual_coef_

    def smoother_matrices(self, X_test=None):
        """``S = K (K + lam I)^{-1}`` and, with test inputs, ``S* = K* (K + lam I)^{-1}``."""
        check_is_fitted(self, "dual_coef_")
        s, v, inv = self._eig
        s_in = (v * (s * inv)) @ v.T
        s_out = None
        if X_test is not None:
            k_star = kernel_matrix(self.spec, check_array(X_test), self.X_fit_)
            s_out = (k_star @ v * inv) @ v.T
        return SmootherMatrices(s_in=0.5 * (s_in + s_in.T), s_out=s_out)

    def complexity(self):
        """GAC of the training kernel matrix (independent of ``lam`` and ``y``)."""
        check_is_fitted(self, "K_")
        return gac_from_kernel(self.K_)

    def param_norm(self):
        """``alpha^T K alpha``, evaluated in the eigenbasis so roundoff cannot make it negative."""
        check_is_fitted(self, "dual_coef_")
        s, v, inv = self._eig
        coef = v.T @ self.dual_coef_
        if coef.ndim == 2:
            return float(np.sum(s[:, None] * coef * coef))
        return float(np.sum(s * coef * coef))


# --------------------------------------------------------------------------
# random Fourier features


class RandomFourierFeatures(TransformerMixin, BaseEstimator):
    """Feature map ``sqrt(2/D) cos(X Omega + b)`` approximating a Gaussian kernel."""

    def __init__(self, n_components=100, length_scale=1.0, random_state=None):
        self.n_components = n_components
        self.length_scale = length_scale
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        if self.n_components < 1:
            raise DomainError("n_components must be at least 1")
        rng = np.random.default_rng(self.random_state)
        d = X.shape[1]
        self.omega_ = rng.normal(0.0, 1.0 / self.length_scale, size=(d, self.n_components))
        self.phase_ = rng.uniform(0.0, 2.0 * np.pi, size=self.n_components)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "omega_")
        X = check_array(X)
        return np.sqrt(2.0 / self.n_components) * np.cos(X @ self.omega_ + self.phase_)


def rff_features(x, d_features, l, seed=None):
    """Random Fourier feature rows ``z(x_i)`` (also the model's gradient rows)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return RandomFourierFeatures(d_features, l, seed).fit_transform(x)


def rff_fit(features, y):
    """Minimum-norm least-squares weights for ``features @ w ~ y``."""
    w, *_ = np.linalg.lstsq(np.asarray(features, dtype=float), np.asarray(y, dtype=float),
                            rcond=None)
    return w


class RFFRegressor(RegressorMixin, BaseEstimator):
    """Minimum-norm least squares on random Fourier features."""

    def __init__(self, n_components=100, length_scale=1.0, random_state=None):
        self.n_components = n_components
        self.length_scale = length_scale
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.features_ = RandomFourierFeatures(
            self.n_components, self.length_scale, self.random_state
        ).fit(X)
        z = self.features_.transform(X)
        self.coef_ = rff_fit(z, y)
        self.train_features_ = z
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.features_.transform(X) @ self.coef_

    def complexity(self, subsample=None, random_state=None):
        check_is_fitted(self, "coef_")
        return gac_from_gradients(self.train_features_, subsample, random_state)


# --------------------------------------------------------------------------
# one-hidden-layer ReLU network


def _he(rng, fan_out, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))


class MLPRegressor(RegressorMixin, BaseEstimator):
    """One hidden ReLU layer, linear output, squared loss, momentum gradient descent.

    Parameters
    ----------
    hidden : int
        Hidden width ``h``.
    learning_rate, momentum : float
    epochs : int
    n_batches : int
        1 means full-batch training.
    init : {"random", "warm"}
        ``"warm"`` copies the weights of ``warm_start_from`` (a smaller
        fitted network) into the first hidden units and He-initializes
        the rest.
    gac_every : int
        Epoch cadence of GAC evaluation; 0 disables it.
    gac_subsample : int
        Training points (drawn once) used for the GAC.
    random_state : int, optional

    Attributes
    ----------
    trace_ : TrainingTrace
        Losses at the GAC checkpoints and the GAC after each checkpoint.
    loss_curve_ : list of float
        Training loss after every epoch, starting with the initial loss.
    """

    def __init__(self, hidden=16, learning_rate=0.01, momentum=0.95, epochs=1000,
                 n_batches=1, init="random", warm_start_from=None, gac_every=5,
                 gac_subsample=20, random_state=None):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.n_batches = n_batches
        self.init = init
        self.warm_start_from = warm_start_from
        self.gac_every = gac_every
        self.gac_subsample = gac_subsample
        self.random_state = random_state

    # parameter plumbing -------------------------------------------------
    def _init_params(self, d, c, rng):
        h = self.hidden
        w1 = _he(rng, h, d)
        b1 = np.zeros(h)
        w2 = _he(rng, c, h)
        b2 = np.zeros(c)
        if self.init == "warm":
            prev = self.warm_start_from
            if prev is None:
                raise DomainError("init='warm' needs warm_start_from")
            hp = prev.W1_.shape[0]
            if hp > h or prev.W1_.shape[1] != d or prev.W2_.shape[0] != c:
                raise ShapeError("warm_start_from must be a smaller network on the same data shape")
            w1[:hp] = prev.W1_
            b1[:hp] = prev.b1_
            w2[:, :hp] = prev.W2_
            b2[:] = prev.b2_
        elif self.init != "random":
            raise DomainError(f"unknown init scheme {self.init!r}")
        self.W1_, self.b1_, self.W2_, self.b2_ = w1, b1, w2, b2

    @property
    def n_params_(self):
        h, d = self.W1_.shape
        c = self.W2_.shape[0]
        return h * d + h + c * h + c

    def get_flat_params(self):
        return np.concatenate([self.W1_.ravel(), self.b1_, self.W2_.ravel(), self.b2_])

    def set_flat_params(self, theta):
        h, d = self.W1_.shape
        c = self.W2_.shape[0]
        sizes = np.cumsum([h * d, h, c * h])
        w1, b1, w2, b2 = np.split(np.asarray(theta, dtype=float), sizes)
        self.W1_, self.b1_ = w1.reshape(h, d), b1
        self.W2_, self.b2_ = w2.reshape(c, h), b2
        return self

    def _forward(self, X):
        a = X @ self.W1_.T + self.b1_
        hid = np.maximum(a, 0.0)
        return a, hid, hid @ self.W2_.T + self.b2_

    def _loss(self, X, Y):
        # overflow is reported as a non-finite loss by fit, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.mean(np.sum((self._forward(X)[2] - Y) ** 2, axis=1)))

    def _grads(self, X, Y):
        a, hid, out = self._forward(X)
        g_out = 2.0 * (out - Y) / X.shape[0]
        gw2 = g_out.T @ hid
        gb2 = g_out.sum(0)
        g_hid = (g_out @ self.W2_) * (a > 0)
        gw1 = g_hid.T @ X
        gb1 = g_hid.sum(0)
        return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])

    # tangent features ---------------------------------------------------
    def jacobians(self, X):
        """Per-input Jacobians of the outputs w.r.t. all parameters, shape (n, c, p).

        Parameter order is ``W1`` (row-major), ``b1``, ``W2`` (row-major), ``b2``.
        """
        check_is_fitted(self, "W1_")
        X = check_array(X)
        n = X.shape[0]
        h, d = self.W1_.shape
        c = self.W2_.shape[0]
        a, hid, _ = self._forward(X)
        gate = (a > 0).astype(float)
        gw = self.W2_[None, :, :] * gate[:, None, :]  # (n, c, h)
        j_w1 = gw[:, :, :, None] * X[:, None, None, :]  # (n, c, h, d)
        j_w2 = np.zeros((n, c, c, h))
        idx = np.arange(c)
        j_w2[:, idx, idx, :] = hid[:, None, :]
        j_b2 = np.broadcast_to(np.eye(c), (n, c, c))
        return np.concatenate(
            [j_w1.reshape(n, c, h * d), gw, j_w2.reshape(n, c, c * h), j_b2], axis=2
        )

    def ntk_gram(self, X):
        """Frobenius Gram of the Jacobians without materializing them."""
        check_is_fitted(self, "W1_")
        X = check_array(X)
        a, hid, _ = self._forward(X)
        gate = (a > 0).astype(float)
        c = self.W2_.shape[0]
        col = (self.W2_ ** 2).sum(0)
        first = ((gate * col) @ gate.T) * (X @ X.T + 1.0)
        second = c * (hid @ hid.T + 1.0)
        k = first + second
        return 0.5 * (k + k.T)

    def complexity(self, X):
        return gac_from_kernel(self.ntk_gram(X))

    # training -----------------------------------------------------------
    def fit(self, X, y, gac_hook=None):
        """Train from scratch.

        ``gac_hook(epoch, jacobians)``, when given, replaces the default GAC
        computation at each checkpoint and must return a float.
        """
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        Y = y[:, None] if y.ndim == 1 else y
        rng = np.random.default_rng(self.random_state)
        n, d = X.shape
        self._init_params(d, Y.shape[1], rng)
        self.n_features_in_ = d
        self._single_output = y.ndim == 1
        sub = np.sort(rng.choice(n, size=min(self.gac_subsample, n), replace=False))
        self.gac_indices_ = sub
        batch_rng = np.random.default_rng(rng.integers(2**63))

        theta = self.get_flat_params()
        velocity = np.zeros_like(theta)
        loss = self._loss(X, Y)
        self.loss_curve_ = [loss]
        trace = TrainingTrace(losses=[loss], gacs=[])
        for epoch in range(1, self.epochs + 1):
            if self.n_batches > 1:
                batches = np.array_split(batch_rng.permutation(n), self.n_batches)
            else:
                batches = [slice(None)]
            for rows in batches:
                grad = self._grads(X[rows], Y[rows])
                velocity = self.momentum * velocity - self.learning_rate * grad
                theta = theta + velocity
                self.set_flat_params(theta)
            loss = self._loss(X, Y)
            if not np.isfinite(loss):
                self.trace_ = trace
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}", trace=trace)
            self.loss_curve_.append(loss)
            if self.gac_every and epoch % self.gac_every == 0:
                if gac_hook is None:
                    g = gac_value(normalize(self.ntk_gram(X[sub])))
                else:
                    g = float(gac_hook(epoch, self.jacobians(X[sub])))
                trace.losses.append(loss)
                trace.gacs.append(g)
        self.trace_ = trace
        return self

    def predict(self, X):
        check_is_fitted(self, "W1_")
        out = self._forward(check_array(X))[2]
        return out[:, 0] if getattr(self, "_single_output", False) else out


def mlp_train(config, x, y, gac_hook=None):
    """Train an :class:`MLPRegressor` from a config dict; returns ``(model, trace)``."""
    model = MLPRegressor(**config).fit(x, y, gac_hook=gac_hook)
    return model, model.trace_


# --------------------------------------------------------------------------
# gradient boosting


def _tree_predict(partition, X):
    leaves = partition.apply(X)
    means = partition.region_means()
    return np.array([means[i] for i in leaves])


class GradientBoostingRegressor(RegressorMixin, BaseEstimator):
    """Squared-loss boosting of best-first regression trees with momentum.

    Each stage fits a tree to the velocity ``v <- momentum * v + residual``
    and adds ``learning_rate`` times its prediction. The ensemble starts at 0.

    Parameters
    ----------
    n_stages : int
    learning_rate, momentum : float
    max_depth : int, optional
    max_leaves : int, optional
    gac_kernel : {"stage", "ensemble"}
        Kernel whose GAC is recorded per stage: the current stage tree's
        co-membership kernel, or the tangent kernel of the ensemble so far.
    random_state : int, optional
    """

    def __init__(self, n_stages=100, learning_rate=0.01, momentum=0.95, max_depth=3,
                 max_leaves=None, gac_kernel="stage", random_state=None):
        self.n_stages = n_stages
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.max_depth = max_depth
        self.max_leaves = max_leaves
        self.gac_kernel = gac_kernel
        self.random_state = random_state

    def fit(self, X, y, gac_hook=None):
        """Fit all stages; ``gac_hook(stage, kbar)`` may replace the per-stage GAC."""
        X, y = check_X_y(X, y, y_numeric=True)
        if self.n_stages < 1:
            raise DomainError("n_stages must be at least 1")
        if self.gac_kernel not in ("stage", "ensemble"):
            raise DomainError(f"unknown gac_kernel {self.gac_kernel!r}")
        rng = np.random.default_rng(self.random_state)
        n = X.shape[0]
        f = np.zeros(n)
        velocity = np.zeros(n)
        ens = np.zeros((n, n))
        trace = TrainingTrace(losses=[float(np.mean((y - f) ** 2))], gacs=[])
        self.stages_ = []
        for stage in range(1, self.n_stages + 1):
            velocity = self.momentum * velocity + (y - f)
            tree = fit_tree(X, velocity, self.max_leaves, rng, max_depth=self.max_depth)
            self.stages_.append(tree)
            f = f + self.learning_rate * _tree_predict(tree, X)
            kb = tree_kernel(tree)
            if self.gac_kernel == "ensemble":
                ens += kb
                kb = ens
            kbar = normalize(kb)
            g = gac_value(kbar) if gac_hook is None else float(gac_hook(stage, kbar))
            trace.losses.append(float(np.mean((y - f) ** 2)))
            trace.gacs.append(g)
        self.train_predictions_ = f
        self.trace_ = trace
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "stages_")
        X = check_array(X)
        out = np.zeros(X.shape[0])
        for tree in self.stages_:
            out += self.learning_rate * _tree_predict(tree, X)
        return out


def gbdt_train(x, y, stages, learning_rate, momentum, max_depth, seed=None, gac_hook=None,
               gac_kernel="stage"):
    """Functional wrapper returning ``(model, trace)``."""
    model = GradientBoostingRegressor(
        n_stages=stages, learning_rate=learning_rate, momentum=momentum,
        max_depth=max_depth, gac_kernel=gac_kernel, random_state=seed,
    ).fit(x, y, gac_hook=gac_hook)
    return model, model.trace_
