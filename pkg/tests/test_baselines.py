import numpy as np
import pytest

from gac.baselines import ErrorSummary, SmootherMatrices, enp, error_summary, genp_rx, genp_v, param_norm
from gac.exceptions import DomainError, MissingMatrixError, ShapeError
from gac.gp import feature_map
from gac.kernels import KernelSpec
from gac.models import KernelRidge


def test_enp_examples():
    assert enp(SmootherMatrices(np.eye(7))) == 7
    assert enp(SmootherMatrices(np.eye(7)), normalized=True) == 1
    assert enp(SmootherMatrices(np.zeros((4, 4)))) == 0
    with pytest.raises(ShapeError):
        enp(SmootherMatrices(np.zeros((3, 4))))
    with pytest.raises(MissingMatrixError):
        enp(SmootherMatrices(s_out=np.eye(3)))


def test_enp_heavy_shrinkage():
    x = np.random.default_rng(0).normal(size=(40, 2))
    m = KernelRidge("gaussian", lam=1e6).fit(x, np.zeros(40))
    assert enp(m.smoother_matrices()) <= 0.01 * 40


def test_genp_v_examples():
    assert genp_v(SmootherMatrices(s_out=np.eye(5))) == 5
    assert genp_v(SmootherMatrices(s_out=np.zeros((3, 5)))) == 0
    with pytest.raises(MissingMatrixError):
        genp_v(SmootherMatrices(np.eye(3)))
    with pytest.raises(ShapeError):
        SmootherMatrices(np.eye(3), np.eye(4))


def test_genp_v_expected_test_error():
    rng = np.random.default_rng(1)
    n, n_star, sigma, draws = 20, 15, 1.7, 10_000
    s_out = rng.normal(scale=0.2, size=(n_star, n))
    y = sigma * rng.standard_normal((n, draws))
    y_star = sigma * rng.standard_normal((n_star, draws))
    err = np.mean((y_star - s_out @ y) ** 2)
    expected = sigma**2 * (1 + genp_v(SmootherMatrices(s_out=s_out)) / n)
    assert abs(err / expected - 1) <= 0.02


def test_genp_rx_examples():
    assert genp_rx(ErrorSummary(0.3, 0.3, 1.0), 10) == 0
    assert genp_rx(ErrorSummary(0.5, 2.5, 1.0), 10) == 10
    assert genp_rx(ErrorSummary(0.5, 0.1, 1.0), 10) < 0
    with pytest.raises(DomainError):
        genp_rx(ErrorSummary(0.1, 0.2, 0.0), 10)
    with pytest.raises(DomainError):
        ErrorSummary(-0.1, 0.2, 1.0)


def test_genp_rx_recovers_trace():
    rng = np.random.default_rng(2)
    n, sigma, draws = 30, 0.8, 10_000
    x = rng.normal(size=(n, 1))
    s = KernelRidge("gaussian", l=0.7, lam=0.5).fit(x, np.zeros(n)).smoother_matrices(x)
    f = np.sin(3 * x[:, 0])
    y = f[:, None] + sigma * rng.standard_normal((n, draws))
    y_fresh = f[:, None] + sigma * rng.standard_normal((n, draws))
    fit = s.s_in @ y
    mse_in = np.mean((y - fit) ** 2)
    mse_out = np.mean((y_fresh - s.s_out @ y) ** 2)
    value = genp_rx(ErrorSummary(mse_in, mse_out, sigma**2), n)
    assert abs(value / enp(s) - 1) <= 0.05


def test_error_summary():
    s = SmootherMatrices(np.eye(3), np.zeros((2, 3)))
    e = error_summary(s, [1.0, 2.0, 3.0], [1.0, -1.0], 1.0)
    assert e.mse_in == 0 and e.mse_out == 1


def test_param_norm_examples():
    k = np.random.default_rng(3).normal(size=(4, 4))
    assert param_norm(np.zeros(4), k @ k.T) == 0
    a = np.array([1.0, -2.0, 0.5])
    assert param_norm(a, np.eye(3)) == pytest.approx(a @ a)
    with pytest.raises(ShapeError):
        param_norm(np.ones(3), np.eye(4))


def test_param_norm_explicit_features():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 2))
    spec = KernelSpec("polynomial", p=1, c=1.0)
    phi = feature_map(spec, x)
    a = rng.normal(size=6)
    assert abs(param_norm(a, phi @ phi.T) - np.sum((phi.T @ a) ** 2)) <= 1e-12


def test_mse_bound_by_trace():
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(100):
        n = int(rng.integers(2, 12))
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        s = (q * rng.uniform(0, 1, size=n)) @ q.T
        y = rng.normal(size=n)
        lhs = np.mean((y - s @ y) ** 2)
        rhs = (n - np.trace(s)) ** 2 * np.mean(y**2)
        violations += lhs > rhs + 1e-12
    assert violations == 0


def test_enp_monotone_in_lambda():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(30, 2))
    vals = [enp(KernelRidge("gaussian", lam=lam).fit(x, np.zeros(30)).smoother_matrices())
            for lam in np.logspace(-5, 3, 17)]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
