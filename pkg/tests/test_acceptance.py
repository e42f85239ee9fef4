"""Acceptance suite: one test (or small group) per criterion, each with a time budget.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.
"""
import numpy as np
import pytest

from gac.baselines import genp_v
from gac.complexity import (
    TrainingTrace,
    bootstrap_gac_se,
    ensemble_gac,
    ensemble_moments,
    gac_from_kernel,
    gac_value,
    matrix_entropy,
    total_gac,
)
from gac.exceptions import UndefinedTotalError
from gac.gp import GpProblem, feature_map, gp_posterior, prior_function_draws, theta_posterior_sample
from gac.harness.experiments import ExperimentConfig, median_se, run_rows, summarize
from gac.kernels import KernelSpec, kernel_matrix, normalize
from gac.models import KernelRidge, MLPRegressor
from gac.smoothers import (
    DecisionTreeSmoother,
    RandomForestSmoother,
    fit_forest,
    knn_gac,
    knn_kernel,
    rf_kernel,
)

criterion = pytest.mark.criterion


def _sample(n=200, d=2, seed=0, sigma=1.0):
    return sigma * np.random.default_rng(seed).standard_normal((n, d))


@criterion("GAC equals normalized linear entropy", max_seconds=5)
def test_gac_equals_linear_entropy():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 51))
        g = rng.normal(size=(n, int(rng.integers(1, 2 * n))))
        kb = normalize(g @ g.T)
        kb = 0.5 * (kb + kb.T)
        worst = max(worst, abs(gac_from_kernel(kb).value - matrix_entropy(kb, "linear").value))
    assert worst <= 1e-10


@criterion("polynomial GAC increases with degree", max_seconds=5)
def test_polynomial_degree_monotone():
    x = _sample()
    g = [gac_from_kernel(kernel_matrix(KernelSpec("polynomial", p=p, c=1.0), x)).value
         for p in range(11)]
    assert g[0] == 0.0
    assert all(b > a for a, b in zip(g, g[1:])), g


@criterion("Matern GAC decreases with length scale", max_seconds=10)
def test_matern_length_scale_monotone():
    x = _sample()
    spec = lambda l: KernelSpec("matern", l=l, nu=1.5)  # noqa: E731
    grid = np.logspace(np.log10(0.05), np.log10(20), 25)
    g = [gac_from_kernel(kernel_matrix(spec(l), x)).value for l in grid]
    assert all(b < a for a, b in zip(g, g[1:])), g
    assert gac_from_kernel(kernel_matrix(spec(1e6), x)).value <= 1e-3
    assert gac_from_kernel(kernel_matrix(spec(1e-6), x)).value >= 0.999


@criterion("polynomial GAC large-scale limit", max_seconds=30)
def test_polynomial_large_sigma_limit():
    spec = KernelSpec("polynomial", p=2, c=1.0)
    vals = [gac_from_kernel(kernel_matrix(spec, _sample(2000, 3, seed, 1e4))).value
            for seed in range(20)]
    assert abs(np.mean(vals) - (1 - (1 / 3) * (3 / 5))) <= 0.02


@criterion("Matern GAC increases with input scale", max_seconds=30)
def test_matern_input_scale_monotone():
    spec = KernelSpec("matern", l=1.0, nu=1.5)
    sigmas = [0.01, 0.1, 1.0, 10.0, 100.0]
    # 1 - GAC (the mean squared normalized kernel) keeps full precision near GAC = 1
    comp = np.empty((20, len(sigmas)))
    for seed in range(20):
        base = _sample(200, 1, seed)
        for j, s in enumerate(sigmas):
            kb = normalize(kernel_matrix(spec, s * base))
            np.fill_diagonal(kb, 0.0)
            comp[seed, j] = (kb * kb).sum() / (200 * 199)
    diffs = comp[:, :-1] - comp[:, 1:]  # GAC(sigma_{k+1}) - GAC(sigma_k)
    se = diffs.std(0, ddof=1) / np.sqrt(20)
    assert np.all(diffs.mean(0) > 3 * se), (diffs.mean(0), se)


@criterion("kNN closed-form GAC", max_seconds=1)
def test_knn_closed_form():
    x = np.random.default_rng(0).permutation(20).astype(float)[:, None]
    for kappa in range(1, 21):
        assert abs(gac_from_kernel(knn_kernel(x, x, kappa)).value - knn_gac(kappa, 20)) <= 1e-15


@criterion("tree GAC increases per split", max_seconds=1)
def test_tree_growth_monotone():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(20, 1)), rng.normal(size=20)
    g = DecisionTreeSmoother(max_leaves=20, record_history=True).fit(x, y).growth_gacs()
    assert len(g) == 20
    assert g[0] == 0.0 and g[-1] == 1.0
    assert all(b > a for a, b in zip(g, g[1:]))


@criterion("ensemble GAC identity", max_seconds=5)
def test_ensemble_identity():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(40, 2)), rng.normal(size=40)
    rf = RandomForestSmoother(5, max_leaves=8, bootstrap=True, random_state=1).fit(x, y)
    kbars = rf.tree_kernels()
    aggregated = gac_value(normalize(np.mean(kbars, axis=0)))
    stats = ensemble_moments(kbars)
    formula = stats.gac_single + (1 - 1 / 5) * (1 - stats.rho) * stats.var_kbar
    assert abs(aggregated - formula) <= 1e-10
    assert abs(aggregated - ensemble_gac(stats)) <= 1e-10
    assert abs(rf.complexity().value - aggregated) <= 1e-10
    same = RandomForestSmoother(5, max_leaves=8, bootstrap=False, random_state=1).fit(x, y)
    tree = DecisionTreeSmoother(max_leaves=8).fit(x, y)
    assert abs(same.complexity().value - tree.complexity().value) <= 1e-12


@criterion("forest kernel row sums", max_seconds=5)
def test_forest_row_sums():
    rng = np.random.default_rng(0)
    for i in range(20):
        n, d, b = int(rng.integers(10, 60)), int(rng.integers(1, 5)), int(rng.integers(1, 12))
        x, y = rng.normal(size=(n, d)), rng.normal(size=n)
        forest = fit_forest(x, y, b, max_leaves=int(rng.integers(1, n + 1)),
                            bootstrap=bool(i % 2), max_features=1 if i % 3 == 0 else None,
                            random_state=i)
        assert np.max(np.abs(rf_kernel(forest).sum(1) - b)) <= 1e-12
        q = rf_kernel(forest, forest.apply(rng.normal(size=(7, d))))
        assert np.max(np.abs(q.sum(1) - b)) <= 1e-12


@criterion("feature-space GP posterior sampling", max_seconds=60)
def test_feature_space_posterior():
    rng = np.random.default_rng(0)
    spec = KernelSpec("polynomial", p=2, c=1.0)
    xt, y = rng.normal(size=(6, 2)), rng.normal(size=6)
    xq = rng.normal(size=(5, 2))
    phi_t, phi = feature_map(spec, xt), feature_map(spec, xq)
    lam = 0.5
    z = rng.standard_normal((phi.shape[1], 20000))
    f = phi @ theta_posterior_sample(phi_t, y, lam, z)
    post = gp_posterior(GpProblem(xt, y, xq, spec, lam))
    se = f.std(1, ddof=1) / np.sqrt(f.shape[1])
    assert np.all(np.abs(f.mean(1) - post.mean) <= 3 * se)
    assert np.linalg.norm(np.cov(f) - post.cov) <= 0.05 * np.linalg.norm(post.cov)

    z1 = rng.standard_normal(phi.shape[1])
    theta = theta_posterior_sample(phi_t, y, 1e12, z1)
    assert np.linalg.norm(theta - z1) <= 1e-6 * np.linalg.norm(z1)
    prior = gp_posterior(GpProblem(xt, y, xq, spec, 1e12))
    k = kernel_matrix(spec, xq)
    assert np.linalg.norm(prior.cov - k) <= 1e-6 * np.linalg.norm(k)
    assert np.linalg.norm(prior.mean) <= 1e-6 * np.linalg.norm(k)


@criterion("prior correlation equals normalized kernel", max_seconds=30)
def test_prior_correlation():
    rng = np.random.default_rng(0)
    spec = KernelSpec("polynomial", p=3, c=1.0)
    for _ in range(10):
        pair = rng.normal(size=(2, 2))
        phi = feature_map(spec, pair)
        f = prior_function_draws(phi, 100_000, random_state=rng.integers(2**32))
        kbar = normalize(kernel_matrix(spec, pair))[0, 1]
        assert abs(np.corrcoef(f[:, 0], f[:, 1])[0, 1] - kbar) <= 0.02


@criterion("expected test error from GENP-V", max_seconds=30)
def test_expected_test_error():
    rng = np.random.default_rng(0)
    x, xt = rng.normal(size=(40, 2)), rng.normal(size=(30, 2))
    s = KernelRidge("gaussian", l=1.0, lam=0.1).fit(x, np.zeros(40)).smoother_matrices(xt)
    sigma, draws = 1.3, 10_000
    y = sigma * rng.standard_normal((40, draws))
    y_star = sigma * rng.standard_normal((30, draws))
    err = np.mean((y_star - s.s_out @ y) ** 2)
    expected = sigma**2 * (1 + genp_v(s) / 40)
    assert abs(err / expected - 1) <= 0.02


@criterion("smoother MSE bound", max_seconds=5)
def test_mse_bound():
    rng = np.random.default_rng(0)
    violations = 0
    for _ in range(100):
        n = int(rng.integers(2, 30))
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        s = (q * rng.uniform(0, 1, size=n)) @ q.T
        s = 0.5 * (s + s.T)
        y = rng.normal(size=n)
        violations += np.mean((y - s @ y) ** 2) > (n - np.trace(s)) ** 2 * np.mean(y**2)
    assert violations == 0


@criterion("length-scale vs regularization ordering", max_seconds=5)
def test_length_scale_regularization():
    rows = run_rows(ExperimentConfig("fig2", seeds=[0]))
    gac, enp = summarize(rows, "gac"), summarize(rows, "enp")
    assert gac[0.2] > gac[1.0]
    assert enp[0.2] < enp[1.0]


@criterion("KRR GAC independent of ridge", max_seconds=1)
def test_gac_ridge_invariance():
    x, y = _sample(60, 2), np.random.default_rng(1).normal(size=60)
    vals = [KernelRidge("gaussian", l=0.8, lam=lam).fit(x, y).complexity().value
            for lam in (1e-5, 0.1, 10.0)]
    assert vals[0] == vals[1] == vals[2]


@criterion("MLP Jacobian finite differences", max_seconds=10)
def test_mlp_jacobian():
    rng = np.random.default_rng(0)
    for m_id in range(5):
        h, d, c = int(rng.integers(2, 8)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        x = rng.normal(size=(5, d))
        m = MLPRegressor(hidden=h, epochs=0, random_state=m_id).fit(x, rng.normal(size=(5, c)))
        m.set_flat_params(rng.normal(size=m.n_params_))
        theta = m.get_flat_params()
        jac = m.jacobians(x)
        fd = np.empty_like(jac)
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += 1e-4
            tm[k] -= 1e-4
            fd[:, :, k] = (m.set_flat_params(tp)._forward(x)[2]
                           - m.set_flat_params(tm)._forward(x)[2]) / 2e-4
        m.set_flat_params(theta)
        bounds = np.cumsum([0, h * d, h, c * h, c])
        for a, b in zip(bounds, bounds[1:]):
            ref = np.linalg.norm(jac[:, :, a:b])
            err = np.linalg.norm(fd[:, :, a:b] - jac[:, :, a:b])
            assert err <= 1e-4 * max(ref, 1e-12), (m_id, a, b, err, ref)


@criterion("random-features double descent", max_seconds=900)
def test_rff_double_descent():
    cfg = ExperimentConfig("dd-rff", seeds=list(range(20)))
    rows = run_rows(cfg)
    n = cfg.params["n_train"]
    grid = sorted(summarize(rows, "test-mse"))
    err = summarize(rows, "test-mse")
    curve = [err[d] for d in grid]
    peak = int(np.argmax(curve))
    assert 0 < peak < len(grid) - 1
    assert 0.5 * n <= grid[peak] <= 2 * n
    assert curve[-1] < curve[peak]

    gac = summarize(rows, "gac")
    se = {d: median_se([float(r["value"]) for r in rows
                        if r["measure"] == "gac" and float(r["sweep_value"]) == d])
          for d in grid}
    for a, b in zip(grid, grid[1:]):
        assert gac[b] >= gac[a] - 3 * np.hypot(se[a], se[b]), (a, b)


@criterion("GAC stable across subsample sizes", max_seconds=10)
def test_subsample_stability():
    spec = KernelSpec("gaussian", l=1.0)
    x = _sample(250, 2, seed=3)
    small, large = x[:50], x[50:]
    kb_s = normalize(kernel_matrix(spec, small))
    kb_l = normalize(kernel_matrix(spec, large))
    se = np.hypot(bootstrap_gac_se(kb_s, 500, random_state=0),
                  bootstrap_gac_se(kb_l, 500, random_state=1))
    assert abs(gac_value(kb_s) - gac_value(kb_l)) <= 3 * se


@criterion("total GAC contracts", max_seconds=1)
def test_total_gac_contracts():
    assert total_gac(TrainingTrace([9.0, 4.0, 3.5, 3.5, 1.0], [0.37] * 4)).value == 0.37
    with pytest.raises(UndefinedTotalError):
        total_gac(TrainingTrace([1.0, 2.0, 3.0], [0.5, 0.6]))
