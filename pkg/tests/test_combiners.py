import numpy as np
import pytest
from scipy import stats
from scipy.optimize import linprog

from heatcast.combiners import (
    CombinerWindow,
    GamlssCombiner,
    QraCombiner,
    fit_ea,
    fit_ea_ev,
    fit_gamlss,
    fit_gbqrt,
    fit_naive,
    fit_qra,
    pinball_loss,
    predict_ea,
    predict_gbqrt,
    predict_naive,
    predict_qra,
    quantile_regression,
)
from heatcast.distributions import LEVELS, ZeroMassGaussian, ZeroMassT
from heatcast.forecasters.bspline import SplineBasis


def test_ea_variance_and_mean():
    members = np.array([[9.0, 11.0], [12.0, 14.0]])
    w = CombinerWindow(members, [11.0, 12.0])
    rule = fit_ea(w)
    assert rule.sigma**2 == pytest.approx(2.0)
    d = predict_ea(rule, np.array([[1.0, 3.0, 8.0]]))
    assert float(d.mu[0]) == 4.0


def test_ea_perfect_forecasts_floor():
    members = np.tile(np.arange(1.0, 6.0)[:, None], (1, 3))
    rule = fit_ea(CombinerWindow(members, np.arange(1.0, 6.0)))
    assert rule.floored and rule.sigma == pytest.approx(3e-6)
    with pytest.raises(ValueError):
        fit_ea(CombinerWindow(members[:1], [1.0]))


def test_naive_variance():
    w = CombinerWindow(np.zeros((4, 1)), [13.0, 7.0, 13.0, 7.0], y_lag24=[10.0, 10.0, 10.0, 10.0])
    rule = fit_naive(w)
    assert rule.sigma**2 == pytest.approx(12.0)
    np.testing.assert_array_equal(predict_naive(rule, [42.0, 5.0]).mu, [42.0, 5.0])
    periodic = fit_naive(CombinerWindow(np.zeros((3, 1)), [5.0, 6.0, 7.0], y_lag24=[5.0, 6.0, 7.0]))
    assert periodic.floored
    with pytest.raises(ValueError):
        fit_naive(CombinerWindow(np.zeros((3, 1)), [5.0, 6.0, 7.0]))


def test_ea_ev_is_stateless():
    ens = np.arange(1.0, 10.0)[None, :]
    a = fit_ea_ev(CombinerWindow(np.ones((3, 9)), [1.0, 2.0, 3.0])).predict(ens)
    assert float(a.sigma[0]) == pytest.approx(np.sqrt(60 / 8)) and float(a.sigma[0]) == pytest.approx(2.7386, abs=1e-4)
    b = fit_ea_ev(CombinerWindow(np.ones((3, 9)), [1.0, 2.0, 3.0])).predict(np.full((1, 9), 5.0))
    assert float(b.sigma[0]) == pytest.approx(2e-6)


def test_window_validation():
    with pytest.raises(ValueError):
        CombinerWindow(np.ones((3, 2)), [1.0, 2.0])
    with pytest.raises(ValueError):
        CombinerWindow(np.ones((2, 2)), [1.0, -2.0])


def gamlss_data(n=5000, seed=0):
    r = np.random.default_rng(seed)
    base = r.uniform(100, 300, n)
    members = np.column_stack([base] + [base + r.normal(0, 20, n) * 0 + r.normal(0, 30, n) for _ in range(8)])
    y = members[:, 0] + 5 * r.standard_t(6, n)
    return CombinerWindow(members, np.maximum(y, 0))


def test_gamlss_recovers_location_and_tail():
    w = gamlss_data()
    m = fit_gamlss(w)
    assert not m.fallback and m.converged
    assert m.beta[1] == pytest.approx(1.0, abs=0.1)
    assert 3 <= m.nu <= 12
    grid = np.linspace(m.spline.lo, m.spline.hi, 1000)
    assert np.all(np.diff(m.log_sigma(grid)) >= -1e-9)
    assert isinstance(m.predict(w.members[:5]), ZeroMassT)


def test_gamlss_degenerate_falls_back():
    r = np.random.default_rng(1)
    members = r.uniform(10, 20, (400, 9))
    w = CombinerWindow(members, members.mean(axis=1))
    m = fit_gamlss(w)
    assert m.fallback and not m.converged
    assert isinstance(m.predict(members[:3]), ZeroMassGaussian)
    np.testing.assert_allclose(m.predict(members[:3]).mu, members[:3].mean(axis=1))


def test_gamlss_needs_enough_pairs():
    r = np.random.default_rng(2)
    with pytest.raises(ValueError):
        fit_gamlss(CombinerWindow(r.uniform(1, 2, (329, 9)), r.uniform(1, 2, 329)))


def _manual(beta, nu, intercept=0.0):
    basis = SplineBasis(0.0, 10.0, 22)
    return GamlssCombiner(np.asarray(beta, float), intercept, basis, np.zeros(22), nu)


def test_gamlss_predict_examples():
    ens = np.array([[50.0, 10.0, 70.0], [80.0, 0.0, 1.0]])
    d = _manual([0.0, 1.0, 0.0, 0.0], 5.0).predict(ens)
    np.testing.assert_allclose(d.sigma, 1.0)
    np.testing.assert_allclose(d.mu, [50.0, 80.0])


def test_gamlss_gaussian_limit():
    ens = np.array([[40.0, 60.0], [100.0, 104.0]])
    d = _manual([1.0, 0.5, 0.5], 1e7, intercept=np.log(4.0)).predict(ens)
    g = ZeroMassGaussian(np.array([51.0, 103.0]), np.array([4.0, 4.0]))
    for y in (45.0, 51.0, 58.0):
        np.testing.assert_allclose(d.cdf(y), g.cdf(y), atol=1e-6)


def test_gamlss_sigma_monotone_in_sd():
    w = gamlss_data(n=1200, seed=3)
    m = fit_gamlss(w)
    ens = w.members[np.argsort(w.sd)]
    sig = m.predict(ens).sigma
    assert np.all(np.diff(sig) >= -1e-9 * sig.max())


def test_qra_intercept_only_median():
    r = np.random.default_rng(4)
    y = r.exponential(10, 401)
    m = fit_qra(CombinerWindow(np.full((401, 3), 7.0), y), levels=[0.5])
    assert m.coefficients[0, 0] == pytest.approx(np.median(y), abs=1e-9)
    assert np.all(m.coefficients[0, 1:] == 0)


def test_qra_exact_member():
    r = np.random.default_rng(5)
    members = r.uniform(10, 100, (500, 3))
    m = fit_qra(CombinerWindow(members, members[:, 1]), levels=LEVELS[::10])
    np.testing.assert_allclose(m.raw_quantiles(members), np.repeat(members[:, 1:2], 10, axis=1), atol=1e-6)


def qra_window(n=600, seed=6):
    r = np.random.default_rng(seed)
    base = r.uniform(50, 150, n)
    members = np.column_stack([base + r.normal(0, 5, n), base + r.normal(0, 8, n), base + r.normal(2, 10, n)])
    y = base + r.gumbel(0, 6, n)
    return CombinerWindow(members, y)


def test_qra_training_coverage_and_member_bound():
    w = qra_window()
    levels = np.array([0.05, 0.25, 0.5, 0.75, 0.95])
    m = fit_qra(w, levels=levels)
    q = m.raw_quantiles(w.members)
    n = len(w)
    for k, tau in enumerate(levels):
        cover = np.mean(w.y <= q[:, k] + 1e-9)
        assert abs(cover - tau) <= 3 / np.sqrt(n)
        loss = pinball_loss(w.y - q[:, k], tau)
        for j in range(3):
            X = np.column_stack([np.ones(n), w.members[:, j]])
            b = quantile_regression(X, w.y, tau)
            assert loss <= pinball_loss(w.y - X @ b, tau) + 1e-9


def test_quantile_regression_matches_primal_lp():
    w = qra_window(n=150, seed=7)
    X = np.column_stack([np.ones(len(w)), w.members])
    n, p = X.shape
    for tau in (0.1, 0.5, 0.9):
        # primal: min tau*1'u + (1 - tau)*1'v  s.t.  X b + u - v = y
        c = np.r_[np.zeros(p), np.full(n, tau), np.full(n, 1 - tau)]
        A = np.hstack([X, np.eye(n), -np.eye(n)])
        bounds = [(None, None)] * p + [(0, None)] * (2 * n)
        res = linprog(c, A_eq=A, b_eq=w.y, bounds=bounds, method="highs")
        ours = pinball_loss(w.y - X @ quantile_regression(X, w.y, tau), tau)
        assert ours == pytest.approx(res.fun, rel=1e-9, abs=1e-9)


def test_qra_predict_sorts_and_clips():
    grid = np.linspace(-5, 93, 99)
    coef = np.zeros((99, 3))
    coef[:, 0] = grid[::-1]
    d = predict_qra(QraCombiner(coef), np.ones((1, 2)))
    assert np.all(np.diff(d.values[0]) >= 0) and d.values[0, 0] == 0
    np.testing.assert_allclose(d.values[0, 10:], grid[10:])


def test_gbqrt_constant_target_and_uniform_noise():
    r = np.random.default_rng(8)
    X = r.normal(size=(200, 3))
    m = fit_gbqrt(X, 3, y=np.full(200, 12.5), levels=LEVELS, n_estimators=5)
    np.testing.assert_allclose(predict_gbqrt(m, X[:4]).values, 12.5)
    flat = np.ones((5000, 2))
    u = r.uniform(0, 1, 5000)
    lv = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    m = fit_gbqrt(flat, 3, y=u, levels=lv, n_estimators=20)
    raw = np.array([mdl.base_prediction for mdl in m.models])
    assert np.all(np.abs(raw - lv) < 0.05)
