import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heatcast.distributions import (
    LEVELS,
    QuantileCdf,
    ZeroMassGaussian,
    ZeroMassT,
    censored_t_loglik,
    cdf,
    from_dict,
    quantile,
    sample,
    t_logpdf,
)


def linear_quantiles(lo=10.0, step=1.0):
    return QuantileCdf(lo + step * np.arange(99))


def test_cdf_examples():
    assert cdf(ZeroMassGaussian(0.0, 1.0), 0.0) == 0.5
    for d in (ZeroMassGaussian(5.0, 2.0), ZeroMassT(5.0, 2.0, 3.0), linear_quantiles()):
        assert cdf(d, -5.0) == 0
    q = linear_quantiles(21.0)
    assert q.values[49] == 70
    assert cdf(q, 70.0) == pytest.approx(0.5, abs=1e-15)


def test_point_mass_matches_prob_zero():
    d = ZeroMassT(3.0, 2.0, 4.0)
    assert cdf(d, 0.0) == pytest.approx(float(mpmath.quad(lambda x: _t_pdf(x, 4), [-mpmath.inf, -1.5])), abs=1e-10)
    assert d.prob_zero == cdf(d, 0.0)


def test_quantile_examples():
    assert quantile(ZeroMassGaussian(0.0, 1.0), 0.3) == 0
    assert quantile(ZeroMassGaussian(100.0, 1.0), 0.5) == pytest.approx(100.0, abs=1e-12)
    q = linear_quantiles()
    for k in (0, 17, 49, 98):
        assert quantile(q, LEVELS[k]) == pytest.approx(q.values[k], abs=1e-12)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            quantile(q, bad)


def test_sample_examples():
    assert np.all(sample(ZeroMassGaussian(-10.0, 0.1), 1000, np.random.default_rng(0)) == 0)
    d = ZeroMassT(50.0, 10.0, 5.0)
    a = sample(d, 100, np.random.default_rng(3))
    b = sample(d, 100, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    x = sample(ZeroMassGaussian(1000.0, 1.0), 100_000, np.random.default_rng(4))
    # 5 standard errors of the mean is 0.016
    assert abs(x.mean() - 1000) < 0.02
    with pytest.raises(ValueError):
        sample(d, 0, np.random.default_rng(0))


def test_sample_draws_one_per_stratum():
    d = ZeroMassGaussian(np.array([100.0, 300.0]), np.array([5.0, 20.0]))
    x = sample(d, 50, np.random.default_rng(8))
    u = ZeroMassGaussian(d.mu[:, None], d.sigma[:, None]).cdf(x)
    k = np.floor(np.sort(u, axis=-1) * 50 + 1e-9)
    np.testing.assert_array_equal(k, np.tile(np.arange(50.0), (2, 1)))
    # shuffled, not handed back in stratum order
    assert np.any(np.diff(u[0]) < 0)


def _t_pdf(x, nu):
    nu = mpmath.mpf(nu)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    return c * (1 + x * x / nu) ** (-(nu + 1) / 2)


def _t_cdf_oracle(z, nu):
    # half plus the density integrated from 0, at 50 digits
    half = mpmath.quad(lambda x: _t_pdf(x, nu), [0, min(abs(z), 1), abs(z)] if abs(z) > 1 else [0, abs(z)])
    return mpmath.mpf(0.5) + (half if z >= 0 else -half)


def _t_cdf_beta(z, nu):
    nu = mpmath.mpf(nu)
    x = nu / (nu + mpmath.mpf(z) ** 2)
    tail = mpmath.betainc(nu / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
    return 1 - tail if z > 0 else tail


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.5, 7.0, 30.0, 1e3, 1e6])
def test_student_t_cdf_accuracy(nu):
    mpmath.mp.dps = 50
    d = ZeroMassT(0.0, 1.0, nu)
    for z in (0.0, 0.3, 1.0, 2.7, 10.0, 80.0):
        assert abs(float(d._std_cdf(z)) - float(_t_cdf_oracle(z, nu))) < 1e-10
        assert abs(float(d._std_cdf(-z)) - float(_t_cdf_oracle(-z, nu))) < 1e-10


def test_t_cdf_oracle_agrees_with_density_integral():
    mpmath.mp.dps = 30
    for z in (-4.0, 1.2, 30.0):
        assert abs(_t_cdf_beta(z, 3) - _t_cdf_oracle(z, 3)) < 1e-20


DISTS = [
    ZeroMassGaussian(20.0, 15.0),
    ZeroMassT(20.0, 15.0, 2.5),
    QuantileCdf(np.r_[np.zeros(10), np.linspace(1, 80, 80), np.full(9, 90.0)]),
]


@pytest.mark.parametrize("d", DISTS)
def test_cdf_monotone_right_continuous_with_limits(d):
    grid = np.linspace(-10, 400, 1000)
    F = cdf(d, grid)
    assert np.all(np.diff(F) >= 0)
    assert F[0] == 0 and cdf(d, 1e9) == pytest.approx(1.0, abs=1e-8)
    for y in (0.0, 90.0):
        assert cdf(d, y) == pytest.approx(cdf(d, y + 1e-12), abs=1e-9)


@pytest.mark.parametrize("d", DISTS)
def test_quantile_roundtrip(d):
    p0 = float(d.prob_zero)
    for tau in np.linspace(0.005, 0.995, 199):
        F = float(cdf(d, quantile(d, tau)))
        if tau <= p0:
            assert F >= tau - 1e-12
        elif isinstance(d, QuantileCdf) and quantile(d, tau) == 90.0:
            # inside the tied block the CDF jumps past tau
            assert F >= tau - 1e-12
        else:
            assert abs(F - tau) < 1e-9


@pytest.mark.parametrize("d", DISTS)
def test_sample_kolmogorov_distance(d):
    x = np.sort(sample(d, 100_000, np.random.default_rng(11)))
    # a dense grid through the atom at zero; both CDFs are right-continuous
    grid = np.r_[0.0, np.linspace(0, 200, 4001)]
    ecdf = np.searchsorted(x, grid, side="right") / x.size
    assert np.max(np.abs(ecdf - cdf(d, grid))) < 0.01


@given(arrays(float, 99, elements=st.floats(-500, 500)))
def test_quantile_cdf_sorted_nonnegative(v):
    q = QuantileCdf(v)
    assert np.all(q.values >= 0)
    assert np.all(np.diff(q.values) >= 0)


def test_quantile_cdf_ties_and_tails():
    v = np.r_[np.linspace(10, 50, 49), np.full(10, 60.0), np.linspace(61, 100, 40)]
    q = QuantileCdf(v)
    # vertical step at the tie
    assert cdf(q, 60.0) == pytest.approx(0.59)
    assert cdf(q, 60.0 - 1e-9) < 0.51
    h = np.median(np.diff(q.values))
    assert cdf(q, 10 - h) == 0 and cdf(q, 10 - h / 2) == pytest.approx(0.005)
    assert cdf(q, 100 + h) == 1 and cdf(q, 100 + h / 2) == pytest.approx(0.995)
    # tail floored at zero
    z = QuantileCdf(0.5 + np.arange(99.0))
    assert z.knots()[0][0] == 0 and cdf(z, 0.0) == 0
    assert cdf(z, 0.25) == pytest.approx(0.005)


def test_quantile_cdf_shape_errors():
    with pytest.raises(ValueError):
        QuantileCdf(np.arange(98.0))
    with pytest.raises(ValueError):
        QuantileCdf(np.r_[np.arange(98.0), np.nan])


def test_batched_parameters():
    d = ZeroMassGaussian(np.array([0.0, 50.0]), np.array([1.0, 5.0]))
    np.testing.assert_allclose(cdf(d, np.array([0.0, 50.0])), [0.5, 0.5])
    assert sample(d, 7, np.random.default_rng(0)).shape == (2, 7)
    assert float(d[1].mu) == 50


@pytest.mark.parametrize("d", DISTS)
def test_json_roundtrip(d):
    back = from_dict(d.to_dict())
    grid = np.linspace(0, 200, 50)
    np.testing.assert_array_equal(cdf(back, grid), cdf(d, grid))


def test_censored_loglik_gaussian_limit():
    r = np.random.default_rng(0)
    mu = r.uniform(60, 140, 40)
    sigma = r.uniform(5, 20, 40)
    # the t and Gaussian log densities part by about z**4 / (4 nu), so stay within 3 sd
    y = mu + sigma * r.uniform(-3, 3, 40)
    gauss = -0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5 * ((y - mu) / sigma) ** 2
    for i in range(40):
        assert abs(censored_t_loglik(y[i : i + 1], mu[i], sigma[i], 1e6) - gauss[i]) < 1e-4


def test_censored_loglik_examples():
    assert censored_t_loglik([0.0], [-1e4], [1.0], 3.0) == pytest.approx(0.0, abs=1e-9)
    nu = 4.0
    density_at_zero = float(mpmath.gamma(2.5) / (mpmath.sqrt(4 * mpmath.pi) * mpmath.gamma(2)))
    assert censored_t_loglik([7.0], [7.0], [1.0], nu) == pytest.approx(np.log(density_at_zero), abs=1e-12)
    assert t_logpdf(0.0, nu) == pytest.approx(np.log(density_at_zero), abs=1e-12)
    with pytest.raises(ValueError):
        censored_t_loglik([-1.0], [0.0], [1.0], nu)
    with pytest.raises(ValueError):
        censored_t_loglik([1.0], [0.0], [0.0], nu)
