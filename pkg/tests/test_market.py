import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from nashvar.market import (
    FULL_LINE,
    INF,
    Cell,
    LognormalLaw,
    MarketParams,
    PiecewiseWealth,
    ZInterval,
    expected_utility,
    interval_upper_bound,
    outperformance_probability,
    price,
)

LAW = MarketParams.one_stock(0.03, 0.2, 4.0).law()
DIST = stats.lognorm(s=LAW.tau, scale=math.exp(LAW.nu))


def test_law_parameters(law):
    # theta = 0.15, nu = -theta^2 T / 2, tau = theta sqrt(T)
    assert law.nu == pytest.approx(-0.045, abs=1e-15)
    assert law.tau == pytest.approx(0.3, abs=1e-15)


def test_multi_asset_law_uses_theta_norm():
    m = MarketParams(np.array([0.03, 0.05]), np.array([[0.2, 0.0], [0.1, 0.3]]), 2.0)
    theta = np.linalg.solve(m.volatility, m.drift)
    law = m.law()
    assert law.tau == pytest.approx(np.linalg.norm(theta) * math.sqrt(2.0), rel=1e-14)
    assert law.nu == pytest.approx(-0.5 * theta @ theta * 2.0, rel=1e-14)


def test_invalid_market():
    with pytest.raises(ValueError):
        MarketParams.one_stock(0.03, 0.0, 4.0)
    with pytest.raises(ValueError):
        MarketParams.one_stock(0.03, 0.2, 0.0)


@pytest.mark.parametrize("p, expected", [(0.8, 1.23058), (0.2, 0.74268), (0.5, math.exp(-0.045))])
def test_quantile_known_values(law, p, expected):
    assert law.quantile(p) == pytest.approx(expected, abs=5e-6)
    assert law.quantile(p) == pytest.approx(DIST.ppf(p), rel=1e-12)


def test_quantile_closed_matches(law):
    for p in np.linspace(0.01, 0.99, 25):
        assert law.quantile_closed(p) == pytest.approx(law.quantile(p), rel=1e-10)


def test_quantile_edges_and_errors(law):
    for p in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            law.quantile(p)


def test_cdf_matches_scipy(law):
    z = np.array([0.1, 0.5, 1.0, 2.0, 5.0])
    np.testing.assert_allclose(law.cdf(z), DIST.cdf(z), rtol=1e-13)
    assert law.cdf(0.0) == 0.0
    assert law.cdf(INF) == 1.0


@pytest.mark.parametrize("p", [i / 100 for i in range(1, 100)])
def test_quantile_cdf_identity(law, p):
    assert float(law.cdf(law.quantile(p))) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("q", [-2.0, -0.5, 0.0, 0.3, 1.0, 2.5])
@pytest.mark.parametrize("iv", [ZInterval(0.0, 0.8), ZInterval(0.8, 1.3), ZInterval(1.3, INF)])
def test_truncated_moment_quadrature(law, q, iv):
    hi = DIST.ppf(1 - 1e-16) * 4 if iv.hi == INF else iv.hi
    val, _ = integrate.quad(lambda z: z ** q * DIST.pdf(z), iv.lo, hi, limit=200,
                            epsabs=1e-14, epsrel=1e-12)
    assert law.truncated_power_moment(q, iv) == pytest.approx(val, rel=1e-9, abs=1e-14)


@pytest.mark.parametrize("iv", [ZInterval(0.0, 0.8), ZInterval(0.8, 1.3), ZInterval(1.3, INF)])
def test_truncated_log_moment_quadrature(law, iv):
    hi = 20.0 if iv.hi == INF else iv.hi
    val, _ = integrate.quad(lambda z: math.log(z) * DIST.pdf(z), iv.lo, hi, limit=200)
    assert law.truncated_log_moment(iv) == pytest.approx(val, rel=1e-9, abs=1e-13)


def test_epsilon(law):
    gamma = 0.7
    q = 1 - 1 / gamma
    assert law.epsilon(gamma) == pytest.approx(math.exp(q * law.nu + 0.5 * (q * law.tau) ** 2),
                                                rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(q=st.floats(-3, 3), a=st.floats(0.05, 10.0))
def test_truncated_moments_telescope(q, a):
    lo = LAW.truncated_power_moment(q, ZInterval(0.0, a))
    hi = LAW.truncated_power_moment(q, ZInterval(a, INF))
    assert lo + hi == pytest.approx(LAW.power_moment(q), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.05, 10.0))
def test_log_moment_telescope(a):
    s = LAW.truncated_log_moment(ZInterval(0.0, a)) + LAW.truncated_log_moment(ZInterval(a, INF))
    assert s == pytest.approx(LAW.nu, rel=1e-12, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(p=st.floats(1e-6, 1 - 1e-6))
def test_quantile_cdf_property(p):
    assert float(LAW.cdf(LAW.quantile(p))) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("c1, c2", [(0.1, 0.7427), (0.5, 0.7547), (0.8, 0.9391), (1.2, 1.7274)])
def test_interval_upper_bound_captions(law, c1, c2):
    assert interval_upper_bound(law, c1, 0.2) == pytest.approx(c2, abs=5e-4)


@settings(max_examples=200, deadline=None)
@given(c1=st.floats(0.0, 3.0), alpha=st.floats(0.0, 1.0))
def test_interval_upper_bound_measure(c1, alpha):
    tail = 1.0 - float(LAW.cdf(c1))
    if alpha > tail:
        with pytest.raises(ValueError, match="maximal feasible"):
            interval_upper_bound(LAW, c1, alpha)
        return
    c2 = interval_upper_bound(LAW, c1, alpha)
    assert c2 >= c1
    if c2 == c1:
        assert alpha == pytest.approx(0.0, abs=1e-10)
        return
    assert LAW.probability(ZInterval(c1, c2)) == pytest.approx(alpha, abs=1e-10)


def test_interval_and_unbounded_marker():
    iv = ZInterval(1.0, INF)
    assert iv.unbounded and iv.contains(1e300) and not iv.contains(1.0)
    assert ZInterval(0.0, 1.0).intersect(ZInterval(2.0, 3.0)) is None
    assert ZInterval(0.0, 2.0).intersect(ZInterval(1.0, 3.0)) == ZInterval(1.0, 2.0)
    with pytest.raises(ValueError):
        ZInterval(2.0, 1.0)
    assert LAW.truncated_power_moment(1.0, iv) == pytest.approx(
        LAW.power_moment(1.0) - LAW.truncated_power_moment(1.0, ZInterval(0.0, 1.0)), rel=1e-14)


def test_piecewise_merges_and_evaluates():
    w = PiecewiseWealth.from_sets(2.0, [(ZInterval(0.5, 1.0), 3.0)])
    assert len(w.cells) == 3
    assert w(0.75) == pytest.approx(3.0 / 0.75)
    assert w(2.0) == pytest.approx(1.0)
    same = PiecewiseWealth.from_sets(2.0, [(ZInterval(0.5, 1.0), 2.0)])
    assert len(same.cells) == 1
    assert w.breakpoints == [0.5, 1.0]
    back = PiecewiseWealth.from_rows(w.to_rows())
    assert back == w


def test_piecewise_rejects_gaps():
    with pytest.raises(ValueError):
        PiecewiseWealth((Cell(0.0, 1.0, 1.0, -1.0), Cell(2.0, INF, 1.0, -1.0)))


def test_merton_price(law):
    assert price(law, PiecewiseWealth.merton(3.0)) == pytest.approx(3.0, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.2, 3.0), c1=st.floats(0.1, 5.0), c2=st.floats(0.1, 5.0))
def test_price_linearity(a, c1, c2):
    w = PiecewiseWealth.from_sets(c1, [(ZInterval(a, INF), c2)])
    left, right = ZInterval(0.0, a), ZInterval(a, INF)
    total = price(LAW, w)
    assert price(LAW, w, left) + price(LAW, w, right) == pytest.approx(total, rel=1e-12)
    assert price(LAW, w, left) == pytest.approx(price(LAW, PiecewiseWealth.merton(c1), left),
                                                rel=1e-12)


def _random_wealth(rng, gamma):
    k = int(rng.integers(1, 4))
    edges = np.sort(rng.uniform(0.4, 2.0, size=k - 1))
    bounds = [0.0, *edges, INF]
    cells = tuple(Cell(bounds[i], bounds[i + 1], float(rng.uniform(0.5, 3.0)), -1.0 / gamma)
                  for i in range(k))
    return PiecewiseWealth(cells, gamma)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("gamma", [1.0, 0.7, 1.5])
def test_monte_carlo_consistency(law, seed, gamma):
    rng = np.random.default_rng(seed)
    w = _random_wealth(rng, gamma)
    z = law.sample(1_000_000, rng)
    x = w(z)
    disc = z * x
    assert abs(disc.mean() - price(law, w)) <= 3 * disc.std() / 1e3
    from nashvar.utility import crra
    u = crra(x, gamma)
    assert abs(u.mean() - expected_utility(law, w, gamma)) <= 3 * u.std() / 1e3


def test_outperformance_probability_closed_form(law):
    w1 = PiecewiseWealth.merton(3.0)
    w2 = PiecewiseWealth.from_sets(1.825, [(ZInterval(0.0, law.quantile(0.2)), 2.7)])
    assert outperformance_probability(law, w2, [(0.9, w1)]) == pytest.approx(0.2, abs=1e-12)
    assert outperformance_probability(law, w1, [(0.9, w2)]) == pytest.approx(1.0, abs=1e-12)


def test_outperformance_probability_mixed_exponents(law):
    # q z^-1 >= p z^-1/gamma on a cell: one crossing point
    own = PiecewiseWealth.merton(2.0)
    other = PiecewiseWealth.merton(2.0, 0.7)
    rng = np.random.default_rng(7)
    z = law.sample(1_000_000, rng)
    mc = np.mean(own(z) >= other(z))
    assert outperformance_probability(law, own, [(1.0, other)]) == pytest.approx(mc, abs=3e-3)


def test_expected_utility_rejects_bad_gamma(law):
    with pytest.raises(ValueError):
        expected_utility(law, PiecewiseWealth.merton(1.0), 0.0)


def test_laws_are_comparable():
    assert LognormalLaw(-0.045, 0.3) == LAW
    assert FULL_LINE.lo == 0.0 and FULL_LINE.hi == INF
