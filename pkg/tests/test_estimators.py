import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from panelqr import LongitudinalMeanRegressor, LongitudinalQuantileRegressor


@pytest.fixture(scope="module")
def panel():
    rng = np.random.default_rng(0)
    n, T = 60, 5
    groups = np.repeat(np.arange(n), T)
    X = rng.normal(size=(n * T, 2))
    a = rng.normal(size=n)
    y = 1.0 + X @ [2.0, -1.0] + a[groups] + 0.5 * rng.normal(size=n * T)
    return X, y, groups


def test_params_round_trip():
    est = LongitudinalQuantileRegressor(0.3, n_iter=100, burn_in=10, random_slopes=(1,))
    params = est.get_params()
    assert params["quantile"] == 0.3 and params["random_slopes"] == (1,)
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(quantile=0.7)
    assert est.quantile == 0.7


def test_mean_fit_predict(panel):
    X, y, groups = panel
    est = LongitudinalMeanRegressor(n_iter=800, burn_in=200, random_state=1).fit(X, y, groups)
    assert est.coef_.shape == (2,)
    np.testing.assert_allclose(est.coef_, [2.0, -1.0], atol=0.15)
    pop = est.predict(X)
    ind = est.predict(X, groups)
    assert np.mean((y - ind) ** 2) < np.mean((y - pop) ** 2)
    assert est.score(X, y) > 0.5
    assert est.summary_.names[:3] == ["intercept", "x0", "x1"]
    assert est.fit_report_.df == 3 + 1 + 60 + 1
    # unseen ids fall back to the population prediction
    np.testing.assert_allclose(est.predict(X[:3], np.array([-1, -2, -3])), pop[:3])


def test_quantile_fit_orders_intercepts(panel):
    X, y, groups = panel
    lo = LongitudinalQuantileRegressor(0.2, n_iter=800, burn_in=200).fit(X, y, groups)
    hi = LongitudinalQuantileRegressor(0.8, n_iter=800, burn_in=200).fit(X, y, groups)
    assert hi.intercept_ > lo.intercept_
    assert -1 < lo.score(X, y, groups) <= 1


def test_no_intercept_and_ablation(panel):
    X, y, groups = panel
    est = LongitudinalMeanRegressor(n_iter=200, burn_in=50, fit_intercept=False,
                                    random_intercept=False, random_slopes=(0,)).fit(X, y, groups)
    assert est.intercept_ == 0.0 and est.coef_.shape == (2,)
    flat = LongitudinalMeanRegressor(n_iter=200, burn_in=50, include_random_effects=False).fit(X, y, groups)
    assert not flat.chain_.with_random_effects
    np.testing.assert_allclose(flat.predict(X, groups), flat.predict(X))


def test_validation(panel):
    X, y, groups = panel
    with pytest.raises(NotFittedError):
        LongitudinalMeanRegressor().predict(X)
    with pytest.raises(ValueError):
        LongitudinalQuantileRegressor(1.5, n_iter=10, burn_in=1).fit(X, y, groups)
    with pytest.raises(ValueError):
        LongitudinalMeanRegressor(n_iter=10, burn_in=1).fit(X, y[:-1], groups)
    with pytest.raises(ValueError):
        LongitudinalMeanRegressor(n_iter=10, burn_in=1).fit(X, y, None)
    est = LongitudinalMeanRegressor(n_iter=20, burn_in=5).fit(X, y, groups)
    with pytest.raises(ValueError):
        est.predict(X[:, :1])
