"""scikit-learn style wrappers around the samplers.

Rows of ``X`` are observations; ``groups`` gives the individual of each
row.  The panel must be balanced.  Point estimates are posterior means.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import d2_pinball_score
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .fit import fit_report, summarize
from .gibbs import RunConfig, run_mean_gibbs, run_quantile_gibbs
from .panel import PriorSpec, panel_from_arrays
from .stats import _check_p


class _LongitudinalBase(RegressorMixin, BaseEstimator):

    def __init__(self, *, n_iter=12000, burn_in=3000, thin=1, random_state=0,
                 include_random_effects=True, fit_intercept=True, random_intercept=True,
                 random_slopes=(), beta_var=100.0, nu0=5.0, D_scale=10.0, c0=10.0, d0=9.0):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state
        self.include_random_effects = include_random_effects
        self.fit_intercept = fit_intercept
        self.random_intercept = random_intercept
        self.random_slopes = random_slopes
        self.beta_var = beta_var
        self.nu0 = nu0
        self.D_scale = D_scale
        self.c0 = c0
        self.d0 = d0

    def _validate_params(self):
        if not isinstance(self.random_state, (int, np.integer)):
            raise ValueError("random_state must be an integer seed")
        return RunConfig(iterations=int(self.n_iter), burn_in=int(self.burn_in),
                         seed=int(self.random_state), thin=int(self.thin),
                         include_random_effects=bool(self.include_random_effects))

    def _run(self, data, priors, config):
        raise NotImplementedError

    def fit(self, X, y, groups, periods=None):
        config = self._validate_params()
        X, y = check_X_y(X, y, y_numeric=True)
        if groups is None:
            raise ValueError("groups is required")
        data = panel_from_arrays(X, y, groups, periods, fit_intercept=self.fit_intercept,
                                 random_columns=tuple(self.random_slopes),
                                 random_intercept=self.random_intercept and self.fit_intercept)
        priors = PriorSpec.default(data.k, data.l, beta_var=self.beta_var, nu0=self.nu0,
                                   D_scale=self.D_scale, c0=self.c0, d0=self.d0)
        chain = self._run(data, priors, config)
        beta = chain.posterior_mean("beta")
        self.n_features_in_ = X.shape[1]
        self.chain_ = chain
        self.summary_ = summarize(chain)
        self.fit_report_ = fit_report(chain, data)
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(beta[0]), beta[1:]
        else:
            self.intercept_, self.coef_ = 0.0, beta
        self.h_ = float(chain.posterior_mean("h"))
        alpha = chain.posterior_mean("alpha")
        self.random_effects_ = dict(zip(chain.ids, alpha))
        return self

    def predict(self, X, groups=None):
        """Posterior-mean linear predictor.

        With ``groups`` the individual effects of known ids are added;
        unseen ids get the population prediction.
        """
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = X @ self.coef_ + self.intercept_
        if groups is None or not self.chain_.with_random_effects:
            return out
        groups = np.asarray(groups)
        if len(groups) != len(X):
            raise ValueError("groups and X have different lengths")
        S = self._random_design(X)
        zero = np.zeros(S.shape[1])
        alpha = np.stack([self.random_effects_.get(g.item() if hasattr(g, "item") else g, zero)
                          for g in groups])
        return out + np.einsum("ij,ij->i", S, alpha)

    def _random_design(self, X):
        cols = []
        if self.random_intercept and self.fit_intercept:
            cols.append(np.ones(len(X)))
        cols += [X[:, j] for j in self.random_slopes]
        return np.column_stack(cols)


class LongitudinalMeanRegressor(_LongitudinalBase):
    """Mixed-effects linear regression with Gaussian errors, fitted by Gibbs sampling."""

    def _run(self, data, priors, config):
        return run_mean_gibbs(data, priors, config)


class LongitudinalQuantileRegressor(_LongitudinalBase):
    """Mixed-effects quantile regression with asymmetric Laplace errors.

    ``score`` is the fraction of pinball loss explained (D² pinball).
    """

    def __init__(self, quantile=0.5, *, n_iter=12000, burn_in=3000, thin=1, random_state=0,
                 include_random_effects=True, fit_intercept=True, random_intercept=True,
                 random_slopes=(), beta_var=100.0, nu0=5.0, D_scale=10.0, c0=10.0, d0=9.0):
        super().__init__(n_iter=n_iter, burn_in=burn_in, thin=thin, random_state=random_state,
                         include_random_effects=include_random_effects,
                         fit_intercept=fit_intercept, random_intercept=random_intercept,
                         random_slopes=random_slopes, beta_var=beta_var, nu0=nu0,
                         D_scale=D_scale, c0=c0, d0=d0)
        self.quantile = quantile

    def _run(self, data, priors, config):
        _check_p(self.quantile)
        return run_quantile_gibbs(data, priors, float(self.quantile), config)

    def score(self, X, y, groups=None, sample_weight=None):
        return d2_pinball_score(y, self.predict(X, groups), sample_weight=sample_weight,
                                alpha=self.quantile)
