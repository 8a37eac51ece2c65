"""Synthetic panels with known truth and a brute-force posterior oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, PanelQRError
from .gibbs import MeanState, QuantState, mean_sweep, quant_sweep
from .panel import INTERCEPT, PanelDataset, PriorSpec
from .rng import KeyedStreams
from .stats import QuantileParams, al_params, check_loss, is_spd, sample_al_mixture, sample_wishart


@dataclass(frozen=True, eq=False)
class TruthSpec:
    """Ground truth for a synthetic panel.

    ``X`` is an intercept plus ``k - 1`` covariate columns drawn from
    ``covariate_law`` (``"normal"``: N(0, 1); ``"uniform"``: U(0, 2)).
    ``S`` is the first ``l`` columns of ``X``.  ``hetero = (j, delta)``
    multiplies each error by ``1 + delta * X[..., j]`` (location-scale DGP).
    """

    beta: np.ndarray
    Sigma: np.ndarray
    h: float
    n: int
    T: int
    p: float | None = None
    covariate_law: str = "normal"
    hetero: tuple[int, float] | None = None
    k: int = field(init=False)
    l: int = field(init=False)

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        Sigma = np.asarray(self.Sigma, dtype=float)
        Sigma = np.atleast_2d(Sigma) if Sigma.size else np.zeros((0, 0))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "k", beta.size)
        object.__setattr__(self, "l", Sigma.shape[0])
        if self.l > self.k:
            raise DomainError("random-effect design is a subset of X, so l <= k")
        if self.l and not is_spd(Sigma):
            raise DomainError("Sigma_true must be symmetric positive definite")
        if self.h <= 0 or self.n < 1 or self.T < 1:
            raise DomainError("need h > 0, n >= 1, T >= 1")
        if self.p is not None and not 0 < self.p < 1:
            raise DomainError("p must lie in (0, 1)")
        if self.covariate_law not in ("normal", "uniform"):
            raise DomainError(f"unknown covariate law {self.covariate_law!r}")
        if self.hetero is not None and not 0 < self.hetero[0] < self.k:
            raise DomainError("hetero column must be a non-intercept column of X")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "Sigma": self.Sigma.tolist(),
            "h": float(self.h),
            "n": int(self.n),
            "T": int(self.T),
            "p": self.p,
            "covariate_law": self.covariate_law,
            "hetero": list(self.hetero) if self.hetero else None,
        }


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _design(truth: TruthSpec, rng):
    n, T, k = truth.n, truth.T, truth.k
    if truth.covariate_law == "normal":
        cov = rng.standard_normal((n, T, k - 1))
    else:
        cov = rng.uniform(0.0, 2.0, (n, T, k - 1))
    X = np.concatenate([np.ones((n, T, 1)), cov], axis=2)
    names = (INTERCEPT,) + tuple(f"x{j}" for j in range(1, k))
    return X, names


def _alpha(truth: TruthSpec, rng):
    if truth.l == 0:
        return np.zeros((truth.n, 0))
    chol = np.linalg.cholesky(truth.Sigma)
    return rng.standard_normal((truth.n, truth.l)) @ chol.T


def _scale(truth: TruthSpec, X):
    if truth.hetero is None:
        return 1.0
    j, delta = truth.hetero
    scale = 1.0 + delta * X[:, :, j]
    if np.any(scale <= 0):
        raise DomainError("location-scale multiplier must stay positive on the drawn covariates")
    return scale


def _assemble(truth, X, names, alpha, eps):
    S = X[:, :, : truth.l]
    y = X @ truth.beta + np.einsum("ntl,nl->nt", S, alpha) + eps
    ds = PanelDataset(
        ids=tuple(range(1, truth.n + 1)), y=y, X=X, S=S,
        fixed_names=names, random_names=names[: truth.l],
    )
    return ds, {"truth": truth.to_dict(), "alpha": alpha, "eps": eps}


def gen_mean_panel(truth: TruthSpec, rng):
    """Panel from the Gaussian model; returns ``(dataset, echo)``."""
    rng = _as_rng(rng)
    X, names = _design(truth, rng)
    alpha = _alpha(truth, rng)
    eps = rng.standard_normal((truth.n, truth.T)) / np.sqrt(truth.h) * _scale(truth, X)
    return _assemble(truth, X, names, alpha, eps)


def gen_quant_panel(truth: TruthSpec, rng):
    """Panel with ``AL(0, 1/h, p)`` errors, so the linear predictor is the p-quantile."""
    if truth.p is None:
        raise DomainError("quantile DGP needs truth.p")
    rng = _as_rng(rng)
    X, names = _design(truth, rng)
    alpha = _alpha(truth, rng)
    eps = sample_al_mixture(al_params(truth.p), truth.h, rng, (truth.n, truth.T)) * _scale(truth, X)
    return _assemble(truth, X, names, alpha, eps)


# ---------------------------------------------------------------------------
# prior predictive draws


def prior_state(priors: PriorSpec, n: int, T: int, rng, qp: QuantileParams | None = None):
    """One draw of every model parameter (and latent) from the prior."""
    l = priors.l
    beta = rng.multivariate_normal(priors.beta0, priors.B0)
    if l:
        Sigma = np.linalg.inv(sample_wishart(priors.nu0, priors.D0, rng))
        alpha = rng.standard_normal((n, l)) @ np.linalg.cholesky(Sigma).T
    else:
        Sigma, alpha = np.zeros((0, 0)), np.zeros((n, 0))
    h = rng.gamma(priors.c0 / 2.0, 2.0 / priors.d0)
    if qp is None:
        return MeanState(beta, alpha, Sigma, h)
    nu = rng.standard_exponential((n, T)) / h
    return QuantState(beta, alpha, Sigma, h, nu, qp)


def simulate_response(state, X, S, rng) -> np.ndarray:
    """``y`` given all parameters (and ``nu`` for a quantile state)."""
    mu = X @ state.beta + np.einsum("ntl,nl->nt", S, state.alpha)
    if isinstance(state, QuantState):
        qp = state.qp
        z = rng.standard_normal(mu.shape)
        return mu + qp.theta * state.nu + qp.tau * np.sqrt(state.nu / state.h) * z
    return mu + rng.standard_normal(mu.shape) / np.sqrt(state.h)


# ---------------------------------------------------------------------------
# grid oracle


class GridError(PanelQRError, RuntimeError):
    kind = "numerical"


@dataclass(frozen=True)
class OracleResult:
    mean: float
    var: float
    grid: tuple[float, float, int]


def _log_marginal(beta, x, y, priors: PriorSpec, model: str, p, h_points: int):
    """log of ``int p(y | beta, h) p(h) dh`` up to a constant, by quadrature over log h."""
    resid = y[None, :] - beta[:, None] * x[None, :]
    N = y.size
    if model == "mean":
        shape = priors.c0 / 2.0 + N / 2.0
        rate = (priors.d0 + np.sum(resid * resid, axis=1)) / 2.0
        const = -0.5 * N * np.log(2.0 * np.pi)
    else:
        shape = priors.c0 / 2.0 + N
        rate = priors.d0 / 2.0 + np.sum(check_loss(resid, p), axis=1)
        const = N * np.log(p * (1.0 - p))
    # integrand in u = log h is exp(shape*u - rate*e^u); place the grid around its peak
    offsets = np.linspace(-(40.0 / shape + 2.0), 4.0, h_points)
    u = np.log(shape / rate)[:, None] + offsets[None, :]
    log_f = shape * u - rate[:, None] * np.exp(u) + const
    du = offsets[1] - offsets[0]
    edge = np.maximum(log_f[:, 0], log_f[:, -1])
    total = logsumexp(log_f, axis=1) + np.log(du)
    if np.any(edge + np.log(du) - total > np.log(1e-10)):
        raise GridError("h quadrature grid truncates the integrand")
    return total


def _moments(grid, log_post):
    w = np.exp(log_post - log_post.max())
    w[0] *= 0.5
    w[-1] *= 0.5
    w /= w.sum()
    mean = float(np.sum(w * grid))
    var = float(np.sum(w * (grid - mean) ** 2))
    return w, mean, var


def grid_posterior_oracle(data: PanelDataset, priors: PriorSpec, model: str = "mean",
                          p: float | None = None, grid: tuple[float, float, int] | None = None,
                          points: int = 8001, h_points: int = 4001) -> OracleResult:
    """Posterior mean and variance of a scalar ``beta`` by dense numerical integration.

    The likelihood is the exact Gaussian or asymmetric-Laplace density (no
    data augmentation) with ``h`` integrated out numerically.  Only
    ``k = 1``, ``l = 0`` and at most 8 observations are supported.  With
    ``grid=None`` the grid is located automatically and covers at least 60
    posterior standard deviations; an explicit grid that leaves more than
    1e-6 of the mass in its outer 1% raises :class:`GridError`.
    """
    if data.k != 1 or data.l != 0 or data.n_obs > 8:
        raise DomainError("oracle supports k = 1, l = 0 and n*T <= 8 only")
    if model not in ("mean", "quantile"):
        raise DomainError(f"unknown model {model!r}")
    if model == "quantile" and (p is None or not 0 < p < 1):
        raise DomainError("quantile oracle needs p in (0, 1)")
    x = data.X[:, :, 0].ravel()
    y = data.y.ravel()
    b0, B0 = float(priors.beta0[0]), float(priors.B0[0, 0])

    def evaluate(lo, hi, num):
        g = np.linspace(lo, hi, num)
        log_post = -0.5 * (g - b0) ** 2 / B0 + _log_marginal(g, x, y, priors, model, p, h_points)
        return g, log_post

    if grid is None:
        center, half = b0, 12.0 * np.sqrt(B0)
        for _ in range(10):
            g, lp = evaluate(center - half, center + half, points)
            _, mean, var = _moments(g, lp)
            sd = np.sqrt(var)
            # never zoom below a few current cells: a posterior narrower than
            # one cell reports a spuriously tiny sd
            new_half = max(60.0 * sd, 8.0 * half / (points - 1))
            if abs(mean - center) < 1e-3 * sd and abs(new_half / half - 1.0) < 1e-3:
                break
            center, half = mean, new_half
        grid = (center - half, center + half, points)
    g, lp = evaluate(*grid)
    w, mean, var = _moments(g, lp)
    edge = max(1, int(0.01 * len(g)))
    if w[:edge].sum() + w[-edge:].sum() > 1e-6:
        raise GridError("posterior mass at the grid boundary exceeds 1e-6; widen the grid")
    return OracleResult(mean, var, (float(grid[0]), float(grid[1]), int(grid[2])))


# ---------------------------------------------------------------------------
# prior-preservation check


def geweke_cycles(priors: PriorSpec, X, S, n_cycles: int, seed: int = 0,
                  p: float | None = None) -> dict[str, np.ndarray]:
    """Marginal-conditional cycles: theta ~ prior, y ~ p(y | theta), one sweep.

    If every conditional is right, the post-sweep draws are again
    distributed as the prior.  Returns ``beta`` (m, k) and ``h`` (m,).
    """
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=float)
    n, T = X.shape[:2]
    qp = None if p is None else al_params(p)
    rng = np.random.default_rng(seed)
    streams = KeyedStreams(seed)
    beta = np.empty((n_cycles, priors.k))
    h = np.empty(n_cycles)
    names = dict(fixed_names=tuple(f"x{j}" for j in range(priors.k)),
                 random_names=tuple(f"s{j}" for j in range(priors.l)))
    for c in range(n_cycles):
        state = prior_state(priors, n, T, rng, qp)
        y = simulate_response(state, X, S, rng)
        data = PanelDataset(ids=tuple(range(1, n + 1)), y=y, X=X, S=S, **names)
        if qp is None:
            state = mean_sweep(state, data, priors, streams, c)
        else:
            state = quant_sweep(state, data, priors, streams, c)
        beta[c] = state.beta
        h[c] = state.h
    return {"beta": beta, "h": h}
