"""Blocked Gibbs samplers for the longitudinal mean and quantile models.

Both samplers draw ``beta`` marginally of the individual effects, then each
``alpha_i`` given ``beta``, followed by ``Sigma^-1`` and ``h`` (and, for the
quantile model, the mixing variables ``nu`` before ``Sigma^-1``).

The two share one Gaussian block.  Writing ``W_i`` for the diagonal error
precision of individual ``i`` (``h I`` in the mean model and
``h / (tau^2 nu_i)`` in the quantile model) and ``r_i`` for the working
response (``y_i`` or ``y_i - theta nu_i``), the marginal covariance is
``Omega_i = S_i Sigma S_i' + W_i^-1``.  Its inverse is applied either by a
Cholesky factorization of ``Omega_i`` (``method="direct"``) or by the
Woodbury identity

    Omega_i^-1 = W_i - W_i S_i (Sigma^-1 + S_i' W_i S_i)^-1 S_i' W_i,

which only factorizes ``l x l`` matrices (``method="woodbury"``).

Fitting without random effects is the same code run on a design with
``l = 0``: every ``alpha`` and ``Sigma`` term then vanishes.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as keyed
from .errors import DomainError, SingularMatrixError
from .panel import PanelDataset, PriorSpec
from .stats import (QuantileParams, al_params, canonical_normal, cholesky,
                    sample_gamma, sample_gig_half, sample_wishart)


@dataclass
class MeanState:
    beta: np.ndarray
    alpha: np.ndarray
    Sigma: np.ndarray
    h: float


@dataclass
class QuantState(MeanState):
    nu: np.ndarray
    qp: QuantileParams


@dataclass(frozen=True)
class RunConfig:
    """Chain settings.  ``iterations`` counts all sweeps, burn-in included."""

    iterations: int = 12000
    burn_in: int = 3000
    seed: int = 0
    thin: int = 1
    include_random_effects: bool = True
    thread_count: int = 1

    def __post_init__(self):
        if self.iterations < 0 or self.burn_in < 0 or self.thin < 1 or self.thread_count < 1:
            raise DomainError(f"invalid run configuration {self}")
        if self.iterations and self.burn_in >= self.iterations:
            raise DomainError("burn_in must be smaller than iterations")
        if self.iterations == 0 and self.burn_in:
            raise DomainError("burn_in must be zero for an empty run")

    @property
    def n_draws(self) -> int:
        return max(0, -(-(self.iterations - self.burn_in) // self.thin))

    def to_dict(self, runtime: bool = False) -> dict:
        """Settings that determine the draws; ``thread_count`` only on request."""
        out = {
            "iterations": int(self.iterations),
            "burn_in": int(self.burn_in),
            "seed": int(self.seed),
            "thin": int(self.thin),
            "include_random_effects": bool(self.include_random_effects),
        }
        if runtime:
            out["thread_count"] = int(self.thread_count)
        return out


@dataclass(frozen=True, eq=False)
class ChainResult:
    """Stored post-burn-in draws plus everything needed to reproduce them.

    ``draws`` maps ``beta`` (m, k), ``alpha`` (m, n, l), ``Sigma`` (m, l, l),
    ``h`` (m,) and optionally ``nu`` (m, n, T).  Wall-clock timings are kept
    in memory only so that chain files stay reproducible bit for bit.
    """

    model: str
    p: float | None
    draws: dict
    config: RunConfig
    priors: PriorSpec
    fixed_names: tuple
    random_names: tuple
    ids: tuple
    acceptance: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    sweep_seconds: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return int(self.draws["h"].shape[0])

    @property
    def with_random_effects(self) -> bool:
        return len(self.random_names) > 0

    def posterior_mean(self, name: str) -> np.ndarray:
        if self.n_draws == 0:
            raise ValueError("empty chain")
        return self.draws[name].mean(axis=0)


# ---------------------------------------------------------------------------
# shared algebra


def _linear_predictor(data: PanelDataset, beta, alpha) -> np.ndarray:
    out = data.X @ beta
    if data.l:
        out = out + np.einsum("ntl,nl->nt", data.S, alpha)
    return out


def _sigma_inv(Sigma) -> np.ndarray:
    if Sigma.shape[0] == 0:
        return Sigma
    chol = cholesky(Sigma, "Sigma")
    ci = np.linalg.inv(chol)
    return ci.T @ ci


def _resolve_method(method: str, data: PanelDataset) -> str:
    if method == "auto":
        return "woodbury" if data.l < data.T else "direct"
    if method not in ("woodbury", "direct"):
        raise ValueError(f"unknown method {method!r}")
    return method


def _beta_canonical(data: PanelDataset, W, r, Sigma, priors: PriorSpec, method: str):
    """Precision and linear term of ``beta | y, Sigma, W`` with ``alpha`` integrated out."""
    X, S = data.X, data.S
    if data.l == 0:
        XW = X * W[..., None]
        prec = np.einsum("ntk,ntj->kj", XW, X)
        lin = np.einsum("ntk,nt->k", XW, r)
    elif _resolve_method(method, data) == "woodbury":
        XW = X * W[..., None]
        SW = S * W[..., None]
        prec = np.einsum("ntk,ntj->kj", XW, X)
        lin = np.einsum("ntk,nt->k", XW, r)
        A = _sigma_inv(Sigma) + np.swapaxes(S, 1, 2) @ SW
        XtWS = np.swapaxes(XW, 1, 2) @ S
        rhs = np.concatenate([np.swapaxes(XtWS, 1, 2), np.einsum("ntl,nt->nl", SW, r)[..., None]], axis=2)
        chol = cholesky(A, "Sigma^-1 + S_i' W_i S_i")
        sol = np.linalg.solve(np.swapaxes(chol, 1, 2), np.linalg.solve(chol, rhs))
        corr = XtWS @ sol
        prec = prec - corr[..., :-1].sum(axis=0)
        lin = lin - corr[..., -1].sum(axis=0)
    else:
        Omega = S @ Sigma @ np.swapaxes(S, 1, 2)
        idx = np.arange(data.T)
        Omega[:, idx, idx] += 1.0 / W
        chol = cholesky(Omega, "Omega_i")
        half = np.linalg.solve(chol, np.concatenate([X, r[..., None]], axis=2))
        gram = np.swapaxes(half, 1, 2) @ half
        prec = gram[:, :-1, :-1].sum(axis=0)
        lin = gram[:, :-1, -1].sum(axis=0)
    prec = prec + priors.B0_inv
    lin = lin + priors.B0_inv @ priors.beta0
    return 0.5 * (prec + prec.T), lin


def _alpha_canonical(data: PanelDataset, W, r, Sigma):
    """Per-individual precision ``(n, l, l)`` and linear term ``(n, l)`` of ``alpha_i``."""
    SW = data.S * W[..., None]
    prec = _sigma_inv(Sigma) + np.swapaxes(data.S, 1, 2) @ SW
    lin = np.einsum("ntl,nt->nl", SW, r)
    return prec, lin


def _solve_mean(prec, lin):
    chol = cholesky(prec)
    return np.linalg.solve(np.swapaxes(chol, -1, -2), np.linalg.solve(chol, lin[..., None]))[..., 0]


def _with_index(exc: SingularMatrixError, what: str) -> SingularMatrixError:
    where = f" (individual {exc.index})" if exc.index is not None else ""
    return SingularMatrixError(f"{what}{where}: {exc}", index=exc.index, sweep=exc.sweep)


def _draw_beta(data, W, r, Sigma, priors, rng, method):
    try:
        prec, lin = _beta_canonical(data, W, r, Sigma, priors, method)
    except SingularMatrixError as exc:
        raise _with_index(exc, "beta step") from exc
    draw, _ = canonical_normal(prec, lin, rng)
    return draw


def _draw_alpha(data, W, r, Sigma, rng):
    if data.l == 0:
        return np.zeros((data.n, 0))
    prec, lin = _alpha_canonical(data, W, r, Sigma)
    try:
        draw, _ = canonical_normal(prec, lin, rng)
    except SingularMatrixError as exc:
        raise _with_index(exc, "alpha step") from exc
    return draw


# ---------------------------------------------------------------------------
# conditionals shared by both samplers


def sigma_posterior(alpha, priors: PriorSpec):
    """``(nu1, D1)`` of ``Sigma^-1 | alpha ~ W(nu1, D1)``."""
    alpha = np.asarray(alpha, dtype=float)
    nu1 = priors.nu0 + alpha.shape[0]
    D1 = np.linalg.inv(priors.D0_inv + alpha.T @ alpha)
    return nu1, 0.5 * (D1 + D1.T)


def step_sigma_inv(alpha, priors: PriorSpec, rng) -> np.ndarray:
    """Draw ``Sigma^-1`` from its Wishart full conditional."""
    nu1, D1 = sigma_posterior(alpha, priors)
    return sample_wishart(nu1, D1, rng)


# ---------------------------------------------------------------------------
# mean model


def mean_beta_posterior(state: MeanState, data, priors, method="auto"):
    """Mean and precision of ``beta | y, h, Sigma`` (alpha integrated out)."""
    W = np.full(data.y.shape, state.h)
    prec, lin = _beta_canonical(data, W, data.y, state.Sigma, priors, method)
    return _solve_mean(prec, lin), prec


def mean_step_beta(state: MeanState, data, priors, rng, method="auto"):
    W = np.full(data.y.shape, state.h)
    return _draw_beta(data, W, data.y, state.Sigma, priors, rng, method)


def mean_alpha_posterior(state: MeanState, data):
    W = np.full(data.y.shape, state.h)
    prec, lin = _alpha_canonical(data, W, data.y - data.X @ state.beta, state.Sigma)
    return _solve_mean(prec, lin), prec


def mean_step_alpha(state: MeanState, data, rng):
    W = np.full(data.y.shape, state.h)
    return _draw_alpha(data, W, data.y - data.X @ state.beta, state.Sigma, rng)


def mean_h_posterior(state: MeanState, data, priors):
    """``(c1, d1)`` with ``h | y, beta, alpha ~ Ga(c1/2, d1/2)``."""
    resid = data.y - _linear_predictor(data, state.beta, state.alpha)
    return priors.c0 + data.n_obs, priors.d0 + float(np.sum(resid * resid))


def mean_step_h(state: MeanState, data, priors, rng) -> float:
    c1, d1 = mean_h_posterior(state, data, priors)
    return float(sample_gamma(c1 / 2.0, d1 / 2.0, rng))


# ---------------------------------------------------------------------------
# quantile model


def quant_weights(state: QuantState) -> np.ndarray:
    """Diagonal of ``D^-2``: ``h / (tau^2 nu_it)``."""
    return state.h / (state.qp.tau2 * state.nu)


def quant_beta_posterior(state: QuantState, data, priors, method="auto"):
    prec, lin = _beta_canonical(data, quant_weights(state), data.y - state.qp.theta * state.nu,
                                state.Sigma, priors, method)
    return _solve_mean(prec, lin), prec


def quant_step_beta(state: QuantState, data, priors, rng, method="auto"):
    return _draw_beta(data, quant_weights(state), data.y - state.qp.theta * state.nu,
                      state.Sigma, priors, rng, method)


def quant_alpha_posterior(state: QuantState, data):
    r = data.y - data.X @ state.beta - state.qp.theta * state.nu
    prec, lin = _alpha_canonical(data, quant_weights(state), r, state.Sigma)
    return _solve_mean(prec, lin), prec


def quant_step_alpha(state: QuantState, data, rng):
    r = data.y - data.X @ state.beta - state.qp.theta * state.nu
    return _draw_alpha(data, quant_weights(state), r, state.Sigma, rng)


def quant_nu_params(state: QuantState, data):
    """GIG(1/2, a_it, b) parameters of ``nu_it | y, beta, alpha, h``."""
    resid = data.y - _linear_predictor(data, state.beta, state.alpha)
    a = state.h * (resid / state.qp.tau) ** 2
    b = state.h * (state.qp.theta**2 / state.qp.tau2 + 2.0)
    return a, b


def quant_step_nu(state: QuantState, data, rng) -> np.ndarray:
    a, b = quant_nu_params(state, data)
    return sample_gig_half(a, b, rng, size=a.shape)


def quant_h_posterior(state: QuantState, data, priors):
    """``(c1, d1)`` with ``h | y, beta, alpha, nu ~ Ga(c1/2, d1/2)``."""
    qp = state.qp
    resid = data.y - _linear_predictor(data, state.beta, state.alpha) - qp.theta * state.nu
    c1 = priors.c0 + 3 * data.n_obs
    d1 = priors.d0 + 2.0 * float(state.nu.sum()) + float(np.sum(resid * resid / (qp.tau2 * state.nu)))
    return c1, d1


def quant_step_h(state: QuantState, data, priors, rng) -> float:
    c1, d1 = quant_h_posterior(state, data, priors)
    return float(sample_gamma(c1 / 2.0, d1 / 2.0, rng))


# ---------------------------------------------------------------------------
# sweeps and drivers


def cell_keys(data: PanelDataset) -> np.ndarray:
    """uint64 key of every (individual, period) cell."""
    return keyed.combine(data.id_keys[:, None], np.arange(1, data.T + 1, dtype=np.uint64)[None, :])


def _update_sigma(state, priors, streams, s):
    if state.alpha.shape[1] == 0:
        return state.Sigma
    Sigma_inv = step_sigma_inv(state.alpha, priors, streams.generator(s, keyed.SIGMA))
    return np.linalg.inv(Sigma_inv)


def mean_sweep(state: MeanState, data, priors, streams: keyed.KeyedStreams, s: int,
               method="auto") -> MeanState:
    state = copy.copy(state)
    state.beta = mean_step_beta(state, data, priors, streams.generator(s, keyed.BETA), method)
    state.alpha = mean_step_alpha(state, data, streams.cells(data.id_keys, s, keyed.ALPHA))
    state.Sigma = _update_sigma(state, priors, streams, s)
    state.h = mean_step_h(state, data, priors, streams.generator(s, keyed.H))
    assert state.h > 0
    return state


def quant_sweep(state: QuantState, data, priors, streams: keyed.KeyedStreams, s: int,
                method="auto", cells=None) -> QuantState:
    cells = cell_keys(data) if cells is None else cells
    state = copy.copy(state)
    state.beta = quant_step_beta(state, data, priors, streams.generator(s, keyed.BETA), method)
    state.alpha = quant_step_alpha(state, data, streams.cells(data.id_keys, s, keyed.ALPHA))
    state.nu = quant_step_nu(state, data, streams.cells(cells, s, keyed.NU))
    state.Sigma = _update_sigma(state, priors, streams, s)
    state.h = quant_step_h(state, data, priors, streams.generator(s, keyed.H))
    assert state.h > 0 and np.all(state.nu > 0)
    return state


def initial_state(data: PanelDataset, streams: keyed.KeyedStreams, qp: QuantileParams | None = None):
    """beta = 0, alpha_i ~ N(0, I), Sigma = I, h = 1, nu = 1."""
    l = data.l
    alpha = streams.cells(data.id_keys, -1, keyed.INIT).standard_normal((data.n, l)) if l \
        else np.zeros((data.n, 0))
    base = dict(beta=np.zeros(data.k), alpha=alpha, Sigma=np.eye(l), h=1.0)
    if qp is None:
        return MeanState(**base)
    return QuantState(**base, nu=np.ones(data.y.shape), qp=qp)


def _prepare(data: PanelDataset, priors: PriorSpec, config: RunConfig):
    if priors.k != data.k:
        raise DomainError(f"prior has k={priors.k} but the design has k={data.k}")
    if not config.include_random_effects:
        data = data.without_random_effects()
    if priors.l != data.l:
        if priors.l < data.l:
            raise DomainError(f"prior has l={priors.l} but the design has l={data.l}")
        priors = priors.restrict(data.l)
    return data, priors


def _run(kind, data, priors, config, streams, qp, store_nu, method):
    data, priors = _prepare(data, priors, config)
    streams = streams or keyed.KeyedStreams(config.seed)
    m = config.n_draws
    n, T, k, l = data.n, data.T, data.k, data.l
    draws = {
        "beta": np.empty((m, k)),
        "alpha": np.empty((m, n, l)),
        "Sigma": np.empty((m, l, l)),
        "h": np.empty(m),
    }
    if store_nu and qp is not None:
        draws["nu"] = np.empty((m, n, T))
    timings = np.empty(config.iterations)
    state = initial_state(data, streams, qp)
    cells = cell_keys(data) if qp is not None else None
    j = 0
    for s in range(config.iterations):
        t0 = time.perf_counter()
        try:
            if qp is None:
                state = mean_sweep(state, data, priors, streams, s, method)
            else:
                state = quant_sweep(state, data, priors, streams, s, method, cells)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"sweep {s}: {exc}", index=exc.index, sweep=s) from exc
        timings[s] = time.perf_counter() - t0
        if s >= config.burn_in and (s - config.burn_in) % config.thin == 0:
            draws["beta"][j] = state.beta
            draws["alpha"][j] = state.alpha
            draws["Sigma"][j] = state.Sigma
            draws["h"][j] = state.h
            if "nu" in draws:
                draws["nu"][j] = state.nu
            j += 1
    for arr in draws.values():
        arr.setflags(write=False)
    steps = ["beta", "alpha", "Sigma", "h"] + (["nu"] if qp is not None else [])
    return ChainResult(
        model=kind,
        p=None if qp is None else qp.p,
        draws=draws,
        config=config,
        priors=priors,
        fixed_names=data.fixed_names,
        random_names=data.random_names,
        ids=data.ids,
        acceptance={name: 1.0 for name in steps},
        sweep_seconds=timings,
    )


def run_mean_gibbs(data: PanelDataset, priors: PriorSpec, config: RunConfig,
                   streams: keyed.KeyedStreams | None = None, method="auto") -> ChainResult:
    """Run the mean-model sampler; sweep order beta, alpha, Sigma^-1, h."""
    return _run("mean", data, priors, config, streams, None, False, method)


def run_quantile_gibbs(data: PanelDataset, priors: PriorSpec, p: float, config: RunConfig,
                       streams: keyed.KeyedStreams | None = None, store_nu=False,
                       method="auto") -> ChainResult:
    """Run the quantile-model sampler; sweep order beta, alpha, nu, Sigma^-1, h.

    With ``config.include_random_effects`` false the alpha and Sigma blocks
    are dropped and ``alpha = 0`` in every remaining conditional.
    """
    return _run("quantile", data, priors, config, streams, al_params(p), store_nu, method)
