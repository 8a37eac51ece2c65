"""Posterior summaries and conditional model-fit statistics."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .gibbs import ChainResult, _linear_predictor
from .panel import PanelDataset
from .stats import al_log_density


@dataclass(frozen=True)
class SummaryRow:
    name: str
    mean: float
    std: float


@dataclass(frozen=True)
class SummaryTable:
    """Posterior MEAN / STD per parameter.

    Rows are the fixed effects, then ``h``, then ``sqrt_sigma_jj`` for each
    random effect and ``rho_ij`` for each pair, the last two computed per
    draw from the Sigma draws before averaging.
    """

    rows: tuple[SummaryRow, ...]

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, name: str) -> SummaryRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("parameter,mean,std\n")
        for r in self.rows:
            buf.write(f"{r.name},{r.mean!r},{r.std!r}\n")
        return buf.getvalue()


def _std(x: np.ndarray) -> np.ndarray:
    if x.shape[0] < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1)


def derived_sigma_draws(Sigma: np.ndarray) -> dict[str, np.ndarray]:
    """Per-draw ``sqrt(sigma_jj)`` and correlations ``rho_ij`` (i < j, 1-based names)."""
    l = Sigma.shape[-1]
    sd = np.sqrt(np.diagonal(Sigma, axis1=-2, axis2=-1))
    out = {f"sqrt_sigma_{j + 1}{j + 1}": sd[..., j] for j in range(l)}
    for i in range(l):
        for j in range(i + 1, l):
            out[f"rho_{i + 1}{j + 1}"] = Sigma[..., i, j] / (sd[..., i] * sd[..., j])
    return out


def chain_columns(chain: ChainResult) -> dict[str, np.ndarray]:
    """Scalar trace of every reported parameter, keyed by row name."""
    cols = {name: chain.draws["beta"][:, j] for j, name in enumerate(chain.fixed_names)}
    cols["h"] = chain.draws["h"]
    cols.update(derived_sigma_draws(chain.draws["Sigma"]))
    return cols


def summarize(chain: ChainResult) -> SummaryTable:
    if chain.n_draws == 0:
        raise ValueError("cannot summarize an empty chain")
    rows = []
    for name, x in chain_columns(chain).items():
        rows.append(SummaryRow(name, float(np.mean(x)), float(_std(x[:, None])[0])))
    return SummaryTable(tuple(rows))


def cond_loglik_mean(data: PanelDataset, beta, alpha, h: float) -> float:
    """Gaussian log-likelihood of ``y`` given the individual effects."""
    resid = data.y - _linear_predictor(data, np.asarray(beta), np.asarray(alpha).reshape(data.n, data.l))
    return float(data.n_obs * 0.5 * (np.log(h) - np.log(2.0 * np.pi)) - 0.5 * h * np.sum(resid * resid))


def cond_loglik_quant(data: PanelDataset, beta, alpha, h: float, p: float) -> float:
    """Asymmetric-Laplace log-likelihood of ``y`` given the individual effects."""
    mu = _linear_predictor(data, np.asarray(beta), np.asarray(alpha).reshape(data.n, data.l))
    return float(np.sum(al_log_density(data.y, mu, h, p)))


@dataclass(frozen=True)
class FitReport:
    log_l: float
    caic: float
    cbic: float
    df: int
    evaluated_at: str = "posterior mean"

    def to_csv(self) -> str:
        return (
            "statistic,value\n"
            f"log_l,{self.log_l!r}\n"
            f"caic,{self.caic!r}\n"
            f"cbic,{self.cbic!r}\n"
            f"df,{self.df}\n"
            f"evaluated_at,{self.evaluated_at}\n"
        )


def effective_df(k: int, n: int, l: int, with_re: bool) -> int:
    """Fixed effects + scale, plus realized random effects and distinct Sigma entries."""
    return k + 1 + ((n * l + l * (l + 1) // 2) if with_re and l else 0)


def information_criteria(log_l: float, *, k: int, n: int, T: int, l: int, with_re: bool) -> FitReport:
    if min(k, n, T) < 1 or l < 0:
        raise ValueError("model shape fields must be positive")
    df = effective_df(k, n, l, with_re)
    return FitReport(
        log_l=float(log_l),
        caic=float(-2.0 * log_l + 2.0 * df),
        cbic=float(-2.0 * log_l + np.log(n * T) * df),
        df=df,
    )


def fit_report(chain: ChainResult, data: PanelDataset) -> FitReport:
    """Conditional log-likelihood, cAIC and cBIC at the posterior means of (beta, alpha, h)."""
    beta = chain.posterior_mean("beta")
    alpha = chain.posterior_mean("alpha")
    h = float(chain.posterior_mean("h"))
    l = alpha.shape[1]
    view = data if l == data.l else PanelDataset(
        data.ids, data.y, data.X, data.S[:, :, :l], data.fixed_names, data.random_names[:l], data.periods)
    if chain.model == "mean":
        log_l = cond_loglik_mean(view, beta, alpha, h)
    else:
        log_l = cond_loglik_quant(view, beta, alpha, h, chain.p)
    return information_criteria(log_l, k=data.k, n=data.n, T=data.T, l=l, with_re=l > 0)
