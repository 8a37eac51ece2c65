"""Distributions used by the samplers.

Conventions
-----------
* Gamma is shape-rate: ``Ga(shape, rate)`` has mean ``shape / rate``.
* Wishart ``W(nu, D)`` has density proportional to
  ``|W|^((nu-l-1)/2) exp(-tr(D^-1 W)/2)`` and mean ``nu * D``.
* GIG with index 1/2 has density proportional to
  ``x^(-1/2) exp(-(a/x + b*x)/2)`` on ``x > 0``.
* The asymmetric Laplace ``AL(mu, 1/h, p)`` has log-density
  ``log(p(1-p)h) - h * rho_p(y - mu)``.

Samplers accept anything exposing the subset of the
:class:`numpy.random.Generator` interface they use, so the same code runs
on a plain generator or on a :class:`panelqr.rng.CellStream`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, SingularMatrixError


def _check_p(p):
    p_arr = np.asarray(p, dtype=float)
    if not np.all((p_arr > 0) & (p_arr < 1)):
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")


def check_loss(u, p):
    """Quantile check loss ``u * (p - 1{u < 0})``."""
    _check_p(p)
    u = np.asarray(u, dtype=float)
    out = u * (p - (u < 0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuantileParams:
    """Mixture constants of the asymmetric Laplace at quantile ``p``."""

    p: float
    theta: float
    tau: float

    @property
    def tau2(self) -> float:
        return self.tau * self.tau


def al_params(p: float) -> QuantileParams:
    _check_p(p)
    p = float(p)
    q = p * (1.0 - p)
    return QuantileParams(p=p, theta=(1.0 - 2.0 * p) / q, tau=np.sqrt(2.0 / q))


def al_log_density(y, mu, h, p):
    """Log-density of ``AL(mu, 1/h, p)`` at ``y``."""
    _check_p(p)
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr <= 0):
        raise DomainError(f"AL inverse scale h must be positive, got {h!r}")
    r = np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)
    out = np.log(p * (1.0 - p) * h_arr) - h_arr * r * (p - (r < 0))
    return float(out) if out.ndim == 0 else out


def al_moments(p: float, h: float = 1.0) -> tuple[float, float]:
    """Mean and variance of ``AL(0, 1/h, p)``."""
    qp = al_params(p)
    return qp.theta / h, (qp.theta**2 + qp.tau2) / h**2


def sample_al_mixture(params: QuantileParams, h, rng, size=None):
    """Draw ``AL(0, 1/h, p)`` errors through the normal-exponential mixture.

    Returns ``(theta*w + tau*sqrt(w)*u) / h`` with ``w ~ Exp(1)`` and
    ``u ~ N(0, 1)`` independent.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr <= 0):
        raise DomainError("h must be positive")
    if size is None:
        size = h_arr.shape
    w = rng.standard_exponential(size)
    u = rng.standard_normal(size)
    return (params.theta * w + params.tau * np.sqrt(w) * u) / h_arr


def gig_half_mean(a, b):
    """``E[X]`` for ``X ~ GIG(1/2, a, b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sqrt(a / b) + 1.0 / b


def gig_half_mode(a, b):
    return (-0.5 + np.sqrt(0.25 + a * b)) / b


def sample_gig_half(a, b, rng, size=None):
    """Draw from ``GIG(1/2, a, b)``.

    If ``X ~ GIG(1/2, a, b)`` then ``1/X`` is inverse Gaussian with mean
    ``sqrt(b/a)`` and shape ``b``.  The inverse Gaussian is generated exactly
    by the Michael-Schucany-Haas transformation from one uniform pair per
    draw (the first mapped to a normal), written in a cancellation-free
    form.  At ``a = 0`` the transformation reduces to ``z**2 / b``, i.e.
    ``Gamma(1/2, rate=b/2)``, which is the analytic limit, so no separate
    branch is needed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # with a, b >= 0 a finite sum means every entry is finite (nan fails min)
    if a.size and not (a.min() >= 0 and np.isfinite(a.sum())) or \
            not (b.min() > 0 and np.isfinite(b.sum())):
        raise DomainError("GIG(1/2, a, b) needs finite a >= 0 and b > 0")
    if size is None:
        size = np.broadcast_shapes(a.shape, b.shape)
    # one request for the (normal, uniform) pair of every draw
    size = tuple(np.atleast_1d(size)) if not isinstance(size, tuple) else size
    pair = rng.random(size + (2,))
    z = ndtri(pair[..., 0])
    u = pair[..., 1]
    v = z * z
    # s = 2b / (mu v) = 2 sqrt(ab) / v, which is 0 (not nan) at a = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = 2.0 * np.sqrt(a * b) / v
        x = (2.0 * b / v) / (s + 1.0 + np.sqrt(1.0 + 2.0 * s))
    # the acceptance test and the other root are written with 1/mu, which
    # stays finite at a = 0
    inv_mu = np.sqrt(a / b)
    accept = u * x * inv_mu <= 1.0 - u
    out = np.where(accept, 1.0 / x, x * (inv_mu * inv_mu))
    return out if out.ndim else float(out)


def cholesky(mat, what: str = "matrix"):
    """Lower Cholesky factor of one matrix or a stack of matrices.

    Raises :class:`SingularMatrixError` carrying the index of the first
    failing block.
    """
    mat = np.asarray(mat, dtype=float)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        if mat.ndim == 2:
            raise SingularMatrixError(f"{what} is not positive definite") from None
        flat = mat.reshape(-1, *mat.shape[-2:])
        for i, block in enumerate(flat):
            try:
                np.linalg.cholesky(block)
            except np.linalg.LinAlgError:
                raise SingularMatrixError(
                    f"{what} for block {i} is not positive definite", index=i
                ) from None
        raise


def _check_spd(mat, what):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError(f"{what} must be square")
    if not np.allclose(mat, mat.T, rtol=1e-10, atol=1e-12):
        raise DomainError(f"{what} must be symmetric")
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise DomainError(f"{what} must be positive definite") from None


def is_spd(mat) -> bool:
    try:
        _check_spd(mat, "matrix")
    except DomainError:
        return False
    return True


def sample_wishart(nu: float, scale, rng):
    """Bartlett-decomposition draw from ``W(nu, scale)``."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    dim = scale.shape[0]
    if not nu > dim - 1:
        raise DomainError(f"Wishart degrees of freedom {nu} must exceed dim - 1 = {dim - 1}")
    chol = _check_spd(scale, "Wishart scale")
    bart = np.zeros((dim, dim))
    bart[np.diag_indices(dim)] = np.sqrt(rng.chisquare(nu - np.arange(dim)))
    low = np.tril_indices(dim, -1)
    bart[low] = rng.standard_normal(len(low[0]))
    la = chol @ bart
    w = la @ la.T
    return 0.5 * (w + w.T)


def sample_mvn(mean, cov, rng):
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.shape[-1], mean.shape[-1]):
        raise DomainError(f"covariance shape {cov.shape} does not match mean length {mean.shape[-1]}")
    chol = cholesky(cov, "covariance")
    z = rng.standard_normal(mean.shape)
    return mean + z @ chol.T


def sample_mvn_precision(mean, precision, rng, chol=None):
    """Draw ``N(mean, precision^-1)``; batched over leading dimensions.

    ``mean`` has shape ``(..., d)`` and ``precision`` ``(..., d, d)``.  With
    ``precision = L L'`` the draw is ``mean + L'^-1 z``.  A precomputed
    factor may be passed as ``chol``.
    """
    mean = np.asarray(mean, dtype=float)
    if chol is None:
        precision = np.asarray(precision, dtype=float)
        if precision.shape[-2:] != (mean.shape[-1], mean.shape[-1]):
            raise DomainError("precision and mean dimensions disagree")
        chol = cholesky(precision, "precision")
    z = rng.standard_normal(mean.shape)
    return mean + np.linalg.solve(np.swapaxes(chol, -1, -2), z[..., None])[..., 0]


def canonical_normal(precision, linear, rng):
    """Draw from the normal with canonical parameters ``(precision, linear)``.

    The mean is ``precision^-1 linear``; both the mean and the draw are
    obtained from a single Cholesky factorization.  Returns
    ``(draw, mean)``.
    """
    precision = np.asarray(precision, dtype=float)
    linear = np.asarray(linear, dtype=float)
    chol = cholesky(precision, "posterior precision")
    # the blocks are small, so one explicit inverse of L beats repeated solves
    upper = np.swapaxes(np.linalg.inv(chol), -1, -2)  # L'^-1
    mean = (upper @ (np.swapaxes(upper, -1, -2) @ linear[..., None]))[..., 0]
    z = rng.standard_normal(mean.shape)
    return mean + (upper @ z[..., None])[..., 0], mean


def sample_gamma(shape, rate, rng, size=None):
    """Shape-rate gamma draw."""
    if np.ndim(shape) == 0 and np.ndim(rate) == 0:
        # scalar fast path (the h steps)
        if not (shape > 0 and rate > 0):
            raise DomainError(f"gamma shape and rate must be positive, got ({shape}, {rate})")
        return rng.gamma(float(shape), 1.0 / float(rate), size)
    shape_a = np.asarray(shape, dtype=float)
    rate_a = np.asarray(rate, dtype=float)
    if not (np.all(shape_a > 0) and np.all(rate_a > 0)):
        raise DomainError(f"gamma shape and rate must be positive, got ({shape}, {rate})")
    return rng.gamma(shape_a, 1.0 / rate_a, size)
