"""Random draws and log densities for the conjugate families in the model.

Samplers take an explicit ``numpy.random.Generator`` and return batches
with the sample index first.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .mathkernels import cholesky, log_multigamma


def dirichlet_draws(conc, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, d) Dirichlet draws via normalized Gamma variates."""
    conc = np.asarray(conc, dtype=float)
    if np.any(conc <= 0):
        raise DomainError("Dirichlet concentrations must be positive")
    g = rng.standard_gamma(conc, size=(size, conc.shape[0]))
    # Guard against all-zero rows when every concentration is tiny.
    tot = g.sum(axis=1, keepdims=True)
    bad = ~(tot[:, 0] > 0)
    if np.any(bad):
        g[bad] = np.eye(conc.shape[0])[np.argmax(conc)]
        tot = g.sum(axis=1, keepdims=True)
    return g / tot


def dirichlet_logpdf(x, conc) -> np.ndarray:
    """Log density of Dirichlet(conc) at rows of ``x`` (last axis is the simplex)."""
    x = np.asarray(x, dtype=float)
    conc = np.asarray(conc, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(conc == 1.0, 0.0, (conc - 1.0) * np.log(x))
    return logs.sum(axis=-1) - (np.sum(gammaln(conc)) - gammaln(np.sum(conc)))


def wishart_draws(nu: float, scale: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, q, q) draws from Wishart(nu, scale) by the Bartlett decomposition."""
    scale = np.atleast_2d(scale)
    q = scale.shape[0]
    if not nu > q - 1:
        raise DomainError(f"Wishart needs nu > q - 1 = {q - 1}")
    chol = cholesky(scale)
    a = np.zeros((size, q, q))
    dfs = nu - np.arange(q)
    a[:, np.arange(q), np.arange(q)] = np.sqrt(rng.chisquare(dfs, size=(size, q)))
    rows, cols = np.tril_indices(q, -1)
    a[:, rows, cols] = rng.standard_normal((size, rows.size))
    la = chol @ a
    return la @ np.swapaxes(la, 1, 2)


def invwishart_draws(nu: float, scale: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, q, q) draws from inverse-Wishart(nu, scale): inverse of Wishart(nu, scale^-1)."""
    scale = np.atleast_2d(scale)
    inv = np.linalg.inv(scale)
    w = wishart_draws(nu, 0.5 * (inv + inv.T), size, rng)
    out = np.linalg.inv(w)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def invwishart_logpdf(sigma, nu: float, scale: np.ndarray) -> np.ndarray:
    """Log density of inverse-Wishart(nu, scale) for a batch (S, q, q) or single matrix."""
    sigma = np.asarray(sigma, dtype=float)
    single = sigma.ndim == 2
    s = sigma[None] if single else sigma
    q = s.shape[-1]
    chol = np.linalg.cholesky(s)
    logdet_s = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    s_inv = np.linalg.inv(s)
    tr = np.einsum("ij,sji->s", scale, s_inv)
    logdet_scale = 2.0 * np.sum(np.log(np.diag(cholesky(scale))))
    out = (0.5 * nu * logdet_scale - 0.5 * nu * q * np.log(2.0) - log_multigamma(q, nu / 2.0)
           - 0.5 * (nu + q + 1.0) * logdet_s - 0.5 * tr)
    return float(out[0]) if single else out


def mvn_cov_batch_logpdf(x, mean, cov) -> np.ndarray:
    """Gaussian log density with a per-sample covariance: x, mean (S, q); cov (S, q, q)."""
    x = np.asarray(x, dtype=float)
    q = x.shape[-1]
    chol = np.linalg.cholesky(cov)
    dev = (x - mean)[..., None]
    y = np.linalg.solve(chol, dev)[..., 0]
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    return -0.5 * (q * np.log(2 * np.pi) + logdet + np.sum(y * y, axis=-1))


def mvt_draws(dof: float, loc, scale, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, q) multivariate Student-t draws."""
    loc = np.atleast_1d(np.asarray(loc, dtype=float))
    chol = cholesky(np.atleast_2d(scale))
    z = rng.standard_normal((size, loc.shape[0])) @ chol.T
    w = rng.chisquare(dof, size=size)
    return loc + z / np.sqrt(w / dof)[:, None]
