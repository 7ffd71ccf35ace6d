"""Special functions and small SPD linear-algebra helpers.

Everything here is a pure function of its inputs. Reductions over the
component axis go through :func:`component_sum` so that results do not
depend on the order in which mixture components are stored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import DimensionMismatchError, DomainError, NotPositiveDefiniteError

# Bernoulli-number coefficients B_2k / (2k) of the digamma asymptotic series.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_DIGAMMA_SHIFT = 10.0


def digamma(x):
    """Digamma function for positive arguments (scalar or array).

    Shifts the argument above 10 with psi(x) = psi(x + 1) - 1/x and then
    applies the asymptotic expansion.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("digamma requires strictly positive arguments")
    z = arr.copy()
    acc = np.zeros_like(z)
    small = z < _DIGAMMA_SHIFT
    while np.any(small):
        acc[small] -= 1.0 / z[small]
        z[small] += 1.0
        small = z < _DIGAMMA_SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for coef in reversed(_DIGAMMA_SERIES):
        series = (series + coef) * inv2
    out = acc + np.log(z) - 0.5 / z - series
    if np.ndim(x) == 0:
        return float(out)
    return out


def log_multigamma(q: int, a):
    """Log of the multivariate gamma function Gamma_q(a)."""
    if q < 1:
        raise DomainError("dimension q must be a positive integer")
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= (q - 1) / 2.0):
        raise DomainError(f"log_multigamma needs a > (q-1)/2 = {(q - 1) / 2}")
    j = np.arange(1, q + 1)
    terms = gammaln(a_arr[..., None] + (1.0 - j) / 2.0)
    out = q * (q - 1) / 4.0 * np.log(np.pi) + terms.sum(axis=-1)
    if np.ndim(a) == 0:
        return float(out)
    return out


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefiniteError on failure."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    scale = max(np.max(np.abs(m)), 1e-300)
    if np.max(np.abs(m - m.T)) > 1e-12 * scale:
        raise NotPositiveDefiniteError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def spd_logdet(m: np.ndarray) -> float:
    chol = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def spd_logdet_and_inverse(m: np.ndarray) -> tuple[float, np.ndarray]:
    """Return ``(log det m, inv(m))`` for a symmetric positive-definite matrix."""
    chol = cholesky(m)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    eye = np.eye(m.shape[0])
    linv = _solve_lower(chol, eye)
    inv = linv.T @ linv
    return logdet, 0.5 * (inv + inv.T)


def _solve_lower(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(chol, b, lower=True, check_finite=False)


def mvt_logpdf(x, dof: float, loc, scale) -> np.ndarray | float:
    """Log density of a multivariate Student-t.

    ``x`` may be a single point of shape (q,) or a batch of shape (n, q).
    """
    loc = np.atleast_1d(np.asarray(loc, dtype=float))
    q = loc.shape[0]
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    if scale.shape != (q, q):
        raise DimensionMismatchError(f"scale shape {scale.shape} does not match location dim {q}")
    if not dof > 0:
        raise DomainError("degrees of freedom must be positive")
    xs = np.asarray(x, dtype=float)
    single = xs.ndim <= 1
    xs = xs.reshape(1, -1) if single else xs
    if xs.shape[1] != q:
        raise DimensionMismatchError(f"point dim {xs.shape[1]} != {q}")
    chol = cholesky(scale)
    y = _solve_lower(chol, (xs - loc).T)
    maha = np.sum(y * y, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    const = (
        gammaln(0.5 * (dof + q))
        - gammaln(0.5 * dof)
        - 0.5 * q * np.log(dof * np.pi)
        - 0.5 * logdet
    )
    out = const - 0.5 * (dof + q) * np.log1p(maha / dof)
    return float(out[0]) if single else out


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Gaussian log density for a batch of points (n, q)."""
    chol = cholesky(cov)
    y = _solve_lower(chol, (np.atleast_2d(x) - mean).T)
    q = mean.shape[0]
    return (
        -0.5 * q * np.log(2 * np.pi)
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * np.sum(y * y, axis=0)
    )


@dataclass(frozen=True)
class AssignmentResult:
    """Optimal assignment: ``permutation[row] = column``."""

    permutation: np.ndarray
    total_cost: float


def linear_sum_assignment(cost, allow_rectangular: bool = False) -> AssignmentResult:
    """Minimum-cost bijection between rows and columns of ``cost``.

    With ``allow_rectangular`` a (r, c) matrix with r <= c is accepted and
    every row is assigned a distinct column.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise DimensionMismatchError("cost must be a matrix")
    rows, cols = cost.shape
    if rows != cols and not (allow_rectangular and rows <= cols):
        raise DimensionMismatchError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise DomainError("cost matrix has NaN or infinite entries")
    row_idx, col_idx = optimize.linear_sum_assignment(cost)
    perm = np.empty(rows, dtype=int)
    perm[row_idx] = col_idx
    total = float(sum(cost[i, perm[i]] for i in range(rows)))
    return AssignmentResult(permutation=perm, total_cost=total)


def component_sum(a, axis: int = -1):
    """Sum along the component axis independently of component order."""
    return np.sort(np.asarray(a, dtype=float), axis=axis).sum(axis=axis)


def component_logsumexp(a, axis: int = -1):
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    s = component_sum(np.exp(a - amax), axis=axis)
    with np.errstate(divide="ignore"):
        return np.log(s) + np.squeeze(amax, axis=axis)


def log_dirichlet_norm(conc) -> np.ndarray | float:
    """log B(conc) = sum lgamma(conc) - lgamma(sum conc) along the last axis."""
    conc = np.asarray(conc, dtype=float)
    return component_sum(gammaln(conc)) - gammaln(component_sum(conc))
