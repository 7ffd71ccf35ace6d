"""Posterior predictive density of a fitted variational state.

Each component contributes a multivariate Student-t for the continuous
part and independent categorical probabilities for the codes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DimensionMismatchError, DomainError
from .mathkernels import component_logsumexp, component_sum, mvt_logpdf
from .model import StandardizationTransform, VariationalParameters

SUMMARY_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class PredictiveComponent:
    weight: float
    t_dof: float
    t_loc: np.ndarray
    t_scale: np.ndarray
    cat_probs: list[np.ndarray]


def predictive_components(vp: VariationalParameters) -> list[PredictiveComponent]:
    q = vp.q
    weights = vp.alpha_hat / component_sum(vp.alpha_hat)
    probs = vp.psi_mean()
    out = []
    for k in range(vp.K):
        dof = vp.nu_hat[k] - q + 1.0
        if not dof > 0:
            raise DomainError(f"component {k}: t degrees of freedom {dof} not positive")
        scale = vp.phi_hat[k] * (vp.beta_hat[k] + 1.0) / (vp.beta_hat[k] * dof)
        out.append(PredictiveComponent(
            weight=float(weights[k]), t_dof=float(dof), t_loc=vp.m_hat[k].copy(),
            t_scale=scale, cat_probs=[p[k] for p in probs],
        ))
    return out


def _check_codes(c: np.ndarray, vp: VariationalParameters) -> None:
    cards = [e.shape[1] for e in vp.eta_hat]
    if c.shape[1] != len(cards):
        raise DimensionMismatchError(f"expected {len(cards)} categorical columns, got {c.shape[1]}")
    for j, d in enumerate(cards):
        if np.any((c[:, j] < 0) | (c[:, j] >= d)):
            raise DomainError(f"category out of range in column {j}")


def component_log_densities(x, c, vp: VariationalParameters) -> np.ndarray:
    """(n, K) log of weight_k * t_k(x) * prod_j p_kj(c_j)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = np.asarray(c, dtype=int).reshape(x.shape[0], -1)
    if x.shape[1] != vp.q:
        raise DimensionMismatchError(f"expected {vp.q} continuous columns, got {x.shape[1]}")
    _check_codes(c, vp)
    comps = predictive_components(vp)
    out = np.empty((x.shape[0], vp.K))
    for k, comp in enumerate(comps):
        col = np.log(comp.weight) + mvt_logpdf(x, comp.t_dof, comp.t_loc, comp.t_scale)
        for j, probs in enumerate(comp.cat_probs):
            col = col + np.log(probs[c[:, j]])
        out[:, k] = col
    return out


def log_ppd(x, c, vp: VariationalParameters, priors=None):
    """Log posterior predictive density of one point (q,) or a batch (n, q).

    ``priors`` is accepted for interface symmetry; the predictive depends on
    the fitted state only.
    """
    single = np.ndim(x) <= 1
    dens = component_log_densities(x, c, vp)
    out = component_logsumexp(dens, axis=1)
    return float(out[0]) if single else out


def marginal_continuous(vp: VariationalParameters, k: int, j: int) -> tuple[float, float, float]:
    """(dof, loc, squared scale) of the univariate t marginal of dimension j."""
    if not 0 <= k < vp.K:
        raise IndexError(f"component {k} out of range")
    if not 0 <= j < vp.q:
        raise IndexError(f"dimension {j} out of range")
    dof = vp.nu_hat[k] - vp.q + 1.0
    scale = vp.phi_hat[k, j, j] * (vp.beta_hat[k] + 1.0) / (vp.beta_hat[k] * dof)
    return float(dof), float(vp.m_hat[k, j]), float(scale)


def marginal_categorical(vp: VariationalParameters, k: int, j: int) -> np.ndarray:
    eta = vp.eta_hat[j][k]
    return eta / eta.sum()


def hard_assign(r) -> np.ndarray:
    """Index of the largest responsibility per row; ties go to the lowest index."""
    r = r.r if isinstance(r, VariationalParameters) else np.asarray(r)
    return np.argmax(r, axis=1)


def predictive_summary(vp: VariationalParameters, cont_names=None, cat_names=None,
                       transform: StandardizationTransform | None = None,
                       quantiles=SUMMARY_QUANTILES) -> dict:
    """Per-cluster marginal quantiles and category probabilities.

    With a ``transform`` the continuous quantiles are mapped back to the
    original units of the data.
    """
    cont_names = list(cont_names or [f"x{j + 1}" for j in range(vp.q)])
    cat_names = list(cat_names or [f"c{j + 1}" for j in range(len(vp.eta_hat))])
    weights = vp.weights()
    clusters = []
    for k in range(vp.K):
        cont = {}
        for j, name in enumerate(cont_names):
            dof, loc, scale = marginal_continuous(vp, k, j)
            vals = loc + np.sqrt(scale) * stats.t.ppf(quantiles, dof)
            if transform is not None:
                vals = vals * transform.sds[j] + transform.means[j]
            cont[name] = {f"{p:g}": float(v) for p, v in zip(quantiles, vals)}
        cat = {name: marginal_categorical(vp, k, j).tolist() for j, name in enumerate(cat_names)}
        clusters.append({"cluster": k + 1, "weight": float(weights[k]),
                         "continuous": cont, "categorical": cat})
    return {
        "units": "original" if transform is not None else "standardized",
        "quantiles": list(quantiles),
        "weights": weights.tolist(),
        "clusters": clusters,
    }
