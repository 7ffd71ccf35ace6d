"""Coordinate-ascent variational inference for the mixed-data mixture.

Global factors: q(pi) Dirichlet, q(mu_k, Lambda_k) Normal-Wishart, q(psi_kj)
Dirichlet. Local factors: responsibilities r_ik. Every reduction over the
component axis is order independent, so relabelling the initial
responsibilities relabels the result and nothing else.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ComponentEmptyError,
    ConfigurationError,
    DomainError,
    NotPositiveDefiniteError,
    NumericalDegeneracyError,
)
from .kprototypes import kprototypes
from .mathkernels import (
    cholesky,
    component_logsumexp,
    component_sum,
    digamma,
    log_dirichlet_norm,
    log_multigamma,
    spd_logdet_and_inverse,
)
from .model import MixedDataset, PriorHyperparameters, VariationalParameters
from .rng import stream

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class ElboTrace:
    values: list[float] = field(default_factory=list)
    converged_at: int | None = None


@dataclass
class FitConfig:
    tol: float = 1e-8
    max_sweeps: int = 2000
    seed: int = 0
    epsilon: float = 1.0
    init: str = "kprototypes"

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_sweeps < 1:
            raise ConfigurationError("max_sweeps must be at least 1")
        if not 0 < self.epsilon < 2:
            raise ConfigurationError("epsilon must lie in (0, 2)")
        if self.init not in ("kprototypes", "random"):
            raise ConfigurationError(f"unknown init method {self.init!r}")


@dataclass
class FitResult:
    vp: VariationalParameters
    trace: ElboTrace

    @property
    def converged(self) -> bool:
        return self.trace.converged_at is not None


@dataclass(frozen=True)
class SimplifiedEstimates:
    """Posterior-mean style summaries on which the damped map acts."""

    pi_hat: np.ndarray
    mu_hat: np.ndarray
    lambda_hat: np.ndarray
    psi_hat: list[np.ndarray]

    def combine(self, other: "SimplifiedEstimates", epsilon: float) -> "SimplifiedEstimates":
        """(1 - epsilon) * self + epsilon * other, blockwise."""
        a, b = 1.0 - epsilon, epsilon
        return SimplifiedEstimates(
            pi_hat=a * self.pi_hat + b * other.pi_hat,
            mu_hat=a * self.mu_hat + b * other.mu_hat,
            lambda_hat=a * self.lambda_hat + b * other.lambda_hat,
            psi_hat=[a * s + b * o for s, o in zip(self.psi_hat, other.psi_hat)],
        )


# ---------------------------------------------------------------- init


def init_kprototypes(data: MixedDataset, K: int, seed: int) -> np.ndarray:
    """0.9 at the k-prototypes cluster of each row and 0.1 elsewhere.

    Rows deliberately do not sum to one; the first global update only needs
    relative weights.
    """
    if K < 1:
        raise ConfigurationError("K must be at least 1")
    if data.n < K:
        raise ConfigurationError(f"need at least K={K} rows, got {data.n}")
    res = kprototypes(data.x, data.c, data.cards, K, stream(seed, "kprototypes"))
    return labels_to_responsibilities(res.labels, K)


def labels_to_responsibilities(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    r = np.full((labels.shape[0], K), 0.1)
    r[np.arange(labels.shape[0]), labels] = 0.9
    return r


def init_random(data: MixedDataset, K: int, seed: int) -> np.ndarray:
    """Random Dirichlet(1) responsibility rows."""
    if K < 1 or data.n < K:
        raise ConfigurationError(f"need 1 <= K <= n (K={K}, n={data.n})")
    return stream(seed, "init-random").dirichlet(np.ones(K), size=data.n)


# ---------------------------------------------------------------- updates


def _category_counts(c: np.ndarray, d: int, rk: np.ndarray) -> np.ndarray:
    return np.bincount(c, weights=rk, minlength=d).astype(float)


def update_global(data: MixedDataset, priors: PriorHyperparameters, r: np.ndarray) -> VariationalParameters:
    r = np.asarray(r, dtype=float)
    if r.shape != (data.n, priors.K):
        raise DomainError(f"responsibilities must be {(data.n, priors.K)}, got {r.shape}")
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise DomainError("responsibilities must be finite and nonnegative")
    K, q = priors.K, data.q
    x = data.x
    alpha_hat = np.empty(K)
    beta_hat = np.empty(K)
    nu_hat = np.empty(K)
    m_hat = np.empty((K, q))
    phi_hat = np.empty((K, q, q))
    eta_hat = [np.empty((K, d)) for d in data.cards]
    for k in range(K):
        rk = np.ascontiguousarray(r[:, k])
        nk = rk.sum()
        sx = rk @ x
        mk = priors.m[k]
        alpha_hat[k] = priors.alpha + nk
        beta_hat[k] = priors.beta + nk
        nu_hat[k] = priors.nu + nk
        m_hat[k] = (priors.beta * mk + sx) / beta_hat[k]
        # Phi + sum r (x - m_hat)(x - m_hat)^T + beta (m - m_hat)(m - m_hat)^T
        dev = x - m_hat[k]
        scatter = (dev * rk[:, None]).T @ dev
        dm = mk - m_hat[k]
        phi_k = priors.phi + scatter + priors.beta * np.outer(dm, dm)
        phi_k = 0.5 * (phi_k + phi_k.T)
        try:
            cholesky(phi_k)
        except NotPositiveDefiniteError as exc:
            raise NumericalDegeneracyError(f"phi_hat[{k}] is not positive definite") from exc
        phi_hat[k] = phi_k
        for j, d in enumerate(data.cards):
            eta_hat[j][k] = priors.eta[j] + _category_counts(data.c[:, j], d, rk)
    return VariationalParameters(alpha_hat, m_hat, beta_hat, nu_hat, phi_hat, eta_hat, r)


@dataclass(frozen=True)
class _Expectations:
    e_logdet: np.ndarray       # E ln|Lambda_k|
    logdet_phi: np.ndarray     # ln|Phi_hat_k|
    chol: list[np.ndarray]     # Cholesky factors of Phi_hat_k
    phi_inv: np.ndarray
    e_logpi: np.ndarray
    e_logpsi: list[np.ndarray]


def _expectations(vp: VariationalParameters, pi_norm: float | None = None) -> _Expectations:
    K, q = vp.K, vp.q
    e_logdet = np.empty(K)
    logdet_phi = np.empty(K)
    phi_inv = np.empty((K, q, q))
    chols = []
    i = np.arange(1, q + 1)
    for k in range(K):
        chols.append(cholesky(vp.phi_hat[k]))
        logdet_phi[k], phi_inv[k] = spd_logdet_and_inverse(vp.phi_hat[k])
        e_logdet[k] = q * np.log(2.0) - logdet_phi[k] + float(np.sum(digamma((vp.nu_hat[k] + 1.0 - i) / 2.0)))
    if pi_norm is None:
        pi_norm = component_sum(vp.alpha_hat)
    e_logpi = digamma(vp.alpha_hat) - digamma(pi_norm)
    e_logpsi = [digamma(e) - digamma(e.sum(axis=1))[:, None] for e in vp.eta_hat]
    return _Expectations(e_logdet, logdet_phi, chols, phi_inv, e_logpi, e_logpsi)


def _log_rho(data: MixedDataset, vp: VariationalParameters, ex: _Expectations) -> np.ndarray:
    """(n, K) matrix of E ln N + sum_j E ln psi + E ln pi."""
    q = data.q
    out = np.empty((data.n, vp.K))
    for k in range(vp.K):
        y = solve_triangular(ex.chol[k], (data.x - vp.m_hat[k]).T, lower=True, check_finite=False)
        maha = np.sum(y * y, axis=0)
        e_quad = vp.nu_hat[k] * maha + q / vp.beta_hat[k]
        col = -0.5 * q * LOG_2PI + 0.5 * ex.e_logdet[k] - 0.5 * e_quad + ex.e_logpi[k]
        for j in range(data.p):
            col = col + ex.e_logpsi[j][k, data.c[:, j]]
        out[:, k] = col
    return out


def update_local(data: MixedDataset, vp: VariationalParameters, priors: PriorHyperparameters,
                 pi_denominator: str = "exact") -> np.ndarray:
    """Normalized responsibilities given the global factors.

    ``pi_denominator="theory"`` replaces digamma(sum alpha_hat) by
    digamma(K alpha + n); the two agree whenever r rows sum to one.
    """
    if not np.all(np.isfinite(data.x)):
        raise DomainError("continuous data contain non-finite values")
    if pi_denominator == "exact":
        norm = None
    elif pi_denominator == "theory":
        norm = priors.K * priors.alpha + data.n
    else:
        raise ConfigurationError(f"unknown pi_denominator {pi_denominator!r}")
    log_rho = _log_rho(data, vp, _expectations(vp, norm))
    lse = component_logsumexp(log_rho, axis=1)
    r = np.exp(log_rho - lse[:, None])
    if not np.all(np.isfinite(r)):
        raise NumericalDegeneracyError("non-finite responsibilities")
    return r


# ---------------------------------------------------------------- ELBO


def _xlogx(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] * np.log(r[pos])
    return out


def _kl_dirichlet(post: np.ndarray, prior: np.ndarray) -> float:
    """KL(Dir(post) || Dir(prior)) for one concentration vector."""
    e_log = digamma(post) - digamma(component_sum(post))
    return float(
        log_dirichlet_norm(prior) - log_dirichlet_norm(post) + component_sum((post - prior) * e_log)
    )


def _kl_wishart(nu_hat, phi_hat_logdet, phi_hat_inv, nu, phi, phi_logdet, q) -> float:
    """KL(W(nu_hat, Phi_hat^-1) || W(nu, Phi^-1))."""
    i = np.arange(1, q + 1)
    return 0.5 * (
        -nu * phi_logdet
        + nu * phi_hat_logdet
        + nu_hat * float(np.trace(phi @ phi_hat_inv))
        + 2.0 * log_multigamma(q, nu / 2.0)
        - 2.0 * log_multigamma(q, nu_hat / 2.0)
        + (nu_hat - nu) * float(np.sum(digamma((nu_hat + 1.0 - i) / 2.0)))
        - nu_hat * q
    )


def compute_elbo(data: MixedDataset, priors: PriorHyperparameters, vp: VariationalParameters,
                 form: str = "kl") -> float:
    """Evidence lower bound of (global factors, vp.r).

    ``form="kl"`` is the production path: expected complete-data terms
    minus KL divergences of each global factor from its prior.
    ``form="direct"`` sums the eleven expectation terms one by one.
    """
    if form == "direct":
        return elbo_terms_direct(data, priors, vp).sum()
    if form != "kl":
        raise ConfigurationError(f"unknown ELBO form {form!r}")
    K, q = vp.K, vp.q
    r = vp.r
    ex = _expectations(vp)
    log_rho = _log_rho(data, vp, ex)
    phi_logdet, _ = spd_logdet_and_inverse(priors.phi)
    per_k = np.empty(K)
    for k in range(K):
        rk = np.ascontiguousarray(r[:, k])
        data_term = rk @ log_rho[:, k] - _xlogx(rk).sum()
        dm = vp.m_hat[k] - priors.m[k]
        kl_mu = 0.5 * (
            q * np.log(vp.beta_hat[k] / priors.beta)
            - q
            + priors.beta * vp.nu_hat[k] * float(dm @ ex.phi_inv[k] @ dm)
            + q * priors.beta / vp.beta_hat[k]
        )
        kl_w = _kl_wishart(vp.nu_hat[k], ex.logdet_phi[k], ex.phi_inv[k],
                           priors.nu, priors.phi, phi_logdet, q)
        kl_psi = sum(
            _kl_dirichlet(vp.eta_hat[j][k], np.full(d, priors.eta[j]))
            for j, d in enumerate(data.cards)
        )
        per_k[k] = data_term - kl_mu - kl_w - kl_psi
    kl_pi = _kl_dirichlet(vp.alpha_hat, np.full(K, priors.alpha))
    return float(component_sum(per_k) - kl_pi)


def elbo_terms_direct(data: MixedDataset, priors: PriorHyperparameters,
                      vp: VariationalParameters) -> np.ndarray:
    """The eleven signed ELBO expectation terms, each from its own formula.

    Order: E ln p(x|z,mu,Lambda), E ln p(mu|Lambda), E ln p(Lambda),
    E ln p(c|z,psi), E ln p(psi), E ln p(z|pi), E ln p(pi),
    -E ln q(mu,Lambda), -E ln q(psi), -E ln q(pi), -E ln q(z).
    Their sum is the ELBO.
    """
    K, q = vp.K, vp.q
    r = vp.r
    ex = _expectations(vp)
    phi_logdet, _ = spd_logdet_and_inverse(priors.phi)
    nk = np.array([np.ascontiguousarray(r[:, k]).sum() for k in range(K)])
    log2 = np.log(2.0)
    t = np.zeros(11)
    per = np.empty(K)

    for k in range(K):
        rk = np.ascontiguousarray(r[:, k])
        dev = data.x - vp.m_hat[k]
        maha = np.einsum("ni,ij,nj->n", dev, ex.phi_inv[k], dev)
        per[k] = rk @ (-0.5 * q * LOG_2PI + 0.5 * ex.e_logdet[k]
                       - 0.5 * (vp.nu_hat[k] * maha + q / vp.beta_hat[k]))
    t[0] = component_sum(per)

    for k in range(K):
        dm = vp.m_hat[k] - priors.m[k]
        per[k] = (-0.5 * q * LOG_2PI + 0.5 * q * np.log(priors.beta) + 0.5 * ex.e_logdet[k]
                  - 0.5 * q * priors.beta / vp.beta_hat[k]
                  - 0.5 * priors.beta * vp.nu_hat[k] * float(dm @ ex.phi_inv[k] @ dm))
    t[1] = component_sum(per)

    for k in range(K):
        per[k] = (0.5 * (priors.nu - q - 1.0) * ex.e_logdet[k]
                  - 0.5 * vp.nu_hat[k] * float(np.trace(priors.phi @ ex.phi_inv[k]))
                  - 0.5 * priors.nu * q * log2
                  + 0.5 * priors.nu * phi_logdet
                  - log_multigamma(q, priors.nu / 2.0))
    t[2] = component_sum(per)

    for k in range(K):
        rk = np.ascontiguousarray(r[:, k])
        per[k] = sum(float(rk @ ex.e_logpsi[j][k, data.c[:, j]]) for j in range(data.p))
    t[3] = component_sum(per)

    for k in range(K):
        per[k] = sum(
            -log_dirichlet_norm(np.full(d, priors.eta[j]))
            + (priors.eta[j] - 1.0) * component_sum(ex.e_logpsi[j][k])
            for j, d in enumerate(data.cards)
        )
    t[4] = component_sum(per)

    t[5] = component_sum(nk * ex.e_logpi)
    t[6] = -log_dirichlet_norm(np.full(K, priors.alpha)) + (priors.alpha - 1.0) * component_sum(ex.e_logpi)

    for k in range(K):
        e_log_q_mu = (-0.5 * q * LOG_2PI + 0.5 * q * np.log(vp.beta_hat[k])
                      + 0.5 * ex.e_logdet[k] - 0.5 * q)
        e_log_q_lam = (0.5 * (vp.nu_hat[k] - q - 1.0) * ex.e_logdet[k]
                       - 0.5 * vp.nu_hat[k] * q
                       - 0.5 * vp.nu_hat[k] * q * log2
                       + 0.5 * vp.nu_hat[k] * ex.logdet_phi[k]
                       - log_multigamma(q, vp.nu_hat[k] / 2.0))
        per[k] = -(e_log_q_mu + e_log_q_lam)
    t[7] = component_sum(per)

    for k in range(K):
        per[k] = -sum(
            -log_dirichlet_norm(vp.eta_hat[j][k])
            + component_sum((vp.eta_hat[j][k] - 1.0) * ex.e_logpsi[j][k])
            for j in range(data.p)
        )
    t[8] = component_sum(per)

    t[9] = -(-log_dirichlet_norm(vp.alpha_hat) + component_sum((vp.alpha_hat - 1.0) * ex.e_logpi))

    for k in range(K):
        per[k] = -_xlogx(np.ascontiguousarray(r[:, k])).sum()
    t[10] = component_sum(per)
    return t


# ---------------------------------------------------------------- driver


def fit(data: MixedDataset, priors: PriorHyperparameters, config: FitConfig | None = None,
        init_r: np.ndarray | None = None) -> FitResult:
    """Alternate global and local updates until the ELBO stabilises.

    With ``config.epsilon != 1`` each sweep applies the damped map on the
    simplified estimates instead of the plain global update.
    """
    config = config or FitConfig()
    K = priors.K
    if init_r is None:
        if config.init == "kprototypes":
            init_r = init_kprototypes(data, K, config.seed)
        else:
            init_r = init_random(data, K, config.seed)
    r = np.asarray(init_r, dtype=float)
    trace = ElboTrace()
    theta = None
    prev = None
    vp = None
    for sweep in range(config.max_sweeps):
        if config.epsilon == 1.0:
            vp = update_global(data, priors, r)
        else:
            if theta is None:
                theta = simplified_estimates(data, update_global(data, priors, r))
            else:
                theta = theta.combine(simplified_estimates(data, update_global(data, priors, r)),
                                      config.epsilon)
            vp = hyperparameters_from_simplified(theta, priors, data.n)
        r = update_local(data, vp, priors)
        vp.r = r
        value = compute_elbo(data, priors, vp)
        trace.values.append(value)
        if prev is not None and abs(value - prev) < config.tol * (1.0 + abs(value)):
            trace.converged_at = sweep
            break
        prev = value
    return FitResult(vp=vp, trace=trace)


# ---------------------------------------------------------------- simplified estimates


def simplified_estimates(data: MixedDataset, vp: VariationalParameters) -> SimplifiedEstimates:
    """pi_hat, mu_hat, Lambda_hat, psi_hat from the responsibilities in ``vp``."""
    r = vp.r
    K, q, n = vp.K, data.q, data.n
    pi_hat = np.empty(K)
    mu_hat = np.empty((K, q))
    lam = np.empty((K, q, q))
    psi = [np.empty((K, d)) for d in data.cards]
    for k in range(K):
        rk = np.ascontiguousarray(r[:, k])
        nk = rk.sum()
        if not nk > 0:
            raise ComponentEmptyError(f"component {k} has zero total responsibility")
        pi_hat[k] = nk / n
        mu_hat[k] = (rk @ data.x) / nk
        dev = data.x - mu_hat[k]
        scatter = (dev * rk[:, None]).T @ dev
        try:
            _, inv = spd_logdet_and_inverse(0.5 * (scatter + scatter.T))
        except NotPositiveDefiniteError as exc:
            raise NumericalDegeneracyError(f"weighted scatter of component {k} is singular") from exc
        lam[k] = nk * inv
        for j, d in enumerate(data.cards):
            psi[j][k] = _category_counts(data.c[:, j], d, rk) / nk
    return SimplifiedEstimates(pi_hat, mu_hat, lam, psi)


def hyperparameters_from_simplified(theta: SimplifiedEstimates, priors: PriorHyperparameters,
                                    n: int) -> VariationalParameters:
    """Invert the map from hyperparameters to simplified estimates."""
    npi = n * theta.pi_hat
    K, q = theta.mu_hat.shape
    alpha_hat = npi + priors.alpha
    beta_hat = npi + priors.beta
    nu_hat = npi + priors.nu
    m_hat = (npi[:, None] * theta.mu_hat + priors.beta * priors.m) / beta_hat[:, None]
    phi_hat = np.empty((K, q, q))
    for k in range(K):
        _, cov = spd_logdet_and_inverse(theta.lambda_hat[k])
        dm = theta.mu_hat[k] - priors.m[k]
        p = npi[k] * cov + (npi[k] * priors.beta / (npi[k] + priors.beta)) * np.outer(dm, dm) + priors.phi
        phi_hat[k] = 0.5 * (p + p.T)
    eta_hat = [npi[:, None] * psi + priors.eta[j] for j, psi in enumerate(theta.psi_hat)]
    return VariationalParameters(alpha_hat, m_hat, beta_hat, nu_hat, phi_hat, eta_hat)


def reconstruction_residuals(theta: SimplifiedEstimates, vp: VariationalParameters,
                             priors: PriorHyperparameters, n: int) -> dict[str, float]:
    """Largest absolute gap between ``vp`` and the hyperparameters rebuilt from ``theta``."""
    rebuilt = hyperparameters_from_simplified(theta, priors, n)
    out = {
        "alpha_hat": np.max(np.abs(rebuilt.alpha_hat - vp.alpha_hat)),
        "beta_hat": np.max(np.abs(rebuilt.beta_hat - vp.beta_hat)),
        "nu_hat": np.max(np.abs(rebuilt.nu_hat - vp.nu_hat)),
        "m_hat": np.max(np.abs(rebuilt.m_hat - vp.m_hat)),
        "phi_hat": np.max(np.abs(rebuilt.phi_hat - vp.phi_hat)),
        "eta_hat": max((np.max(np.abs(a - b)) for a, b in zip(rebuilt.eta_hat, vp.eta_hat)), default=0.0),
    }
    return {k: float(v) for k, v in out.items()}


def cavi_map(theta: SimplifiedEstimates, data: MixedDataset, priors: PriorHyperparameters,
             pi_denominator: str = "theory") -> SimplifiedEstimates:
    """One CAVI round expressed on simplified estimates."""
    vp = hyperparameters_from_simplified(theta, priors, data.n)
    vp.r = update_local(data, vp, priors, pi_denominator=pi_denominator)
    return simplified_estimates(data, vp)


def damped_iterate(theta: SimplifiedEstimates, data: MixedDataset, priors: PriorHyperparameters,
                   epsilon: float, pi_denominator: str = "theory") -> SimplifiedEstimates:
    """(1 - epsilon) theta + epsilon T(theta) for epsilon in (0, 2)."""
    if not 0 < epsilon < 2:
        raise DomainError("epsilon must lie in (0, 2)")
    return theta.combine(cavi_map(theta, data, priors, pi_denominator), epsilon)
