"""Conjugate Gibbs sampler for the same mixture model.

One sweep updates, in order: labels z, categorical probabilities psi,
(mu, Sigma) jointly from the Normal-inverse-Wishart posterior, and the
weights pi.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .kprototypes import kprototypes
from .mathkernels import cholesky, component_logsumexp, mvn_logpdf
from .model import MixedDataset, PriorHyperparameters
from .rng import stream
from .sampling import dirichlet_draws, invwishart_draws

_TINY = 1e-300


@dataclass
class GibbsState:
    z: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    psi: list[np.ndarray]


@dataclass
class ChainConfig:
    sweeps: int = 2000
    burn_in: int = 1000
    seed: int = 0
    thin: int = 10

    def __post_init__(self):
        if self.burn_in < 0 or self.sweeps <= self.burn_in:
            raise ConfigurationError("need sweeps > burn_in >= 0")
        if self.thin < 1:
            raise ConfigurationError("thin must be at least 1")


@dataclass
class ChainSummary:
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    psi: list[np.ndarray]
    z_last: np.ndarray
    n_samples: int
    burn_in: int
    samples: dict = field(default_factory=dict)


def niw_posterior(x: np.ndarray, priors: PriorHyperparameters, k: int):
    """(m_n, beta_n, nu_n, Phi_n) of the Normal-inverse-Wishart posterior given rows x."""
    nk = x.shape[0]
    m = priors.m[k]
    if nk == 0:
        return m.copy(), priors.beta, priors.nu, priors.phi.copy()
    xbar = x.mean(axis=0)
    dev = x - xbar
    beta_n = priors.beta + nk
    m_n = (priors.beta * m + nk * xbar) / beta_n
    d = xbar - m
    phi_n = priors.phi + dev.T @ dev + (priors.beta * nk / beta_n) * np.outer(d, d)
    return m_n, beta_n, priors.nu + nk, 0.5 * (phi_n + phi_n.T)


def _draw_params(z, data: MixedDataset, priors: PriorHyperparameters, rng) -> tuple:
    K, q = priors.K, data.q
    psi = []
    for j, d in enumerate(data.cards):
        table = np.empty((K, d))
        for k in range(K):
            counts = np.bincount(data.c[z == k, j], minlength=d)
            table[k] = dirichlet_draws(priors.eta[j] + counts, 1, rng)[0]
        psi.append(table)
    mu = np.empty((K, q))
    sigma = np.empty((K, q, q))
    for k in range(K):
        m_n, beta_n, nu_n, phi_n = niw_posterior(data.x[z == k], priors, k)
        sigma[k] = invwishart_draws(nu_n, phi_n, 1, rng)[0]
        chol = cholesky(sigma[k] / beta_n)
        mu[k] = m_n + chol @ rng.standard_normal(q)
    counts = np.bincount(z, minlength=K)
    pi = dirichlet_draws(priors.alpha + counts, 1, rng)[0]
    return psi, mu, sigma, pi


def label_log_probs(data: MixedDataset, pi, mu, sigma, psi) -> np.ndarray:
    """(n, K) unnormalized log p(z_i = k | everything else)."""
    K = pi.shape[0]
    out = np.empty((data.n, K))
    for k in range(K):
        col = np.log(max(pi[k], _TINY)) + mvn_logpdf(data.x, mu[k], sigma[k])
        for j in range(data.p):
            col = col + np.log(np.maximum(psi[j][k, data.c[:, j]], _TINY))
        out[:, k] = col
    return out


def _sample_labels(logp: np.ndarray, rng) -> np.ndarray:
    prob = np.exp(logp - component_logsumexp(logp, axis=1)[:, None])
    cdf = np.cumsum(prob, axis=1)
    u = rng.random(logp.shape[0]) * cdf[:, -1]
    z = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(z, logp.shape[1] - 1)


def gibbs_sweep(state: GibbsState, data: MixedDataset, priors: PriorHyperparameters,
                rng: np.random.Generator) -> GibbsState:
    logp = label_log_probs(data, state.pi, state.mu, state.sigma, state.psi)
    z = _sample_labels(logp, rng)
    psi, mu, sigma, pi = _draw_params(z, data, priors, rng)
    return GibbsState(z=z, pi=pi, mu=mu, sigma=sigma, psi=psi)


def initial_state(data: MixedDataset, priors: PriorHyperparameters, seed: int,
                  rng: np.random.Generator) -> GibbsState:
    """k-prototypes labels, then parameters drawn from their conditionals."""
    labels = kprototypes(data.x, data.c, data.cards, priors.K, stream(seed, "kprototypes")).labels
    psi, mu, sigma, pi = _draw_params(labels, data, priors, rng)
    return GibbsState(z=labels, pi=pi, mu=mu, sigma=sigma, psi=psi)


def run_chain(data: MixedDataset, priors: PriorHyperparameters,
              config: ChainConfig | None = None, keep_samples: bool = True) -> ChainSummary:
    """Run the sampler and average the post burn-in draws.

    Every ``config.thin``-th retained draw is stored in ``samples`` when
    ``keep_samples`` is set.
    """
    config = config or ChainConfig()
    rng = stream(config.seed, "gibbs")
    state = initial_state(data, priors, config.seed, rng)
    K, q = priors.K, data.q
    acc_pi = np.zeros(K)
    acc_mu = np.zeros((K, q))
    acc_sigma = np.zeros((K, q, q))
    acc_psi = [np.zeros((K, d)) for d in data.cards]
    kept = {"pi": [], "mu": [], "sigma": [], "psi": []}
    n_kept = 0
    for sweep in range(config.sweeps):
        state = gibbs_sweep(state, data, priors, rng)
        if sweep < config.burn_in:
            continue
        n_kept += 1
        acc_pi += state.pi
        acc_mu += state.mu
        acc_sigma += state.sigma
        for a, p in zip(acc_psi, state.psi):
            a += p
        if keep_samples and (sweep - config.burn_in) % config.thin == 0:
            kept["pi"].append(state.pi)
            kept["mu"].append(state.mu)
            kept["sigma"].append(state.sigma)
            kept["psi"].append(state.psi)
    samples = {}
    if keep_samples and kept["pi"]:
        samples = {
            "pi": np.asarray(kept["pi"]),
            "mu": np.asarray(kept["mu"]),
            "sigma": np.asarray(kept["sigma"]),
            "psi": [np.asarray([s[j] for s in kept["psi"]]) for j in range(data.p)],
        }
    return ChainSummary(
        pi=acc_pi / n_kept, mu=acc_mu / n_kept, sigma=acc_sigma / n_kept,
        psi=[a / n_kept for a in acc_psi], z_last=state.z, n_samples=n_kept,
        burn_in=config.burn_in, samples=samples,
    )
