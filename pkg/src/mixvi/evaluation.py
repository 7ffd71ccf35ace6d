"""Accuracy metrics, highest-density regions and coverage studies.

All comparisons with a ground truth happen after matching fitted
components to true components by a minimum-cost assignment on the means.
Error sums run over the true components only, so extra fitted components
(over-specified K) never contribute.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .errors import ConfigurationError, DimensionMismatchError, DomainError
from .mathkernels import (
    component_logsumexp,
    linear_sum_assignment,
    mvn_logpdf,
    mvt_logpdf,
)
from .model import GroundTruth, MixedDataset, VariationalParameters
from .rng import stream
from .sampling import (
    dirichlet_draws,
    dirichlet_logpdf,
    invwishart_draws,
    invwishart_logpdf,
    mvn_cov_batch_logpdf,
    mvt_draws,
)

MIN_JOINT_SAMPLES = 1000
DEFAULT_JOINT_SAMPLES = 10_000


# ---------------------------------------------------------------- matching


@dataclass(frozen=True)
class MatchedFit:
    """``permutation[k]`` is the fitted component matched to true component k."""

    permutation: np.ndarray
    cost: float
    K_fit: int

    def label_map(self) -> np.ndarray:
        """Fitted label -> true label, -1 for unmatched fitted components."""
        out = np.full(self.K_fit, -1, dtype=int)
        out[self.permutation] = np.arange(self.permutation.shape[0])
        return out

    def inverse(self) -> np.ndarray:
        return self.label_map()


def match_components(fitted_means, true_means) -> MatchedFit:
    """Minimum total squared-distance assignment of true to fitted means."""
    fitted = np.atleast_2d(np.asarray(fitted_means, dtype=float))
    true = np.atleast_2d(np.asarray(true_means, dtype=float))
    if fitted.shape[1] != true.shape[1]:
        raise DimensionMismatchError("fitted and true means differ in dimension")
    if fitted.shape[0] < true.shape[0]:
        raise DimensionMismatchError(
            f"cannot match {true.shape[0]} true components to {fitted.shape[0]} fitted ones"
        )
    cost = ((true[:, None, :] - fitted[None, :, :]) ** 2).sum(axis=2)
    res = linear_sum_assignment(cost, allow_rectangular=True)
    return MatchedFit(permutation=res.permutation, cost=res.total_cost, K_fit=fitted.shape[0])


# ---------------------------------------------------------------- point estimates


@dataclass(frozen=True)
class PointEstimates:
    """Posterior means of pi, mu, Sigma and psi in fitted component order."""

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    psi: list[np.ndarray]

    @classmethod
    def from_vp(cls, vp: VariationalParameters) -> "PointEstimates":
        return cls(pi=vp.weights(), mu=vp.m_hat, sigma=vp.sigma_mean(), psi=vp.psi_mean())

    @classmethod
    def from_chain(cls, chain) -> "PointEstimates":
        return cls(pi=chain.pi, mu=chain.mu, sigma=chain.sigma, psi=chain.psi)


@dataclass
class MetricsRecord:
    error_mu: float
    error_sigma: float
    error_pi: float
    error_psi: float
    prop_z: float | None = None
    error_logppd: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def param_errors(matched: MatchedFit, truth: GroundTruth, est: PointEstimates) -> dict[str, float]:
    """Mean absolute errors of the matched posterior means."""
    perm = matched.permutation
    K, q = truth.K, truth.q
    e_mu = sum(np.abs(truth.mu[k] - est.mu[perm[k]]).sum() for k in range(K)) / (q * K)
    e_sigma = sum(np.abs(truth.sigma[k] - est.sigma[perm[k]]).sum() for k in range(K)) / (q * q * K)
    e_pi = sum(abs(truth.pi[k] - est.pi[perm[k]]) for k in range(K)) / K
    total_d = sum(truth.cards)
    if total_d:
        e_psi = sum(
            np.abs(truth.psi[j][k] - est.psi[j][perm[k]]).sum()
            for k in range(K) for j in range(len(truth.psi))
        ) / (total_d * K)
    else:
        e_psi = 0.0
    return {"error_mu": float(e_mu), "error_sigma": float(e_sigma),
            "error_pi": float(e_pi), "error_psi": float(e_psi)}


def prop_z(labels, z_star, matched: MatchedFit | None = None) -> float:
    """Fraction of rows whose (matched) label equals the true label."""
    labels = np.asarray(labels, dtype=int)
    z_star = np.asarray(z_star, dtype=int)
    if labels.shape != z_star.shape:
        raise DimensionMismatchError("label vectors differ in length")
    if matched is not None:
        labels = matched.label_map()[labels]
    return float(np.mean(labels == z_star))


def true_loglik(data: MixedDataset, truth: GroundTruth) -> np.ndarray:
    """Per-row log density of the data-generating mixture."""
    dens = np.empty((data.n, truth.K))
    for k in range(truth.K):
        col = np.log(truth.pi[k]) + mvn_logpdf(data.x, truth.mu[k], truth.sigma[k])
        for j in range(data.p):
            col = col + np.log(truth.psi[j][k, data.c[:, j]])
        dens[:, k] = col
    return component_logsumexp(dens, axis=1)


def error_logppd(log_ppd_values, data: MixedDataset, truth: GroundTruth) -> float:
    """Mean absolute gap between true log density and predictive log density."""
    return float(np.mean(np.abs(true_loglik(data, truth) - np.asarray(log_ppd_values))))


def chain_log_ppd(chain, data: MixedDataset) -> np.ndarray:
    """Monte-Carlo predictive log density from the stored chain draws."""
    s = chain.samples
    if not s:
        raise ConfigurationError("chain has no stored samples")
    S = s["pi"].shape[0]
    per = np.empty((S, data.n))
    for t in range(S):
        draw = GroundTruth(pi=s["pi"][t], mu=s["mu"][t], sigma=s["sigma"][t],
                           psi=[p[t] for p in s["psi"]])
        with np.errstate(divide="ignore"):
            per[t] = true_loglik(data, draw)
    m = per.max(axis=0)
    return m + np.log(np.mean(np.exp(per - m), axis=0))


def evaluate_vi(vp: VariationalParameters, truth: GroundTruth, test: MixedDataset | None = None,
                z_star=None) -> MetricsRecord:
    """All metrics of a variational fit; ``truth`` in the same units as the fit."""
    from .predictive import hard_assign, log_ppd

    matched = match_components(vp.m_hat, truth.mu)
    errs = param_errors(matched, truth, PointEstimates.from_vp(vp))
    rec = MetricsRecord(**errs)
    if z_star is not None and vp.r is not None:
        rec.prop_z = prop_z(hard_assign(vp.r), z_star, matched)
    if test is not None:
        rec.error_logppd = error_logppd(log_ppd(test.x, test.c, vp), test, truth)
    return rec


def evaluate_chain(chain, truth: GroundTruth, test: MixedDataset | None = None,
                   z_star=None) -> MetricsRecord:
    matched = match_components(chain.mu, truth.mu)
    rec = MetricsRecord(**param_errors(matched, truth, PointEstimates.from_chain(chain)))
    if z_star is not None:
        rec.prop_z = prop_z(chain.z_last, z_star, matched)
    if test is not None and chain.samples:
        rec.error_logppd = error_logppd(chain_log_ppd(chain, test), test, truth)
    return rec


# ---------------------------------------------------------------- HDI


_CLOSED_MODES = {
    "beta": lambda a, b, loc=0.0, scale=1.0: loc + scale * (a - 1.0) / (a + b - 2.0)
    if a > 1 and b > 1 else None,
    "invgamma": lambda a, loc=0.0, scale=1.0: loc + scale / (a + 1.0),
    "gamma": lambda a, loc=0.0, scale=1.0: loc + scale * (a - 1.0) if a >= 1 else None,
}


def _mode(dist, lo, hi):
    name = dist.dist.name
    if name in _CLOSED_MODES:
        m = _CLOSED_MODES[name](*dist.args, **dist.kwds)
        if m is not None:
            return float(m)
    res = optimize.minimize_scalar(lambda v: -dist.logpdf(v), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12 * max(1.0, abs(hi - lo))})
    return float(res.x)


def hdi_scalar(dist, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval holding ``mass`` of a unimodal scipy.stats distribution.

    Symmetric location-scale families use the equal-tailed interval.
    Otherwise the density level h is found by root finding so that the two
    points with density h enclose exactly ``mass``; densities whose mode is
    at an edge of the support give a one-sided interval.
    """
    if not 0 < mass < 1:
        raise DomainError("mass must lie in (0, 1)")
    name = dist.dist.name
    if name in ("t", "norm", "cauchy"):
        half = (1.0 - mass) / 2.0
        return float(dist.ppf(half)), float(dist.ppf(1.0 - half))
    eps = 1e-13
    lo, hi = float(dist.ppf(eps)), float(dist.ppf(1.0 - eps))
    s_lo, s_hi = dist.support()
    mode = _mode(dist, lo, hi)
    span = hi - lo
    if mode <= lo + 1e-9 * span or dist.pdf(lo) >= dist.pdf(mode):
        return float(s_lo if np.isfinite(s_lo) else lo), float(dist.ppf(mass))
    if mode >= hi - 1e-9 * span or dist.pdf(hi) >= dist.pdf(mode):
        return float(dist.ppf(1.0 - mass)), float(s_hi if np.isfinite(s_hi) else hi)
    f_mode = float(dist.pdf(mode))

    def ends(h):
        a = optimize.brentq(lambda v: dist.pdf(v) - h, lo, mode, xtol=1e-15, rtol=1e-15)
        b = optimize.brentq(lambda v: dist.pdf(v) - h, mode, hi, xtol=1e-15, rtol=1e-15)
        return a, b

    def excess(h):
        a, b = ends(h)
        return (dist.cdf(b) - dist.cdf(a)) - mass

    h_lo = max(float(dist.pdf(lo)), float(dist.pdf(hi))) * (1.0 + 1e-12)
    h = optimize.brentq(excess, h_lo, f_mode * (1.0 - 1e-12), xtol=1e-300, rtol=1e-15, maxiter=500)
    a, b = ends(h)
    return float(a), float(b)


def sample_hdi(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing ceil(mass * S) of the sorted samples."""
    x = np.sort(np.asarray(samples, dtype=float))
    S = x.shape[0]
    m = int(np.ceil(mass * S))
    if m < 1 or m > S:
        raise DomainError("not enough samples for the requested mass")
    widths = x[m - 1:] - x[: S - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def density_quantile_contains(log_density_truth: float, log_density_samples, mass: float) -> bool:
    """Truth lies in the highest-density region iff its log density is at
    least the (1 - mass) empirical quantile of the sampled log densities."""
    samples = np.asarray(log_density_samples, dtype=float)
    if samples.shape[0] < MIN_JOINT_SAMPLES:
        raise ConfigurationError(f"need at least {MIN_JOINT_SAMPLES} samples, got {samples.shape[0]}")
    level = np.quantile(samples, 1.0 - mass)
    return bool(log_density_truth >= level)


# ---------------------------------------------------------------- variational joint densities


def _mu_marginal(vp: VariationalParameters, k: int):
    q = vp.q
    dof = vp.nu_hat[k] - q + 1.0
    scale = vp.phi_hat[k] / (vp.beta_hat[k] * dof)
    return dof, vp.m_hat[k], 0.5 * (scale + scale.T)


@dataclass
class BlockCoverage:
    overall: bool
    pi: bool
    sigma: bool
    mu: bool
    psi: bool

    def as_dict(self) -> dict[str, bool]:
        return asdict(self)


def _align_truth(truth: GroundTruth, matched: MatchedFit) -> GroundTruth:
    """Truth relabelled into fitted-component order (requires K = K*)."""
    if matched.K_fit != truth.K:
        raise ConfigurationError("coverage needs as many fitted as true components")
    inv = matched.label_map()
    return GroundTruth(pi=truth.pi[inv], mu=truth.mu[inv], sigma=truth.sigma[inv],
                       psi=[p[inv] for p in truth.psi])


def vi_joint_hdi_contains(vp: VariationalParameters, truth: GroundTruth, mass: float = 0.95,
                          n_samples: int = DEFAULT_JOINT_SAMPLES, rng=None,
                          matched: MatchedFit | None = None) -> BlockCoverage:
    """Per-block and overall highest-density membership of the truth under q.

    pi, psi, mu and overall use the density-quantile rule on the closed-form
    variational densities; Sigma is covered when every entry lies in its
    own marginal HDI.
    """
    if n_samples < MIN_JOINT_SAMPLES:
        raise ConfigurationError(f"need at least {MIN_JOINT_SAMPLES} samples, got {n_samples}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if matched is None:
        matched = match_components(vp.m_hat, truth.mu)
    t = _align_truth(truth, matched)
    K, q, S = vp.K, vp.q, n_samples

    # pi
    pi_s = dirichlet_draws(vp.alpha_hat, S, rng)
    lp_pi_s = dirichlet_logpdf(pi_s, vp.alpha_hat)
    lp_pi_t = float(dirichlet_logpdf(t.pi, vp.alpha_hat))

    # psi
    lp_psi_s = np.zeros(S)
    lp_psi_t = 0.0
    for j, eta in enumerate(vp.eta_hat):
        for k in range(K):
            draws = dirichlet_draws(eta[k], S, rng)
            lp_psi_s += dirichlet_logpdf(draws, eta[k])
            lp_psi_t += float(dirichlet_logpdf(t.psi[j][k], eta[k]))

    # mu (marginal multivariate t per component)
    lp_mu_s = np.zeros(S)
    lp_mu_t = 0.0
    for k in range(K):
        dof, loc, scale = _mu_marginal(vp, k)
        draws = mvt_draws(dof, loc, scale, S, rng)
        lp_mu_s += mvt_logpdf(draws, dof, loc, scale)
        lp_mu_t += float(mvt_logpdf(t.mu[k], dof, loc, scale))

    # Sigma per entry, and the joint (mu, Sigma) density for the overall region
    sigma_ok = True
    lp_ms_s = np.zeros(S)
    lp_ms_t = 0.0
    iu, ju = np.triu_indices(q)
    for k in range(K):
        sig = invwishart_draws(vp.nu_hat[k], vp.phi_hat[k], S, rng)
        shape = (vp.nu_hat[k] - q + 1.0) / 2.0
        for a, b in zip(iu, ju):
            if a == b:
                lo, hi = hdi_scalar(stats.invgamma(shape, scale=vp.phi_hat[k, a, a] / 2.0), mass)
            else:
                lo, hi = sample_hdi(sig[:, a, b], mass)
            if not lo <= t.sigma[k, a, b] <= hi:
                sigma_ok = False
        mu_s = vp.m_hat[k] + np.einsum(
            "sij,sj->si", np.linalg.cholesky(sig / vp.beta_hat[k]), rng.standard_normal((S, q))
        )
        lp_ms_s += (mvn_cov_batch_logpdf(mu_s, vp.m_hat[k], sig / vp.beta_hat[k])
                    + invwishart_logpdf(sig, vp.nu_hat[k], vp.phi_hat[k]))
        lp_ms_t += float(
            mvn_cov_batch_logpdf(t.mu[k][None], vp.m_hat[k][None], (t.sigma[k] / vp.beta_hat[k])[None])[0]
            + invwishart_logpdf(t.sigma[k], vp.nu_hat[k], vp.phi_hat[k])
        )

    overall_s = lp_pi_s + lp_psi_s + lp_ms_s
    overall_t = lp_pi_t + lp_psi_t + lp_ms_t
    return BlockCoverage(
        overall=density_quantile_contains(overall_t, overall_s, mass),
        pi=density_quantile_contains(lp_pi_t, lp_pi_s, mass),
        sigma=sigma_ok,
        mu=density_quantile_contains(lp_mu_t, lp_mu_s, mass),
        psi=density_quantile_contains(lp_psi_t, lp_psi_s, mass),
    )


# ---------------------------------------------------------------- Gibbs joint densities


def log_joint(pi, mu, sigma, psi, data: MixedDataset, priors) -> float:
    """log prior(pi, mu, Sigma, psi) + log p(x, c | params) with labels summed out."""
    K, q = priors.K, priors.q
    lp = float(dirichlet_logpdf(pi, np.full(K, priors.alpha)))
    for k in range(K):
        lp += float(mvn_logpdf(mu[k][None], priors.m[k], sigma[k] / priors.beta)[0])
        lp += float(invwishart_logpdf(sigma[k], priors.nu, priors.phi))
        for j, d in enumerate(data.cards):
            lp += float(dirichlet_logpdf(psi[j][k], np.full(d, priors.eta[j])))
    draw = GroundTruth(pi=pi, mu=mu, sigma=sigma, psi=psi)
    with np.errstate(divide="ignore"):
        lp += float(np.sum(true_loglik(data, draw)))
    return lp


def _elliptical_contains(samples: np.ndarray, point: np.ndarray, mass: float) -> bool:
    """Sample-moment Mahalanobis region containing ``mass`` of the draws."""
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False)
    cov = np.atleast_2d(cov) + 1e-12 * np.eye(samples.shape[1])
    inv = np.linalg.pinv(cov)
    d_s = np.einsum("si,ij,sj->s", samples - mean, inv, samples - mean)
    d_t = float((point - mean) @ inv @ (point - mean))
    return bool(d_t <= np.quantile(d_s, mass))


def gibbs_joint_hdi_contains(chain, truth: GroundTruth, data: MixedDataset, priors,
                             mass: float = 0.95) -> BlockCoverage:
    """Highest-density membership from stored chain draws.

    Overall uses the joint prior-times-likelihood density; blocks use
    elliptical sample regions (pi drops its last coordinate); Sigma is
    covered when every entry lies in its sample HDI.
    """
    s = chain.samples
    S = s["pi"].shape[0]
    if S < MIN_JOINT_SAMPLES:
        raise ConfigurationError(f"need at least {MIN_JOINT_SAMPLES} stored draws, got {S}")
    matched = match_components(chain.mu, truth.mu)
    t = _align_truth(truth, matched)
    K, q = truth.K, truth.q
    lj_s = np.array([
        log_joint(s["pi"][i], s["mu"][i], s["sigma"][i], [p[i] for p in s["psi"]], data, priors)
        for i in range(S)
    ])
    lj_t = log_joint(t.pi, t.mu, t.sigma, t.psi, data, priors)
    pi_ok = _elliptical_contains(s["pi"][:, :-1], t.pi[:-1], mass)
    mu_ok = _elliptical_contains(s["mu"].reshape(S, -1), t.mu.reshape(-1), mass)
    psi_s = np.concatenate([p[:, :, :-1].reshape(S, -1) for p in s["psi"]], axis=1)
    psi_t = np.concatenate([p[:, :-1].reshape(-1) for p in t.psi])
    psi_ok = _elliptical_contains(psi_s, psi_t, mass)
    sigma_ok = True
    iu, ju = np.triu_indices(q)
    for k in range(K):
        for a, b in zip(iu, ju):
            lo, hi = sample_hdi(s["sigma"][:, k, a, b], mass)
            if not lo <= t.sigma[k, a, b] <= hi:
                sigma_ok = False
    return BlockCoverage(
        overall=bool(lj_t >= np.quantile(lj_s, 1.0 - mass)),
        pi=pi_ok, sigma=sigma_ok, mu=mu_ok, psi=psi_ok,
    )


# ---------------------------------------------------------------- coverage studies


@dataclass
class CoverageRecord:
    overall: float
    pi: float
    sigma: float
    mu: float
    psi: float
    R: int
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


BLOCKS = ("overall", "pi", "sigma", "mu", "psi")


def aggregate_coverage(results: list[BlockCoverage], failures: list[str] | None = None) -> CoverageRecord:
    """Per-block fraction of covered replicates (failed replicates excluded)."""
    R = len(results)
    if R == 0:
        raise ConfigurationError("no successful replicates to aggregate")
    frac = {b: float(sum(getattr(r, b) for r in results)) / R for b in BLOCKS}
    return CoverageRecord(R=R, failures=list(failures or []), **frac)


def replicate_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def coverage_replicate(scenario: str, n: int, seed: int, method: str = "vi", mass: float = 0.95,
                       n_samples: int = DEFAULT_JOINT_SAMPLES, standardize_data: bool = True,
                       chain_config=None) -> BlockCoverage:
    """simulate -> fit -> match -> HDI membership, for one replicate seed."""
    from . import cavi, gibbs
    from .model import StandardizationTransform, default_priors, standardize
    from .simulation import ScenarioSpec, simulate

    truth, data = simulate(ScenarioSpec(scenario, n, seed))
    if standardize_data:
        data, transform = standardize(data)
    else:
        transform = StandardizationTransform.identity(data.q)
    truth = transform.apply_truth(truth)
    priors = default_priors(data, truth.K)
    if method == "vi":
        res = cavi.fit(data, priors, cavi.FitConfig(seed=seed))
        return vi_joint_hdi_contains(res.vp, truth, mass, n_samples, stream(seed, "coverage"))
    if method == "gibbs":
        cfg = chain_config or gibbs.ChainConfig(seed=seed, thin=1)
        chain = gibbs.run_chain(data, priors, replace(cfg, seed=seed))
        return gibbs_joint_hdi_contains(chain, truth, data, priors, mass)
    raise ConfigurationError(f"unknown method {method!r}")


def coverage_study(scenario: str, n: int, R: int, seed: int = 0, method: str = "vi",
                   mass: float = 0.95, n_samples: int = DEFAULT_JOINT_SAMPLES,
                   chain_config=None) -> CoverageRecord:
    """Frequentist coverage over R independent replicates (R >= 10)."""
    if R < 10:
        raise ConfigurationError("coverage studies need at least 10 replicates")
    results, failures = [], []
    for rep in range(R):
        rs = replicate_seed(seed, rep)
        try:
            results.append(coverage_replicate(scenario, n, rs, method, mass, n_samples,
                                              chain_config=chain_config))
        except Exception as exc:  # a failed replicate is recorded, not fatal
            failures.append(f"replicate {rep} (seed {rs}): {type(exc).__name__}: {exc}")
    return aggregate_coverage(results, failures)
