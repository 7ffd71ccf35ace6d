import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from mixvi.errors import ConfigurationError, DimensionMismatchError, DomainError
from mixvi.evaluation import (
    BlockCoverage,
    MatchedFit,
    PointEstimates,
    aggregate_coverage,
    coverage_study,
    density_quantile_contains,
    error_logppd,
    evaluate_vi,
    hdi_scalar,
    match_components,
    param_errors,
    prop_z,
    replicate_seed,
    sample_hdi,
    true_loglik,
    vi_joint_hdi_contains,
)
from mixvi.model import GroundTruth, VariationalParameters
from mixvi.rng import stream

from oracles import best_permutation
from pipeline import prepare, vi_run


def toy_truth():
    return GroundTruth(
        pi=[0.2, 0.3, 0.5], mu=[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]],
        sigma=np.array([np.eye(2), 2 * np.eye(2), [[1.0, 0.2], [0.2, 0.5]]]),
        psi=[np.array([[0.1, 0.9], [0.5, 0.5], [0.7, 0.3]])],
    )


# ---------------------------------------------------------------- matching and metrics


@given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_matching_is_optimal(K, extra, seed):
    g = np.random.default_rng(seed)
    true = g.normal(size=(K, 2))
    fitted = g.normal(size=(K + extra, 2))
    m = match_components(fitted, true)
    cost = ((true[:, None] - fitted[None]) ** 2).sum(axis=2)
    _, best = best_permutation(cost)
    assert m.cost == pytest.approx(best, abs=1e-12)
    lm = m.label_map()
    assert np.sum(lm >= 0) == K


def test_matching_errors():
    with pytest.raises(DimensionMismatchError):
        match_components(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(DimensionMismatchError):
        match_components(np.zeros((3, 2)), np.zeros((3, 1)))


def test_perfect_estimates_have_zero_error():
    t = toy_truth()
    perm = np.array([2, 0, 1])
    est = PointEstimates(pi=t.pi[perm], mu=t.mu[perm], sigma=t.sigma[perm], psi=[t.psi[0][perm]])
    m = match_components(est.mu, t.mu)
    errs = param_errors(m, t, est)
    assert all(v == 0.0 for v in errs.values())
    labels = np.array([0, 1, 2, 2])
    z_star = perm[labels]
    assert prop_z(labels, z_star, m) == 1.0
    with pytest.raises(DimensionMismatchError):
        prop_z(labels, z_star[:2])


def test_param_error_normalization():
    t = toy_truth()
    est = PointEstimates(pi=t.pi + [0.03, -0.03, 0.0], mu=t.mu + 0.1, sigma=t.sigma + 0.2,
                         psi=[t.psi[0] + [[0.05, -0.05]] * 3])
    m = MatchedFit(np.arange(3), 0.0, 3)
    errs = param_errors(m, t, est)
    assert errs["error_mu"] == pytest.approx(0.1)
    assert errs["error_sigma"] == pytest.approx(0.2)
    assert errs["error_pi"] == pytest.approx(0.02)
    assert errs["error_psi"] == pytest.approx(0.05)


def test_extra_fitted_components_ignored():
    t = toy_truth()
    est = PointEstimates(pi=np.append(t.pi, 0.0), mu=np.vstack([t.mu, [[100.0, 100.0]]]),
                         sigma=np.concatenate([t.sigma, np.eye(2)[None] * 9]),
                         psi=[np.vstack([t.psi[0], [[0.5, 0.5]]])])
    errs = param_errors(match_components(est.mu, t.mu), t, est)
    assert max(errs.values()) == 0.0


def test_true_loglik_and_logppd_gap():
    t = toy_truth()
    truth, data, test = prepare("onedim", 200, 0)
    ll = true_loglik(test, truth)
    assert error_logppd(ll, test, truth) == 0.0
    assert error_logppd(ll + 0.5, test, truth) == pytest.approx(0.5)
    assert t.K == 3


# ---------------------------------------------------------------- HDI


def brute_hdi(dist, mass):
    res = optimize.minimize_scalar(lambda a: dist.ppf(a + mass) - dist.ppf(a),
                                   bounds=(0, 1 - mass), method="bounded", options={"xatol": 1e-12})
    a = res.x
    return dist.ppf(a), dist.ppf(a + mass)


@pytest.mark.parametrize("dist", [
    stats.gamma(3.0, scale=2.0), stats.beta(2.0, 5.0), stats.invgamma(4.0, scale=3.0),
    stats.lognorm(0.6), stats.chi2(7),
])
def test_hdi_scalar_is_shortest(dist):
    lo, hi = hdi_scalar(dist, 0.9)
    assert dist.cdf(hi) - dist.cdf(lo) == pytest.approx(0.9, abs=1e-9)
    assert dist.pdf(lo) == pytest.approx(dist.pdf(hi), rel=1e-6)
    blo, bhi = brute_hdi(dist, 0.9)
    assert hi - lo <= bhi - blo + 1e-7


def test_hdi_symmetric_and_monotone():
    assert hdi_scalar(stats.norm(1, 2), 0.95) == pytest.approx((1 - 2 * 1.959963984540054, 1 + 2 * 1.959963984540054))
    lo, hi = hdi_scalar(stats.expon(), 0.8)
    assert lo == 0.0 and hi == pytest.approx(-np.log(0.2))
    lo, hi = hdi_scalar(stats.beta(3.0, 1.0), 0.5)
    assert hi == 1.0 and lo == pytest.approx(0.5 ** (1 / 3))
    with pytest.raises(DomainError):
        hdi_scalar(stats.norm(), 1.0)


def test_sample_hdi(rng):
    x = rng.exponential(size=200000)
    lo, hi = sample_hdi(x, 0.8)
    assert lo == pytest.approx(0.0, abs=1e-3) and hi == pytest.approx(-np.log(0.2), abs=0.02)
    assert sample_hdi([1.0, 2.0, 3.0], 1 / 3) == (1.0, 1.0)


def test_density_quantile_rule(rng):
    s = rng.normal(size=5000)
    assert density_quantile_contains(float(np.quantile(s, 0.06)), s, 0.95)
    assert not density_quantile_contains(float(np.quantile(s, 0.04)), s, 0.95)
    with pytest.raises(ConfigurationError):
        density_quantile_contains(0.0, s[:999], 0.95)


# ---------------------------------------------------------------- coverage


def concentrated_vp(truth, n=1e6):
    K, q = truth.K, truth.q
    nu = n + q + 1
    return VariationalParameters(
        alpha_hat=truth.pi * n, m_hat=truth.mu.copy(), beta_hat=np.full(K, n), nu_hat=np.full(K, nu),
        phi_hat=truth.sigma * (nu + q + 1), eta_hat=[p * n for p in truth.psi],
    )


def test_vi_hdi_covers_truth_at_posterior_mode():
    t = toy_truth()
    cov = vi_joint_hdi_contains(concentrated_vp(t), t, 0.95, 2000, stream(0, "coverage"))
    assert cov.as_dict() == {"overall": True, "pi": True, "sigma": True, "mu": True, "psi": True}


def test_vi_hdi_misses_shifted_truth():
    t = toy_truth()
    far = GroundTruth(pi=[0.3, 0.3, 0.4], mu=t.mu + 0.5, sigma=t.sigma * 1.5,
                      psi=[np.array([[0.3, 0.7], [0.4, 0.6], [0.9, 0.1]])])
    cov = vi_joint_hdi_contains(concentrated_vp(t), far, 0.95, 2000, stream(0, "coverage"))
    assert cov.as_dict() == {"overall": False, "pi": False, "sigma": False, "mu": False, "psi": False}
    with pytest.raises(ConfigurationError):
        vi_joint_hdi_contains(concentrated_vp(t), t, 0.95, 999)


def test_aggregate_and_seeds():
    res = [BlockCoverage(True, True, False, True, True), BlockCoverage(False, True, False, True, False)]
    rec = aggregate_coverage(res, ["x"])
    assert (rec.overall, rec.pi, rec.sigma, rec.mu, rec.psi, rec.R) == (0.5, 1.0, 0.0, 1.0, 0.5, 2)
    assert rec.failures == ["x"]
    with pytest.raises(ConfigurationError):
        aggregate_coverage([])
    assert replicate_seed(0, 1) == replicate_seed(0, 1) != replicate_seed(0, 2)
    with pytest.raises(ConfigurationError):
        coverage_study("s1", 500, 5)


def test_vi_metrics_end_to_end():
    res, rec, _, _ = vi_run("onedim", 1500, 5)
    assert rec.error_mu < 0.05 and rec.prop_z > 0.95
    assert 0 < rec.error_logppd < 0.2
    assert set(rec.to_dict()) == {"error_mu", "error_sigma", "error_pi", "error_psi", "prop_z", "error_logppd"}


def test_density_rule_matches_chi_square_ellipsoid(rng):
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    dist = stats.multivariate_normal(np.zeros(2), cov)
    level = stats.chi2(2).ppf(0.95)
    inv = np.linalg.inv(cov)
    agree = 0
    for _ in range(500):
        draws = dist.rvs(size=2000, random_state=rng)
        point = rng.normal(size=2) * 2
        got = density_quantile_contains(float(dist.logpdf(point)), dist.logpdf(draws), 0.95)
        agree += got == bool(point @ inv @ point <= level)
    assert agree / 500 >= 0.98


def test_hdi_worked_examples():
    lo, hi = hdi_scalar(stats.beta(2, 2), 0.95)
    assert lo + hi == pytest.approx(1.0, abs=1e-6)
    lo, hi = hdi_scalar(stats.beta(5, 1), 0.95)
    assert lo == pytest.approx(0.05 ** 0.2, abs=1e-6) and hi == 1.0
    lo, hi = hdi_scalar(stats.t(7, loc=1.3, scale=0.2), 0.95)
    assert (lo + hi) / 2 == pytest.approx(1.3, abs=1e-12)


def test_param_errors_hand_case():
    truth = GroundTruth(pi=[0.4, 0.6], mu=[[0.0], [3.0]], sigma=np.array([1.0, 2.0]), psi=[])
    est = PointEstimates(pi=np.array([0.5, 0.5]), mu=np.array([[3.5], [0.2]]),
                         sigma=np.array([[[2.5]], [[0.5]]]), psi=[])
    m = match_components(est.mu, truth.mu)
    assert m.permutation.tolist() == [1, 0]
    errs = param_errors(m, truth, est)
    assert errs["error_mu"] == pytest.approx((0.2 + 0.5) / 2)
    assert errs["error_sigma"] == pytest.approx((0.5 + 0.5) / 2)
    assert errs["error_pi"] == pytest.approx(0.1)
    assert prop_z([0, 0], [1, 1], m) == 1.0 and prop_z([1, 1], [1, 1], m) == 0.0


def test_sigma_mean_requires_dof():
    vp = VariationalParameters(np.ones(1), np.zeros((1, 1)), np.ones(1), np.full(1, 2.0), np.ones((1, 1, 1)), [])
    with pytest.raises(DomainError):
        PointEstimates.from_vp(vp)
