"""Ground-truth generators for the benchmark scenarios and dataset sampling.

Scenarios:

* ``onedim``: q = 1, one categorical column with 3 levels, K* = 3.
* ``s1``: well separated continuous clusters, one weakly informative
  4-level categorical column.
* ``s2``: overlapping continuous clusters, 2K* binary categorical columns
  that carry most of the label information.
* ``s3``: a middle ground, one K*-level categorical column with
  P(c = z) = 0.75.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, NumericalDegeneracyError
from .model import GroundTruth, MixedDataset
from .rng import stream

SCENARIOS = ("onedim", "s1", "s2", "s3")
S1_Q = 5
S3_Q = 5
MAX_MEAN_PROPOSALS = 100_000


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    n: int
    seed: int = 0
    K_star: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.K_star is None:
            object.__setattr__(self, "K_star", 3 if self.scenario == "onedim" else 5)
        if self.scenario == "onedim" and self.K_star != 3:
            raise ConfigurationError("the one-dimensional example has exactly 3 components")
        if self.K_star < 1:
            raise ConfigurationError("K* must be at least 1")
        if self.n < self.K_star:
            raise ConfigurationError("n must be at least K*")


def random_orthogonal(q: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix)."""
    if q < 1:
        raise ConfigurationError("q must be at least 1")
    a = rng.standard_normal((q, q))
    qm, rm = np.linalg.qr(a)
    return qm * np.sign(np.diag(rm))


def _random_weights(K: int, rng) -> np.ndarray:
    w = rng.uniform(0.5, 2.0, size=K)
    return w / w.sum()


def _rotated_covariances(K, q, low, high, rng) -> np.ndarray:
    """U_k diag(eigs) U_k^T with eigs ~ U(low[k], high[k])."""
    out = np.empty((K, q, q))
    for k in range(K):
        eigs = rng.uniform(low[k], high[k], size=q)
        u = random_orthogonal(q, rng)
        s = (u * eigs) @ u.T
        out[k] = 0.5 * (s + s.T)
    return out


def _separated_means(K, q, dmin, dmax, rng) -> np.ndarray:
    """Sequential rejection sampling in a box until all pairwise distances fit."""
    side = 1.6 * dmax / np.sqrt(q)
    accepted: list[np.ndarray] = []
    for _ in range(MAX_MEAN_PROPOSALS):
        cand = rng.uniform(0.0, side, size=q)
        if accepted:
            dist = np.linalg.norm(np.asarray(accepted) - cand, axis=1)
            if np.any(dist < dmin) or np.any(dist > dmax):
                continue
        accepted.append(cand)
        if len(accepted) == K:
            return np.asarray(accepted)
    raise NumericalDegeneracyError(
        f"could not place {K} means with pairwise distances in [{dmin}, {dmax}]"
    )


def gen_truth(spec: ScenarioSpec) -> GroundTruth:
    """Draw the data-generating parameters for ``spec`` (deterministic in seed)."""
    rng = stream(spec.seed, "truth")
    K = spec.K_star
    if spec.scenario == "onedim":
        psi = np.full((3, 3), 0.2)
        np.fill_diagonal(psi, 0.6)
        return GroundTruth(
            pi=np.array([0.4, 0.35, 0.25]),
            mu=np.array([[0.0], [2.0], [5.0]]),
            sigma=np.array([0.1, 0.2, 0.5]).reshape(3, 1, 1),
            psi=[psi],
        )
    pi = _random_weights(K, rng)
    if spec.scenario == "s1":
        q = S1_Q
        psi = rng.dirichlet(np.full(4, 5.0), size=K)
        mu = _separated_means(K, q, 4.0 * K, 8.0 * K, rng)
        ks = np.arange(1, K + 1, dtype=float)
        sigma = _rotated_covariances(K, q, ks ** 2 / 2.0, ks ** 2, rng)
        return GroundTruth(pi=pi, mu=mu, sigma=sigma, psi=[psi])
    if spec.scenario == "s2":
        q = K
        mu = np.eye(K)
        sigma = np.empty((K, q, q))
        psi = []
        for k in range(K):
            sigma[k] = np.diag(np.where(np.arange(q) == k, 9.0, 4.0))
        for j in range(2 * K):
            table = np.empty((K, 2))
            for k in range(K):
                p1 = 0.9 if j in (2 * k, 2 * k + 1) else 0.1
                table[k] = (p1, 1.0 - p1)
            psi.append(table)
        return GroundTruth(pi=pi, mu=mu, sigma=sigma, psi=psi)
    # s3
    q = S3_Q
    if K > q:
        raise ConfigurationError(f"scenario s3 needs K* <= q = {q}")
    mu = 4.0 * K * np.eye(K, q)
    scale = (1.6 * K) ** 2
    sigma = _rotated_covariances(K, q, np.full(K, scale / 2.0), np.full(K, scale), rng)
    psi = np.full((K, K), 0.25 / (K - 1)) if K > 1 else np.ones((1, 1))
    np.fill_diagonal(psi, 0.75)
    return GroundTruth(pi=pi, mu=mu, sigma=sigma, psi=[psi])


def sample_dataset(truth: GroundTruth, n: int, seed: int, stream_name: str = "data"
                   ) -> tuple[MixedDataset, np.ndarray]:
    """Draw labels, Gaussian continuous parts and categorical codes."""
    rng = stream(seed, stream_name)
    K, q = truth.K, truth.q
    z = rng.choice(K, size=n, p=truth.pi)
    x = np.empty((n, q))
    chols = [np.linalg.cholesky(truth.sigma[k]) for k in range(K)]
    eps = rng.standard_normal((n, q))
    for k in range(K):
        rows = z == k
        x[rows] = truth.mu[k] + eps[rows] @ chols[k].T
    c = np.empty((n, len(truth.psi)), dtype=int)
    u = rng.random((n, len(truth.psi)))
    for j, table in enumerate(truth.psi):
        cdf = np.cumsum(table, axis=1)
        cdf[:, -1] = 1.0
        c[:, j] = (u[:, j][:, None] >= cdf[z]).sum(axis=1)
    return MixedDataset(x=x, c=c, cards=truth.cards), z


def simulate(spec: ScenarioSpec) -> tuple[GroundTruth, MixedDataset]:
    """Truth and a training set of size ``spec.n``; truth.z holds the labels."""
    truth = gen_truth(spec)
    data, z = sample_dataset(truth, spec.n, spec.seed, "data")
    return replace(truth, z=z), data


def holdout_size(n: int) -> int:
    return int(min(0.4 * n, 2000))


def sample_holdout(truth: GroundTruth, n: int, seed: int) -> tuple[MixedDataset, np.ndarray]:
    return sample_dataset(truth, holdout_size(n), seed, "test")
