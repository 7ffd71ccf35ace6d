"""Datasets, priors, variational state and ground truth.

Category codes and component labels are 0-based in memory. All file
formats use 1-based codes (see :mod:`mixvi.io`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    DatasetValidationError,
    DegenerateColumnError,
    DomainError,
)
from .mathkernels import component_sum


@dataclass(frozen=True)
class MixedDataset:
    """n rows of continuous (n, q) and categorical (n, p) observations."""

    x: np.ndarray
    c: np.ndarray
    cards: tuple[int, ...]
    cont_names: tuple[str, ...] = ()
    cat_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        c = np.asarray(self.c)
        if c.size == 0 and c.ndim != 2:
            c = np.zeros((x.shape[0], 0), dtype=int)
        elif c.ndim == 1:
            c = c.reshape(-1, 1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "c", c.astype(int, copy=False))
        object.__setattr__(self, "cards", tuple(int(d) for d in self.cards))
        if not self.cont_names:
            object.__setattr__(self, "cont_names", tuple(f"x{j + 1}" for j in range(x.shape[1])))
        if not self.cat_names:
            object.__setattr__(self, "cat_names", tuple(f"c{j + 1}" for j in range(c.shape[1])))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[1]

    def subset(self, rows) -> "MixedDataset":
        return replace(self, x=self.x[rows], c=self.c[rows])


def dataset_violations(data: MixedDataset) -> list[str]:
    """Every invariant violation of ``data`` (row, column indexed, 0-based)."""
    problems: list[str] = []
    x, c = data.x, data.c
    if x.shape[0] < 1:
        problems.append("dataset has no rows")
    if x.shape[1] < 1:
        problems.append("dataset needs at least one continuous column")
    if c.shape[0] != x.shape[0]:
        problems.append(f"row count mismatch: {x.shape[0]} continuous vs {c.shape[0]} categorical")
        return problems
    if len(data.cards) != c.shape[1]:
        problems.append(f"{len(data.cards)} cardinalities given for {c.shape[1]} categorical columns")
        return problems
    for i, j in zip(*np.nonzero(~np.isfinite(x))):
        problems.append(f"non-finite continuous value at ({i},{j})")
    for j, d in enumerate(data.cards):
        if d < 2:
            problems.append(f"cardinality {d} < 2 for categorical column {j}")
        bad = np.nonzero((c[:, j] < 0) | (c[:, j] >= d))[0]
        for i in bad:
            problems.append(f"category out of range at ({i},{j})")
    return problems


def validate_dataset(data: MixedDataset) -> MixedDataset:
    """Return ``data`` unchanged, or raise with the full violation list."""
    problems = dataset_violations(data)
    if problems:
        raise DatasetValidationError(problems)
    return data


@dataclass(frozen=True)
class StandardizationTransform:
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "sds", np.asarray(self.sds, dtype=float))
        if np.any(self.sds <= 0):
            raise DomainError("standard deviations must be positive")

    @classmethod
    def identity(cls, q: int) -> "StandardizationTransform":
        return cls(np.zeros(q), np.ones(q))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.means) / self.sds

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.sds + self.means

    def apply_dataset(self, data: MixedDataset) -> MixedDataset:
        return replace(data, x=self.apply(data.x))

    def apply_truth(self, truth: "GroundTruth") -> "GroundTruth":
        """Map Gaussian component parameters into standardized coordinates."""
        inv_sd = 1.0 / self.sds
        sigma = truth.sigma * inv_sd[None, :, None] * inv_sd[None, None, :]
        return replace(truth, mu=self.apply(truth.mu), sigma=sigma)


def standardize(data: MixedDataset) -> tuple[MixedDataset, StandardizationTransform]:
    """Center and scale each continuous column (sample sd, n-1 denominator)."""
    if data.n < 2:
        raise DegenerateColumnError("standardization needs at least two rows")
    means = data.x.mean(axis=0)
    sds = data.x.std(axis=0, ddof=1)
    flat = np.nonzero(~(sds > 0))[0]
    if flat.size:
        raise DegenerateColumnError(f"constant continuous column(s): {flat.tolist()}")
    transform = StandardizationTransform(means, sds)
    return transform.apply_dataset(data), transform


@dataclass(frozen=True)
class PriorHyperparameters:
    """Conjugate prior constants shared by all K components."""

    m: np.ndarray
    beta: float
    nu: float
    phi: np.ndarray
    alpha: float
    eta: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.m, dtype=float))
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, dtype=float)))
        q = m.shape[1]
        if phi.shape != (q, q):
            raise ConfigurationError(f"phi must be {q}x{q}")
        if not (self.beta > 0 and self.alpha > 0 and np.all(self.eta > 0)):
            raise ConfigurationError("beta, alpha and eta must be strictly positive")
        if not self.nu > q - 1:
            raise ConfigurationError(f"nu must exceed q - 1 = {q - 1}")

    @property
    def K(self) -> int:
        return self.m.shape[0]

    @property
    def q(self) -> int:
        return self.m.shape[1]


def default_priors(data: MixedDataset, K: int) -> PriorHyperparameters:
    """Weakly informative defaults for standardized data."""
    if K < 1:
        raise ConfigurationError("K must be at least 1")
    q = data.q
    return PriorHyperparameters(
        m=np.zeros((K, q)),
        beta=1.0,
        nu=float(q + K + 1),
        phi=0.25 * np.eye(q),
        alpha=1.0 / K,
        eta=np.array([1.0 / d for d in data.cards], dtype=float),
    )


@dataclass
class VariationalParameters:
    """Mean-field state: Dirichlet, Normal-Wishart and Dirichlet factors plus r.

    ``eta_hat[j]`` has shape (K, d_j). ``r`` is the responsibility matrix the
    global factors were computed from (or the latest local update, inside
    :func:`mixvi.cavi.fit`).
    """

    alpha_hat: np.ndarray
    m_hat: np.ndarray
    beta_hat: np.ndarray
    nu_hat: np.ndarray
    phi_hat: np.ndarray
    eta_hat: list[np.ndarray]
    r: np.ndarray = field(default=None)

    @property
    def K(self) -> int:
        return self.alpha_hat.shape[0]

    @property
    def q(self) -> int:
        return self.m_hat.shape[1]

    def weights(self) -> np.ndarray:
        return self.alpha_hat / component_sum(self.alpha_hat)

    def sigma_mean(self) -> np.ndarray:
        """Posterior mean of each covariance, phi_hat / (nu_hat - q - 1)."""
        denom = self.nu_hat - self.q - 1
        if np.any(denom <= 0):
            raise DomainError("inverse-Wishart mean undefined for nu_hat <= q + 1")
        return self.phi_hat / denom[:, None, None]

    def psi_mean(self) -> list[np.ndarray]:
        return [e / e.sum(axis=1, keepdims=True) for e in self.eta_hat]

    def permuted(self, order) -> "VariationalParameters":
        """Reorder components so that new component k is old ``order[k]``."""
        order = np.asarray(order)
        return VariationalParameters(
            alpha_hat=self.alpha_hat[order],
            m_hat=self.m_hat[order],
            beta_hat=self.beta_hat[order],
            nu_hat=self.nu_hat[order],
            phi_hat=self.phi_hat[order],
            eta_hat=[e[order] for e in self.eta_hat],
            r=None if self.r is None else self.r[:, order],
        )


@dataclass(frozen=True)
class GroundTruth:
    """Data-generating parameters; ``psi[j]`` has shape (K, d_j)."""

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    psi: list[np.ndarray]
    z: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        object.__setattr__(self, "mu", np.atleast_2d(np.asarray(self.mu, dtype=float)))
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 1:
            sigma = sigma.reshape(-1, 1, 1)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "psi", [np.asarray(t, dtype=float) for t in self.psi])

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def q(self) -> int:
        return self.mu.shape[1]

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.psi)
