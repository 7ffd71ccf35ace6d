"""Hard k-prototypes clustering for mixed continuous/categorical data.

Used only to seed CAVI and the Gibbs sampler. Continuous columns contribute
squared Euclidean distance; each categorical column contributes ``gamma``
times a 0/1 mismatch against the cluster mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class KPrototypesResult:
    labels: np.ndarray
    cost: float
    centers: np.ndarray
    modes: np.ndarray


def _distances(x, c, centers, modes, gamma):
    d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    if c.shape[1]:
        d = d + gamma * (c[:, None, :] != modes[None, :, :]).sum(axis=2)
    return d


def _modes(c, cards, mask):
    out = np.zeros(len(cards), dtype=int)
    for j, d in enumerate(cards):
        out[j] = int(np.argmax(np.bincount(c[mask, j], minlength=d)))
    return out


def _seed_prototypes(x, c, K, gamma, rng):
    """k-means++ style D^2 seeding under the mixed cost."""
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    best = _distances(x, c, x[idx], c[idx], gamma)[:, 0]
    for _ in range(1, K):
        total = best.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(remaining)) if remaining.size else int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=best / total))
        idx.append(nxt)
        best = np.minimum(best, _distances(x, c, x[[nxt]], c[[nxt]], gamma)[:, 0])
    return x[idx].copy(), c[idx].copy()


def _single_run(x, c, cards, K, gamma, rng, max_iter):
    centers, modes = _seed_prototypes(x, c, K, gamma, rng)
    labels = None
    for _ in range(max_iter):
        dist = _distances(x, c, centers, modes, gamma)
        new = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(K):
            mask = labels == k
            if not mask.any():
                continue
            centers[k] = x[mask].mean(axis=0)
            if c.shape[1]:
                modes[k] = _modes(c, cards, mask)
    dist = _distances(x, c, centers, modes, gamma)
    labels = np.argmin(dist, axis=1)
    cost = float(dist[np.arange(x.shape[0]), labels].sum())
    return KPrototypesResult(labels, cost, centers, modes)


def kprototypes(x, c, cards, K: int, rng: np.random.Generator, n_init: int = 10,
                max_iter: int = 100, gamma: float | None = None) -> KPrototypesResult:
    """Best of ``n_init`` restarts by total within-cluster cost."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=int).reshape(x.shape[0], -1)
    n = x.shape[0]
    if K < 1 or n < K:
        raise ConfigurationError(f"k-prototypes needs 1 <= K <= n (K={K}, n={n})")
    if gamma is None:
        gamma = float(np.mean(x.var(axis=0, ddof=1))) if n > 1 else 1.0
    best = None
    for _ in range(n_init):
        res = _single_run(x, c, cards, K, gamma, rng, max_iter)
        if best is None or res.cost < best.cost:
            best = res
    return best
