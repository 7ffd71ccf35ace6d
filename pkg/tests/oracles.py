"""Independent reference implementations used only by the tests.

They favour obviously-correct loops over speed and share no code with the
library beyond the data containers.
"""
import itertools
import math

import mpmath
import numpy as np


def digamma_mp(x):
    return float(mpmath.digamma(mpmath.mpf(x)))


def det_cofactor(m):
    m = [list(map(float, row)) for row in m]
    n = len(m)
    if n == 1:
        return m[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        total += (-1) ** j * m[0][j] * det_cofactor(minor)
    return total


def best_permutation(cost):
    cost = np.asarray(cost)
    K = cost.shape[0]
    best, arg = math.inf, None
    for perm in itertools.permutations(range(cost.shape[1]), K):
        c = sum(cost[i, perm[i]] for i in range(K))
        if c < best:
            best, arg = c, perm
    return np.array(arg), best


def lgamma_multi(q, a):
    return q * (q - 1) / 4 * math.log(math.pi) + sum(math.lgamma(a + (1 - j) / 2) for j in range(1, q + 1))


def naive_global(x, c, cards, r, m, beta, nu, phi, alpha, eta):
    """Hyperparameter updates by explicit summation over rows."""
    n, q = x.shape
    K = r.shape[1]
    out = {"alpha": [], "beta": [], "nu": [], "m": [], "phi": [], "eta": [[] for _ in cards]}
    for k in range(K):
        nk = 0.0
        sx = np.zeros(q)
        sxx = np.zeros((q, q))
        for i in range(n):
            nk += r[i, k]
            sx += r[i, k] * x[i]
            sxx += r[i, k] * np.outer(x[i], x[i])
        bh = beta + nk
        mh = (beta * m[k] + sx) / bh
        out["alpha"].append(alpha + nk)
        out["beta"].append(bh)
        out["nu"].append(nu + nk)
        out["m"].append(mh)
        out["phi"].append(phi - bh * np.outer(mh, mh) + beta * np.outer(m[k], m[k]) + sxx)
        for j, d in enumerate(cards):
            row = []
            for g in range(d):
                row.append(eta[j] + sum(r[i, k] for i in range(n) if c[i, j] == g))
            out["eta"][j].append(row)
    return {k: (np.array(v) if k != "eta" else [np.array(t) for t in v]) for k, v in out.items()}


def naive_local(x, c, g):
    """Responsibilities from the expectation formulas, one (i, k) at a time."""
    n, q = x.shape
    K = len(g["alpha"])
    a_sum = sum(g["alpha"])
    r = np.zeros((n, K))
    for i in range(n):
        logs = []
        for k in range(K):
            phi_inv = np.linalg.inv(g["phi"][k])
            e_logdet = q * math.log(2) + math.log(np.linalg.det(phi_inv)) + sum(
                digamma_mp((g["nu"][k] + 1 - t) / 2) for t in range(1, q + 1))
            dev = x[i] - g["m"][k]
            e_quad = g["nu"][k] * dev @ phi_inv @ dev + q / g["beta"][k]
            val = -q / 2 * math.log(2 * math.pi) + 0.5 * e_logdet - 0.5 * e_quad
            for j in range(c.shape[1]):
                eta = g["eta"][j][k]
                val += digamma_mp(eta[c[i, j]]) - digamma_mp(sum(eta))
            val += digamma_mp(g["alpha"][k]) - digamma_mp(a_sum)
            logs.append(val)
        top = max(logs)
        w = [math.exp(v - top) for v in logs]
        s = sum(w)
        r[i] = [v / s for v in w]
    return r


def quad_1d(f, lo, hi):
    from scipy import integrate

    val, _ = integrate.quad(f, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-12)
    return val


def log_evidence_single_component(x, c, cards, m, beta, nu, phi, eta):
    """Exact log marginal likelihood of a one-component model.

    Normal-Wishart evidence for the continuous block times a
    Dirichlet-multinomial for each categorical column.
    """
    n, q = x.shape
    xbar = x.mean(axis=0)
    s = (x - xbar).T @ (x - xbar)
    bn = beta + n
    nun = nu + n
    d = xbar - m
    phin = phi + s + beta * n / bn * np.outer(d, d)
    val = (-n * q / 2 * math.log(math.pi) + q / 2 * math.log(beta / bn)
           + nu / 2 * math.log(det_cofactor(phi)) - nun / 2 * math.log(det_cofactor(phin))
           + lgamma_multi(q, nun / 2) - lgamma_multi(q, nu / 2))
    for j, dj in enumerate(cards):
        counts = [int(np.sum(c[:, j] == g)) for g in range(dj)]
        val += math.lgamma(dj * eta[j]) - math.lgamma(dj * eta[j] + n)
        val += sum(math.lgamma(eta[j] + k) - math.lgamma(eta[j]) for k in counts)
    return val
