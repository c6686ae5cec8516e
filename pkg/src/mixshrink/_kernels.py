"""Compiled inner loops for the IRWLS solvers."""

import math

import numpy as np
from numba import njit

from .core import PROB_EPS

LOG_EPS = math.log(PROB_EPS)
LOG1M_EPS = math.log1p(-PROB_EPS)

CONVERGED = 0
MAX_ITERS = 1
SOLVE_FAILURE = 2
SEPARATION = 3

# Largest |y - p| below which a fit counts as perfectly separating.
SEPARATION_RESID = 1e-8


@njit(cache=True)
def _log_expit(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def _expit(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def penalized_loglik(X, y, beta, lam, correction):
    n, k = X.shape
    total = 0.0
    for i in range(n):
        eta = 0.0
        for c in range(k):
            eta += X[i, c] * beta[c]
        lp = _log_expit(eta) if y[i] == 1.0 else _log_expit(-eta)
        total += min(max(lp, LOG_EPS), LOG1M_EPS)
    pen = 0.0
    for c in range(k):
        pen += beta[c] * (0.5 * lam * beta[c] + correction[c])
    return total - pen


@njit(cache=True)
def _max_residual(X, y, beta):
    n, k = X.shape
    worst = 0.0
    for i in range(n):
        eta = 0.0
        for c in range(k):
            eta += X[i, c] * beta[c]
        worst = max(worst, abs(y[i] - _expit(eta)))
    return worst


@njit(cache=True)
def irwls(X, y, beta_init, lam, correction, inner_iters, inner_tol, divergence_bound,
          rcond_min, max_halvings):
    """Damped IRWLS for ``l(b) - lam/2 b'b - correction'b``; returns (beta, status, iters)."""
    n, k = X.shape
    beta = beta_init.copy()
    current = penalized_loglik(X, y, beta, lam, correction)
    G = np.empty((k, k))
    rhs = np.empty(k)
    resid = np.empty(n)
    w = np.empty(n)
    for it in range(1, inner_iters + 1):
        for i in range(n):
            eta = 0.0
            for c in range(k):
                eta += X[i, c] * beta[c]
            p = min(max(_expit(eta), PROB_EPS), 1.0 - PROB_EPS)
            w[i] = p * (1.0 - p)
            resid[i] = y[i] - p
        for a in range(k):
            for b in range(a, k):
                s = 0.0
                for i in range(n):
                    s += X[i, a] * w[i] * X[i, b]
                G[a, b] = s
                G[b, a] = s
        for a in range(k):
            s = 0.0
            for b in range(k):
                s += G[a, b] * beta[b]
            for i in range(n):
                s += X[i, a] * resid[i]
            rhs[a] = s - correction[a]
        for a in range(k):
            G[a, a] += lam
        eig = np.linalg.eigvalsh(G)
        if not (eig[0] > rcond_min * eig[k - 1]):
            return beta, SOLVE_FAILURE, it
        new = np.linalg.solve(G, rhs)
        finite = True
        for a in range(k):
            if not math.isfinite(new[a]):
                finite = False
        if not finite:
            return beta, SOLVE_FAILURE, it
        value = penalized_loglik(X, y, new, lam, correction)
        slack = 1e-10 * (1.0 + abs(current))
        for _ in range(max_halvings):
            if value >= current - slack:
                break
            for a in range(k):
                new[a] = 0.5 * (beta[a] + new[a])
            value = penalized_loglik(X, y, new, lam, correction)
        step = 0.0
        biggest = 0.0
        for a in range(k):
            step = max(step, abs(new[a] - beta[a]))
            biggest = max(biggest, abs(new[a]))
        if biggest > divergence_bound:
            return new, SEPARATION, it
        # With a finite divergence bound, a perfect fit of every response also
        # signals separation: clamped probabilities stall growth of beta.
        if math.isfinite(divergence_bound) and _max_residual(X, y, new) < SEPARATION_RESID:
            return new, SEPARATION, it
        beta = new
        current = value
        if step < inner_tol:
            return beta, CONVERGED, it
    return beta, MAX_ITERS, inner_iters
