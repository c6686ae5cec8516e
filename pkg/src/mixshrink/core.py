"""Domain types and likelihoods for finite mixtures of logistic regressions.

Component indices are zero-based throughout the package: a mixture with
``M`` components labels them ``0 .. M-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logsumexp

# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] inside likelihoods.
PROB_EPS = 1e-12
_LOG_EPS = np.log(PROB_EPS)
_LOG1M_EPS = np.log1p(-PROB_EPS)


@dataclass(frozen=True)
class Dataset:
    """Design matrix with a leading intercept column and a binary response.

    Attributes
    ----------
    X : ndarray, shape (n, p + 1)
        First column is identically one.
    y : ndarray, shape (n,)
        Binary response coded as 0.0 / 1.0.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError(f"X must be a 2-d matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("first column of X must be the intercept (all ones)")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y must contain only 0 and 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_covariates(cls, Z: np.ndarray, y: np.ndarray) -> Dataset:
        """Prepend the intercept column to an (n, p) covariate matrix."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[0] != len(y) and Z.shape[1] == len(y):
            Z = Z.T
        return cls(np.column_stack([np.ones(Z.shape[0]), Z]), y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        """Number of covariates, excluding the intercept."""
        return self.X.shape[1] - 1

    def subset(self, idx: np.ndarray) -> Dataset:
        return Dataset(self.X[idx], self.y[idx])


@dataclass(frozen=True)
class MixtureParams:
    """Mixing proportions ``pi`` and per-component coefficients ``betas``.

    ``betas`` has shape (M, p + 1); row ``j`` holds the intercept first.
    """

    pi: np.ndarray
    betas: np.ndarray
    _validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self) -> None:
        pi = np.atleast_1d(np.asarray(self.pi, dtype=float))
        betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if self._validate:
            if betas.shape[0] != pi.shape[0]:
                raise ValueError(
                    f"{pi.shape[0]} mixing proportions but {betas.shape[0]} coefficient vectors"
                )
            if np.any(pi <= 0.0):
                raise ValueError(f"mixing proportions must be positive, got {pi}")
            if abs(pi.sum() - 1.0) > 1e-12:
                raise ValueError(f"mixing proportions sum to {pi.sum()!r}, not 1")
            if not np.all(np.isfinite(betas)):
                raise ValueError("coefficients must be finite")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "betas", betas)

    @classmethod
    def unchecked(cls, pi, betas) -> MixtureParams:
        """Build params without invariant checks (e.g. a zero mixing weight)."""
        return cls(pi, betas, _validate=False)

    @property
    def M(self) -> int:
        return self.pi.shape[0]

    def permuted(self, perm) -> MixtureParams:
        """Return params with component ``k`` taken from component ``perm[k]``."""
        perm = np.asarray(perm)
        return MixtureParams(self.pi[perm], self.betas[perm])


def inverse_link(eta):
    """Logistic function ``1 / (1 + exp(-eta))``, clamped into ``[PROB_EPS, 1 - PROB_EPS]``.

    Overflow-free for any finite input and strictly inside (0, 1).
    """
    return np.clip(expit(eta), PROB_EPS, 1.0 - PROB_EPS)


def component_prob(x, beta):
    """Success probability of a single logistic component.

    ``x`` may be one covariate row (length p + 1) or a matrix of rows.
    """
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or x.shape[-1] != beta.shape[0]:
        raise ValueError(
            f"dimension mismatch: x has {x.shape[-1]} columns, beta has shape {beta.shape}"
        )
    return inverse_link(x @ beta)


def bernoulli_logpmf(y: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """``y log p + (1 - y) log(1 - p)`` with ``p = inverse_link(eta)`` clamped.

    ``eta`` may carry a trailing component axis; ``y`` broadcasts against it.
    """
    log_p = np.clip(log_expit(eta), _LOG_EPS, _LOG1M_EPS)
    log_q = np.clip(log_expit(-eta), _LOG_EPS, _LOG1M_EPS)
    return np.where(y == 1.0, log_p, log_q)


def component_log_densities(params: MixtureParams, data: Dataset) -> np.ndarray:
    """(n, M) matrix of ``log pi_j + log f_j(y_i | x_i)``."""
    eta = data.X @ params.betas.T
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
    return log_pi[None, :] + bernoulli_logpmf(data.y[:, None], eta)


def mixture_loglik(params: MixtureParams, data: Dataset) -> float:
    """Observed-data log-likelihood of the mixture, evaluated with log-sum-exp."""
    return float(np.sum(logsumexp(component_log_densities(params, data), axis=1)))


def logistic_loglik(beta: np.ndarray, data: Dataset) -> float:
    """Single logistic regression log-likelihood ``sum(y*eta - log(1 + exp(eta)))``."""
    return float(np.sum(bernoulli_logpmf(data.y, data.X @ beta)))


def complete_loglik(params: MixtureParams, data: Dataset, labels) -> float:
    """Complete-data log-likelihood for hard component labels.

    Returns ``-inf`` when an occupied component has zero mixing weight.
    """
    labels = np.asarray(labels)
    if labels.shape != (data.n,):
        raise ValueError(f"expected {data.n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= params.M):
        raise ValueError(f"labels must lie in 0..{params.M - 1}")
    eta = np.einsum("ij,ij->i", data.X, params.betas[labels])
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi[labels])
    return float(np.sum(log_pi) + np.sum(bernoulli_logpmf(data.y, eta)))
