"""Per-partition M-step solvers: ML, ridge and Liu-type IRWLS.

Every solver works on the observations currently classified to one
component and maximizes the unweighted within-partition logistic
log-likelihood, optionally penalized:

* ML     ``l(beta)``
* ridge  ``l(beta) - lam/2 * beta'beta``
* LT     ``l(beta) - lam/2 * beta'beta - d * beta_ridge'beta``

The IRWLS update ``U^-1 X'W V`` is evaluated in the algebraically equal
form ``U^-1 (X'WX beta + X'(y - p))`` so that tiny weights never get
inverted, and each step is halved until the objective does not decrease.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _kernels
from .core import PROB_EPS, bernoulli_logpmf

LAMBDA_MAX = 1e6
DIVERGENCE_BOUND = 1e4
# Eigenvalue ratio below which the normal matrix counts as singular.
RCOND_MIN = 1e-15
MAX_HALVINGS = 30
D_GRID = np.round(np.arange(-50, 51) * 0.1, 10)


class SolveStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    SOLVE_FAILURE = "solve_failure"
    SEPARATION = "separation"


@dataclass(frozen=True)
class SolveResult:
    beta: np.ndarray
    status: SolveStatus
    iterations: int

    @property
    def failed(self) -> bool:
        return self.status is SolveStatus.SOLVE_FAILURE


def fitted_probs(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.clip(expit(X @ beta), PROB_EPS, 1.0 - PROB_EPS)


def irwls_weights(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Diagonal of W: ``exp(eta) / (1 + exp(eta))**2``, always in (0, 0.25]."""
    p = fitted_probs(X, beta)
    return p * (1.0 - p)


def working_response(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """V = X beta + W^-1 (y - g^-1(X beta))."""
    p = fitted_probs(X, beta)
    return X @ beta + (y - p) / (p * (1.0 - p))


def normal_matrix(X: np.ndarray, beta: np.ndarray, lam: float = 0.0) -> np.ndarray:
    """U = X'WX + lam I evaluated at ``beta``."""
    w = irwls_weights(X, beta)
    G = (X.T * w) @ X
    G = 0.5 * (G + G.T)
    if lam:
        G[np.diag_indices_from(G)] += lam
    return G


_STATUS = {
    _kernels.CONVERGED: SolveStatus.CONVERGED,
    _kernels.MAX_ITERS: SolveStatus.MAX_ITERS,
    _kernels.SOLVE_FAILURE: SolveStatus.SOLVE_FAILURE,
    _kernels.SEPARATION: SolveStatus.SEPARATION,
}


def _irwls(X, y, beta_init, lam, correction, inner_iters, inner_tol, divergence_bound):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    beta_init = np.array(beta_init, dtype=float)
    if correction is None:
        correction = np.zeros_like(beta_init)
    if divergence_bound is None:
        divergence_bound = np.inf
    beta, code, iters = _kernels.irwls(
        X, y, beta_init, float(lam), correction, int(inner_iters), float(inner_tol),
        float(divergence_bound), RCOND_MIN, MAX_HALVINGS)
    return SolveResult(beta, _STATUS[code], iters)


def irwls_ml(X, y, beta_init, inner_iters: int = 25, inner_tol: float = 1e-8,
             divergence_bound: float = DIVERGENCE_BOUND) -> SolveResult:
    """Unpenalized IRWLS, ``beta <- (X'WX)^-1 X'WV``.

    Returns ``SOLVE_FAILURE`` (with the last finite iterate) when ``X'WX``
    is numerically singular and ``SEPARATION`` when any coefficient leaves
    ``[-divergence_bound, divergence_bound]``.
    """
    return _irwls(X, y, beta_init, 0.0, None, inner_iters, inner_tol, divergence_bound)


def irwls_ridge(X, y, beta_init, lam: float, inner_iters: int = 25,
                inner_tol: float = 1e-8) -> SolveResult:
    """Ridge IRWLS, ``beta <- (X'WX + lam I)^-1 X'WV``.

    ``lam == 0`` falls back to the unpenalized update (and its failure modes).
    """
    if lam < 0:
        raise ValueError(f"ridge parameter must be nonnegative, got {lam}")
    bound = DIVERGENCE_BOUND if lam == 0 else None
    return _irwls(X, y, beta_init, float(lam), None, inner_iters, inner_tol, bound)


def irwls_lt(X, y, beta_init, lam: float, d: float, beta_ridge, inner_iters: int = 25,
             inner_tol: float = 1e-8) -> SolveResult:
    """Liu-type IRWLS, ``beta <- (X'WX + lam I)^-1 (X'WV - d * beta_ridge)``.

    With ``d == 0`` the iterates coincide exactly with :func:`irwls_ridge`.
    """
    if lam <= 0:
        raise ValueError(f"Liu-type estimation needs lam > 0, got {lam}")
    correction = float(d) * np.asarray(beta_ridge, dtype=float)
    return _irwls(X, y, beta_init, float(lam), correction, inner_iters, inner_tol, None)


# -- objectives (used for diagnostics and gradient checks) ------------------


def partition_loglik(beta, X, y) -> float:
    return float(np.sum(bernoulli_logpmf(y, X @ beta)))


def partition_score(beta, X, y) -> np.ndarray:
    return X.T @ (y - expit(X @ beta))


def ridge_objective(beta, X, y, lam) -> float:
    beta = np.asarray(beta, dtype=float)
    return partition_loglik(beta, X, y) - 0.5 * lam * beta @ beta


def ridge_gradient(beta, X, y, lam) -> np.ndarray:
    return partition_score(beta, X, y) - lam * np.asarray(beta, dtype=float)


def lt_objective(beta, X, y, lam, d, beta_ridge) -> float:
    beta = np.asarray(beta, dtype=float)
    return ridge_objective(beta, X, y, lam) - d * np.asarray(beta_ridge) @ beta


def lt_gradient(beta, X, y, lam, d, beta_ridge) -> np.ndarray:
    return ridge_gradient(beta, X, y, lam) - d * np.asarray(beta_ridge, dtype=float)


# -- penalty selection -------------------------------------------------------


def _plug_in_lambda(beta, p, lambda_max):
    beta = np.asarray(beta, dtype=float)
    ss = float(beta @ beta)
    if ss * lambda_max <= p + 1:
        return float(lambda_max)
    return (p + 1) / ss


def select_lambda_ml(beta_ml, p: int, lambda_max: float = LAMBDA_MAX) -> float:
    """Ridge parameter ``(p + 1) / beta_ml'beta_ml``, capped at ``lambda_max``."""
    return _plug_in_lambda(beta_ml, p, lambda_max)


def select_lambda_ridge(beta_ridge, p: int, lambda_max: float = LAMBDA_MAX) -> float:
    """Liu-type ridge parameter ``(p + 1) / beta_ridge'beta_ridge``, capped."""
    return _plug_in_lambda(beta_ridge, p, lambda_max)


def _mse_pieces(lam, X, beta_ref):
    beta_ref = np.asarray(beta_ref, dtype=float)
    p = fitted_probs(X, beta_ref)
    w = p * (1.0 - p)
    G = (X.T * w) @ X
    A = np.linalg.inv(G + lam * np.eye(G.shape[0]))
    A = 0.5 * (A + A.T)
    v = X.T @ (w * p)
    return G, A, v, beta_ref


def lt_mse_terms(d: float, lam: float, X, y, beta_ref) -> tuple[float, float]:
    """(variance, squared bias) parts of :func:`lt_mse`."""
    G, A, v, beta_ref = _mse_pieces(lam, X, beta_ref)
    B = A @ (G - d * np.eye(G.shape[0])) @ A
    bias = B @ v - beta_ref
    return float(np.trace(B @ G @ B)), float(bias @ bias)


def lt_mse(d: float, lam: float, X, y, beta_ref) -> float:
    """Estimated MSE of the Liu-type estimator for bias parameter ``d``.

    Variance ``tr[B G B]`` plus squared bias ``||B X'W g(X beta_ref) - beta_ref||^2``
    with ``G = X'WX``, ``B = A (G - d I) A`` and ``A = (G + lam I)^-1``; all
    matrices are evaluated at ``beta_ref``, which stands in for the truth.
    ``y`` is accepted for interface symmetry; the estimate does not use it.
    """
    var, bias_sq = lt_mse_terms(d, lam, X, y, beta_ref)
    return var + bias_sq


def lt_mse_coefficients(lam: float, X, y, beta_ref) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` with ``lt_mse(d) = a d^2 + b d + c``."""
    G, A, v, beta_ref = _mse_pieces(lam, X, beta_ref)
    P0 = A @ G @ A
    P1 = A @ A
    r0 = P0 @ v - beta_ref
    r1 = P1 @ v
    a = np.trace(P1 @ G @ P1) + r1 @ r1
    b = -2.0 * (np.trace(P1 @ G @ P0) + r0 @ r1)
    c = np.trace(P0 @ G @ P0) + r0 @ r0
    return float(a), float(b), float(c)


def select_d(lam: float, X, y, beta_ridge) -> float:
    """MSE-minimizing Liu-type bias parameter (vertex of the quadratic).

    Falls back to the best point of a grid on [-5, 5] if the quadratic is
    not strictly convex numerically.
    """
    a, b, _ = lt_mse_coefficients(lam, X, y, beta_ridge)
    if a > 0.0 and np.isfinite(a) and np.isfinite(b):
        return -b / (2.0 * a)
    values = [lt_mse(d, lam, X, y, beta_ridge) for d in D_GRID]
    return float(D_GRID[int(np.nanargmin(values))])


# -- M-step solver handles ---------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    inner_iters: int = 25
    inner_tol: float = 1e-8
    single_newton_step: bool = False
    divergence_bound: float = DIVERGENCE_BOUND
    lambda_max: float = LAMBDA_MAX

    @property
    def iters(self) -> int:
        return 1 if self.single_newton_step else self.inner_iters


@dataclass(frozen=True)
class ComponentUpdate:
    """Outcome of one M-step solve on one partition."""

    beta: np.ndarray
    status: SolveStatus
    lam: float | None = None
    d: float | None = None
    lambda_capped: bool = False


class MLSolver:
    name = "ML"

    def __init__(self, options: SolverOptions | None = None):
        self.options = options or SolverOptions()

    def _ml(self, X, y, beta):
        o = self.options
        return irwls_ml(X, y, beta, o.iters, o.inner_tol, o.divergence_bound)

    def update(self, X, y, beta) -> ComponentUpdate:
        res = self._ml(X, y, beta)
        return ComponentUpdate(res.beta, res.status)


class RidgeSolver(MLSolver):
    """Ridge M-step; ``lam`` comes from the partition's ML estimate."""

    name = "RIDGE"

    def _ridge(self, X, y, beta):
        o = self.options
        ml = self._ml(X, y, beta)
        lam = select_lambda_ml(ml.beta, X.shape[1] - 1, o.lambda_max)
        res = irwls_ridge(X, y, beta, lam, o.iters, o.inner_tol)
        return res, lam

    def update(self, X, y, beta) -> ComponentUpdate:
        res, lam = self._ridge(X, y, beta)
        return ComponentUpdate(res.beta, res.status, lam=lam,
                               lambda_capped=lam >= self.options.lambda_max)


class LTSolver(RidgeSolver):
    """Liu-type M-step: ridge estimate, then ``lam`` from it, then ``d`` by MSE."""

    name = "LT"

    def update(self, X, y, beta) -> ComponentUpdate:
        o = self.options
        ridge, _ = self._ridge(X, y, beta)
        beta_r = ridge.beta
        lam = select_lambda_ridge(beta_r, X.shape[1] - 1, o.lambda_max)
        d = select_d(lam, X, y, beta_r)
        res = irwls_lt(X, y, beta, lam, d, beta_r, o.iters, o.inner_tol)
        return ComponentUpdate(res.beta, res.status, lam=lam, d=d,
                               lambda_capped=lam >= o.lambda_max)


SOLVERS = {cls.name: cls for cls in (MLSolver, RidgeSolver, LTSolver)}


def make_solver(name: str, options: SolverOptions | None = None):
    try:
        return SOLVERS[name.upper()](options)
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
