"""Stochastic EM for mixtures of logistic regressions.

Each iteration computes posterior responsibilities (E-step), draws a hard
classification from them (S-step) and refits every component on its own
partition with a pluggable solver (M-step).  A run stops when the
observed-data log-likelihood changes by less than ``loglik_tol``, when
``max_iters`` is reached, when a partition holds fewer than
``min_partition_size`` subjects, or when the ML solver hits a singular
normal matrix.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import Dataset, MixtureParams, component_log_densities, mixture_loglik
from .solvers import ComponentUpdate, SolverOptions, SolveStatus, make_solver

logger = logging.getLogger(__name__)


class Termination(str, enum.Enum):
    TOLERANCE = "tolerance"
    MAX_ITERS = "max_iters"
    DEGENERATE_PARTITION = "degenerate_partition"
    SOLVE_FAILURE = "solve_failure"


@dataclass(frozen=True)
class HardAssignment:
    labels: np.ndarray
    partition_sizes: np.ndarray

    @classmethod
    def from_labels(cls, labels, M: int) -> HardAssignment:
        labels = np.asarray(labels, dtype=np.intp)
        return cls(labels, np.bincount(labels, minlength=M))

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 500
    loglik_tol: float = 1e-6
    min_partition_size: int = 2
    n_restarts: int = 9
    seed: int = 0
    solver: str = "LT"
    # Return the final SEM iterate (True) or the best one along the trace.
    terminal_iterate: bool = True
    inner_iters: int = 25
    inner_tol: float = 1e-8
    single_newton_step: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.loglik_tol > 0:
            raise ValueError("loglik_tol must be positive")
        if self.min_partition_size < 2:
            raise ValueError("min_partition_size must be at least 2")
        if self.n_restarts < 0:
            raise ValueError("n_restarts must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "solver", self.solver.upper())
        make_solver(self.solver)  # validates the name

    def solver_options(self) -> SolverOptions:
        return SolverOptions(inner_iters=self.inner_iters, inner_tol=self.inner_tol,
                             single_newton_step=self.single_newton_step)


@dataclass(frozen=True)
class RunSummary:
    restart: int
    final_loglik: float
    iterations: int
    termination: Termination
    usable: bool


@dataclass(frozen=True)
class FitResult:
    params: MixtureParams
    final_loglik: float
    iterations: int
    converged: bool
    termination: Termination
    loglik_trace: np.ndarray
    penalty_report: tuple = ()
    # False when no M-step completed, so ``params`` is just the starting point.
    usable: bool = True
    restart: int = 0
    runs: tuple[RunSummary, ...] = field(default=(), repr=False)
    solver_events: dict = field(default_factory=dict, repr=False)


def e_step(params: MixtureParams, data: Dataset) -> np.ndarray:
    """(n, M) posterior responsibilities, normalized in log space."""
    logd = component_log_densities(params, data)
    return np.exp(logd - logsumexp(logd, axis=1, keepdims=True))


def s_step(tau: np.ndarray, rng: np.random.Generator) -> HardAssignment:
    """Draw one label per row from Categorical(tau_i) via the Gumbel-max trick.

    Gumbel-max keeps the draw equivariant under relabeling of components when
    the noise columns are permuted alongside ``tau``.
    """
    tau = np.asarray(tau, dtype=float)
    noise = rng.gumbel(size=tau.shape)
    with np.errstate(divide="ignore"):
        scores = np.log(tau) + noise
    return HardAssignment.from_labels(np.argmax(scores, axis=1), tau.shape[1])


def check_degeneracy(assignment: HardAssignment, config: FitConfig) -> bool:
    """True when some partition is smaller than ``config.min_partition_size``."""
    return bool(np.any(assignment.partition_sizes < config.min_partition_size))


def update_mixing_proportions(assignment: HardAssignment) -> np.ndarray:
    sizes = assignment.partition_sizes
    if np.any(sizes == 0):
        raise ValueError(f"empty partition in sizes {sizes.tolist()}")
    return sizes / assignment.n


def initialize(data: Dataset, M: int, rng: np.random.Generator) -> MixtureParams:
    """Equal mixing weights and coefficients uniform on [-0.5, 0.5]."""
    betas = rng.uniform(-0.5, 0.5, size=(M, data.p + 1))
    return MixtureParams(np.full(M, 1.0 / M), betas)


def m_step(data: Dataset, assignment: HardAssignment, params: MixtureParams, solver):
    pi = update_mixing_proportions(assignment)
    updates: list[ComponentUpdate] = []
    for j in range(params.M):
        idx = assignment.labels == j
        updates.append(solver.update(data.X[idx], data.y[idx], params.betas[j]))
    return pi, updates


def run_sem(data: Dataset, init: MixtureParams, config: FitConfig, rng, solver=None,
            restart: int = 0) -> FitResult:
    """One SEM chain from ``init``; ``rng`` only needs a ``gumbel`` method."""
    solver = solver or make_solver(config.solver, config.solver_options())
    params = init
    loglik = mixture_loglik(params, data)
    trace: list[float] = []
    best = (params, loglik, ())
    reports = ()
    termination = Termination.MAX_ITERS
    events: dict[str, int] = {}

    for _ in range(config.max_iters):
        tau = e_step(params, data)
        assignment = s_step(tau, rng)
        if check_degeneracy(assignment, config):
            termination = Termination.DEGENERATE_PARTITION
            break
        pi, updates = m_step(data, assignment, params, solver)
        for u in updates:
            if u.status in (SolveStatus.SEPARATION, SolveStatus.SOLVE_FAILURE):
                events[u.status.value] = events.get(u.status.value, 0) + 1
        if any(u.status is SolveStatus.SOLVE_FAILURE for u in updates):
            termination = Termination.SOLVE_FAILURE
            break
        new_params = MixtureParams(pi, np.array([u.beta for u in updates]))
        new_loglik = mixture_loglik(new_params, data)
        reports = tuple((u.lam, u.d) for u in updates)
        trace.append(new_loglik)
        if len(trace) == 1 or new_loglik > best[1]:
            best = (new_params, new_loglik, reports)
        delta = abs(new_loglik - loglik)
        params, loglik = new_params, new_loglik
        if delta < config.loglik_tol:
            termination = Termination.TOLERANCE
            break

    if config.terminal_iterate or not trace:
        chosen = (params, loglik, reports)
    else:
        chosen = best
    return FitResult(
        params=chosen[0],
        final_loglik=chosen[1],
        iterations=len(trace),
        converged=termination is Termination.TOLERANCE,
        termination=termination,
        loglik_trace=np.asarray(trace),
        penalty_report=chosen[2],
        usable=bool(trace),
        restart=restart,
        solver_events=events,
    )


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, restart]))


def fit(data: Dataset, M: int, config: FitConfig | None = None, solver=None) -> FitResult:
    """Multistart SEM; returns the usable run with the highest log-likelihood.

    Restart ``k`` draws its starting point and S-step noise from
    ``SeedSequence([config.seed, k])``.
    """
    config = config or FitConfig()
    if M < 1:
        raise ValueError("M must be at least 1")
    if data.n < M * config.min_partition_size:
        raise ValueError(
            f"n = {data.n} is too small for {M} components of at least "
            f"{config.min_partition_size} subjects"
        )
    solver = solver or make_solver(config.solver, config.solver_options())
    results = []
    for k in range(config.n_restarts + 1):
        rng = restart_rng(config.seed, k)
        init = initialize(data, M, rng)
        res = run_sem(data, init, config, rng, solver, restart=k)
        if res.termination is Termination.SOLVE_FAILURE:
            logger.debug("restart %d stopped on a singular normal matrix", k)
        results.append(res)

    usable = [r for r in results if r.usable]
    pool = usable or results
    best = max(pool, key=lambda r: r.final_loglik)
    runs = tuple(RunSummary(r.restart, r.final_loglik, r.iterations, r.termination, r.usable)
                 for r in results)
    events: dict[str, int] = {}
    for r in results:
        for key, count in r.solver_events.items():
            events[key] = events.get(key, 0) + count
    return FitResult(
        params=best.params,
        final_loglik=best.final_loglik,
        iterations=best.iterations,
        converged=best.converged,
        termination=best.termination,
        loglik_trace=best.loglik_trace,
        penalty_report=best.penalty_report,
        usable=best.usable,
        restart=best.restart,
        runs=runs,
        solver_events=events,
    )
