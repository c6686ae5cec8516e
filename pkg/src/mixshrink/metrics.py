"""Estimation and prediction criteria plus Monte Carlo summaries."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import MixtureParams, inverse_link


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    TN: int
    FP: int
    FN: int

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN


def align_labels(est: MixtureParams, truth: MixtureParams) -> tuple[int, ...]:
    """Permutation ``sigma`` minimizing ``sum_j ||est.betas[sigma[j]] - truth.betas[j]||^2``.

    Exhaustive over all M! orderings; ties resolve to the lexicographically
    first permutation.
    """
    if est.betas.shape != truth.betas.shape:
        raise ValueError(f"shape mismatch: {est.betas.shape} vs {truth.betas.shape}")
    M = truth.M
    cost = ((est.betas[:, None, :] - truth.betas[None, :, :]) ** 2).sum(axis=2)
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(M)):
        c = sum(cost[perm[j], j] for j in range(M))
        if c < best_cost:
            best, best_cost = perm, c
    return best


def sse_beta(est_aligned: MixtureParams, truth: MixtureParams) -> float:
    """Square root of the summed squared coefficient errors over all components."""
    diff = np.asarray(est_aligned.betas) - np.asarray(truth.betas)
    return float(np.sqrt(np.sum(diff**2)))


def sse_pi(est_pi, truth_pi) -> float:
    diff = np.asarray(est_pi, dtype=float) - np.asarray(truth_pi, dtype=float)
    return float(np.sqrt(diff @ diff))


def mixture_probability(params: MixtureParams, X: np.ndarray) -> np.ndarray:
    return inverse_link(X @ params.betas.T) @ params.pi


def predict_binary(params: MixtureParams, X: np.ndarray, rule: str = "mixture") -> np.ndarray:
    """Predicted 0/1 responses for rows of ``X`` (intercept column included).

    ``rule="mixture"`` thresholds ``sum_j pi_j p_j(x)`` at 0.5 (ties predict 1).
    ``rule="max_component"`` thresholds the probability of the component with
    the largest mixing weight, the only posterior available without ``y``.
    """
    if rule == "mixture":
        prob = mixture_probability(params, X)
    elif rule == "max_component":
        prob = inverse_link(X @ params.betas[int(np.argmax(params.pi))])
    else:
        raise ValueError(f"unknown prediction rule {rule!r}")
    return (prob >= 0.5).astype(int)


def confusion_counts(pred, actual) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool)
    actual = np.asarray(actual).astype(bool)
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {actual.shape}")
    return ConfusionCounts(
        TP=int(np.sum(pred & actual)),
        TN=int(np.sum(~pred & ~actual)),
        FP=int(np.sum(pred & ~actual)),
        FN=int(np.sum(~pred & actual)),
    )


def rates(counts: ConfusionCounts) -> tuple[float, float | None, float | None]:
    """(Error, Sensitivity, Specificity); undefined ratios come back as None."""
    error = (counts.FP + counts.FN) / counts.total
    sens = counts.TP / (counts.TP + counts.FN) if counts.TP + counts.FN else None
    spec = counts.TN / (counts.TN + counts.FP) if counts.TN + counts.FP else None
    return error, sens, spec


def confusion_metrics(pred, actual) -> tuple[float, float | None, float | None]:
    return rates(confusion_counts(pred, actual))


@dataclass(frozen=True)
class CriterionSummary:
    median: float
    lower: float
    upper: float
    n_used: int
    n_missing: int = 0


def summarize(values) -> CriterionSummary:
    """Median with 2.5 / 97.5 percentiles (linear interpolation); None/NaN are skipped."""
    vals = [v for v in values if v is not None and not math.isnan(v)]
    missing = len(values) - len(vals)
    if not vals:
        raise ValueError("summarize needs at least one finite value")
    arr = np.asarray(vals, dtype=float)
    lo, med, hi = np.percentile(arr, [2.5, 50.0, 97.5])
    return CriterionSummary(float(med), float(lo), float(hi), len(vals), missing)


CRITERIA = ("sqrt_sse_beta", "sqrt_sse_pi", "sqrt_sse_pi_raw", "error", "sensitivity",
            "specificity")


@dataclass(frozen=True)
class ReplicationSummary:
    """Per-method, per-criterion summaries for one experiment cell."""

    scenario: str
    criteria: dict[str, dict[str, CriterionSummary | None]]
    n_reps: int
    n_reps_effective: dict[str, int]
    failures: dict[str, dict[str, int]]

    @property
    def methods(self) -> list[str]:
        return list(self.criteria)


def evaluate_fit(est: MixtureParams, truth: MixtureParams | None, X_valid, y_valid,
                 rule: str = "mixture") -> dict[str, float | None]:
    """All per-replication criteria for one fitted model."""
    out: dict[str, float | None] = {}
    if truth is not None:
        perm = align_labels(est, truth)
        aligned = est.permuted(perm)
        out["sqrt_sse_beta"] = sse_beta(aligned, truth)
        out["sqrt_sse_pi"] = sse_pi(aligned.pi, truth.pi)
        out["sqrt_sse_pi_raw"] = sse_pi(est.pi, truth.pi)
    error, sens, spec = confusion_metrics(predict_binary(est, X_valid, rule), y_valid)
    out["error"] = error
    out["sensitivity"] = sens
    out["specificity"] = spec
    return out
