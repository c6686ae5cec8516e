import itertools
import math

import numpy as np
import pytest

from mixshrink.core import MixtureParams
from mixshrink.metrics import (
    ConfusionCounts,
    align_labels,
    confusion_counts,
    confusion_metrics,
    evaluate_fit,
    mixture_probability,
    predict_binary,
    rates,
    sse_beta,
    sse_pi,
    summarize,
)


def _truth3():
    return MixtureParams([0.3, 0.4, 0.3], [[2.85, -10.0, -5.11], [10.0, 9.9, 5.11],
                                            [-3.84, 9.9, 5.11]])


def test_align_identity_and_swap():
    truth = _truth3()
    assert align_labels(truth, truth) == (0, 1, 2)
    swapped = truth.permuted([1, 0, 2])
    perm = align_labels(swapped, truth)
    assert perm == (1, 0, 2)
    assert sse_beta(swapped.permuted(perm), truth) == 0.0


def test_align_matches_independent_enumeration(rng):
    truth = _truth3()
    for _ in range(25):
        est = MixtureParams(rng.dirichlet([1, 1, 1]) * 0.999 + 0.001 / 3,
                            truth.betas + 6 * rng.standard_normal((3, 3)))
        best = min(itertools.permutations(range(3)),
                   key=lambda s: sum(np.sum((est.betas[s[j]] - truth.betas[j]) ** 2)
                                     for j in range(3)))
        assert align_labels(est, truth) == best


def test_align_shape_mismatch():
    with pytest.raises(ValueError):
        align_labels(MixtureParams([1.0], [[0.0, 1.0]]), _truth3())


def test_sse_examples(rng):
    truth = _truth3()
    assert sse_beta(truth, truth) == 0.0
    betas = truth.betas.copy()
    betas[1, 2] += 3.0
    assert sse_beta(MixtureParams(truth.pi, betas), truth) == pytest.approx(3.0)
    est = MixtureParams(truth.pi, truth.betas + rng.standard_normal((3, 3)))
    by_hand = math.sqrt(sum((est.betas[j, k] - truth.betas[j, k]) ** 2
                            for j in range(3) for k in range(3)))
    assert sse_beta(est, truth) == pytest.approx(by_hand, rel=1e-14)
    assert sse_pi([0.7, 0.3], [0.7, 0.3]) == 0.0
    assert sse_pi([0.6, 0.4], [0.7, 0.3]) == pytest.approx(math.sqrt(0.02))


def test_sse_pi_uses_aligned_order():
    truth = MixtureParams([0.7, 0.3], [[1.0, 3.0], [-1.0, -1.0]])
    est = MixtureParams([0.3, 0.7], [[-1.0, -1.0], [1.0, 3.0]])
    m = evaluate_fit(est, truth, np.ones((4, 2)), np.array([1, 0, 1, 1]))
    assert m["sqrt_sse_pi"] == 0.0
    assert m["sqrt_sse_pi_raw"] == pytest.approx(math.sqrt(0.32))
    assert m["sqrt_sse_beta"] == 0.0


def test_prediction_rules():
    X = np.column_stack([np.ones(3), [0.0, 1.0, -1.0]])
    zero = MixtureParams([1.0], [[0.0, 0.0]])
    assert predict_binary(zero, X).tolist() == [1, 1, 1]
    high = MixtureParams([0.5, 0.5], [[5.0, 0.0], [3.0, 0.0]])
    assert predict_binary(high, X).tolist() == [1, 1, 1]
    mix = MixtureParams([0.6, 0.4], [[-1.0, 2.0], [2.0, -1.0]])
    direct = [0.6 / (1 + math.exp(-(-1 + 2 * x))) + 0.4 / (1 + math.exp(-(2 - x)))
              for x in X[:, 1]]
    np.testing.assert_allclose(mixture_probability(mix, X), direct, rtol=1e-14)
    assert predict_binary(mix, X).tolist() == [int(v >= 0.5) for v in direct]
    dominant = [1 / (1 + math.exp(-(-1 + 2 * x))) for x in X[:, 1]]
    assert predict_binary(mix, X, "max_component").tolist() == [int(v >= 0.5) for v in dominant]
    with pytest.raises(ValueError):
        predict_binary(mix, X, "vote")


def test_confusion_examples():
    assert confusion_metrics([1, 0, 1], [1, 0, 1]) == (0.0, 1.0, 1.0)
    err, sens, spec = confusion_metrics([1, 1, 1], [0, 0, 0])
    assert (err, sens, spec) == (1.0, None, 0.0)
    counts = ConfusionCounts(TP=3, TN=4, FP=2, FN=1)
    err, sens, spec = rates(counts)
    assert err == pytest.approx(0.3) and sens == 0.75 and spec == pytest.approx(2 / 3)
    pred = [1, 1, 1, 0, 0, 0, 0, 1, 1, 0]
    actual = [1, 1, 1, 0, 0, 0, 0, 0, 0, 1]
    assert confusion_counts(pred, actual) == counts
    with pytest.raises(ValueError):
        confusion_counts([1, 0], [1])


def test_summarize_examples():
    def mlu(s):
        return (s.median, s.lower, s.upper)

    assert mlu(summarize([2.5] * 7)) == (2.5, 2.5, 2.5)
    assert mlu(summarize([4.0])) == (4.0, 4.0, 4.0)
    with pytest.raises(ValueError):
        summarize([])


def test_summarize_quantile_oracle():
    values = list(range(1, 1001))

    def linear_quantile(sorted_vals, q):
        h = (len(sorted_vals) - 1) * q
        lo = math.floor(h)
        return sorted_vals[lo] + (h - lo) * (sorted_vals[min(lo + 1, len(sorted_vals) - 1)]
                                             - sorted_vals[lo])

    s = summarize(values)
    assert s.median == pytest.approx(500.5)
    assert s.lower == pytest.approx(linear_quantile(values, 0.025)) == pytest.approx(25.975)
    assert s.upper == pytest.approx(linear_quantile(values, 0.975)) == pytest.approx(975.025)


def test_summarize_skips_missing():
    s = summarize([1.0, None, 3.0, float("nan"), 2.0])
    assert (s.median, s.n_used, s.n_missing) == (2.0, 3, 2)


def test_evaluate_fit_without_truth():
    est = MixtureParams([1.0], [[0.0, 1.0]])
    m = evaluate_fit(est, None, np.column_stack([np.ones(2), [1.0, -1.0]]), np.array([1, 0]))
    assert set(m) == {"error", "sensitivity", "specificity"}
    assert m["error"] == 0.0
