import numpy as np
import pytest
from oracles import (
    central_difference,
    logistic_data,
    lt_fixed_point_oracle,
    newton_oracle,
    ridge_oracle,
)

from mixshrink.solvers import (
    LAMBDA_MAX,
    LTSolver,
    MLSolver,
    RidgeSolver,
    SolveStatus,
    irwls_lt,
    irwls_ml,
    irwls_ridge,
    irwls_weights,
    lt_gradient,
    lt_mse,
    lt_mse_coefficients,
    lt_mse_terms,
    lt_objective,
    make_solver,
    normal_matrix,
    partition_loglik,
    partition_score,
    ridge_gradient,
    ridge_objective,
    select_d,
    select_lambda_ml,
    select_lambda_ridge,
    working_response,
)


def collinear_data(rng, n=20, noise=1e-3):
    z = rng.standard_normal(n)
    Z = np.column_stack([z, z + noise * rng.standard_normal(n), rng.standard_normal(n)])
    X = np.column_stack([np.ones(n), Z])
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ [0.3, 1.0, 1.0, -0.5])))).astype(float)
    return X, y


# -- ML --------------------------------------------------------------------


def test_ml_symmetric_design_has_zero_intercept():
    x = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    y = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    X = np.column_stack([np.ones(6), x])
    res = irwls_ml(X, y, np.zeros(2), inner_iters=100)
    assert res.status is SolveStatus.CONVERGED
    assert abs(res.beta[0]) < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_ml_matches_newton_oracle(seed):
    rng = np.random.default_rng(seed)
    data, _ = logistic_data(rng, n=20, p=2, scale=0.3)
    res = irwls_ml(data.X, data.y, np.zeros(3), inner_iters=100)
    assert res.status is SolveStatus.CONVERGED
    np.testing.assert_allclose(res.beta, newton_oracle(data.X, data.y), atol=1e-6)


def test_ml_duplicate_column_never_silent(rng):
    data, _ = logistic_data(rng, n=30, p=2)
    X = np.column_stack([data.X, data.X[:, 1]])
    res = irwls_ml(X, data.y, np.zeros(4))
    assert res.status in (SolveStatus.SOLVE_FAILURE, SolveStatus.SEPARATION)


def test_ml_flags_complete_separation():
    x = np.linspace(-2, 2, 10)
    X = np.column_stack([np.ones(10), x])
    y = (x > 0).astype(float)
    res = irwls_ml(X, y, np.zeros(2), inner_iters=200)
    assert res.status is SolveStatus.SEPARATION
    assert np.all(np.isfinite(res.beta))


# -- ridge -----------------------------------------------------------------


def test_ridge_vanishing_penalty_equals_ml(rng):
    data, _ = logistic_data(rng, n=200, p=4)
    ml = irwls_ml(data.X, data.y, np.zeros(5), inner_iters=100)
    ridge = irwls_ridge(data.X, data.y, np.zeros(5), 1e-10, inner_iters=100)
    np.testing.assert_allclose(ridge.beta, ml.beta, atol=1e-6)


def test_ridge_infinite_penalty_shrinks_to_zero(rng):
    data, _ = logistic_data(rng, n=50)
    res = irwls_ridge(data.X, data.y, np.ones(5), 1e10, inner_iters=100)
    assert np.max(np.abs(res.beta)) < 1e-6


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_ridge_matches_direct_maximization_on_collinear_data(lam):
    rng = np.random.default_rng(int(lam * 10))
    X, y = collinear_data(rng)
    res = irwls_ridge(X, y, np.zeros(4), lam, inner_iters=200, inner_tol=1e-12)
    np.testing.assert_allclose(res.beta, ridge_oracle(X, y, lam), atol=1e-6)


def test_ridge_rejects_negative_penalty():
    with pytest.raises(ValueError):
        irwls_ridge(np.ones((3, 1)), np.array([0.0, 1.0, 1.0]), np.zeros(1), -1.0)


def test_ridge_shrinkage_ordering(rng):
    data, _ = logistic_data(rng, n=100, p=4)
    norms = [np.linalg.norm(irwls_ridge(data.X, data.y, np.zeros(5), lam, 200, 1e-12).beta)
             for lam in (0.01, 0.1, 1.0, 10.0, 100.0)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_ridge_two_algebraic_forms_agree_at_ml(rng):
    data, _ = logistic_data(rng, n=80, p=3)
    beta_ml = irwls_ml(data.X, data.y, np.zeros(4), inner_iters=100, inner_tol=1e-13).beta
    w = irwls_weights(data.X, beta_ml)
    G = (data.X.T * w) @ data.X
    U = G + 0.7 * np.eye(4)
    closed_form = np.linalg.solve(U, G @ beta_ml)
    derivation_form = np.linalg.solve(U, data.X.T @ (w * working_response(data.X, data.y, beta_ml)))
    np.testing.assert_allclose(closed_form, derivation_form, atol=1e-8)


# -- Liu-type --------------------------------------------------------------


def test_lt_with_zero_d_is_ridge(rng):
    X, y = collinear_data(rng, n=40)
    beta_r = rng.standard_normal(4)
    for iters in (1, 3, 25):
        a = irwls_lt(X, y, np.zeros(4), 0.5, 0.0, beta_r, inner_iters=iters)
        b = irwls_ridge(X, y, np.zeros(4), 0.5, inner_iters=iters)
        np.testing.assert_allclose(a.beta, b.beta, rtol=0, atol=1e-12)
        assert a.iterations == b.iterations


def test_lt_matches_extended_precision_fixed_point():
    rng = np.random.default_rng(11)
    data, _ = logistic_data(rng, n=25, p=2, scale=0.4)
    lam = 1.5
    beta_r = irwls_ridge(data.X, data.y, np.zeros(3), lam, 100, 1e-13).beta
    d = 0.4 * lam
    res = irwls_lt(data.X, data.y, np.zeros(3), lam, d, beta_r, inner_iters=100,
                   inner_tol=1e-13)
    oracle = lt_fixed_point_oracle(data.X, data.y, lam, d, beta_r)
    np.testing.assert_allclose(res.beta, oracle, atol=1e-10)


def test_lt_stationarity_at_solution(rng):
    X, y = collinear_data(rng, n=40)
    lam, d = 0.8, -0.3
    beta_r = irwls_ridge(X, y, np.zeros(4), lam, 100).beta
    beta = irwls_lt(X, y, np.zeros(4), lam, d, beta_r, inner_iters=100).beta
    grad = X.T @ (y - 1 / (1 + np.exp(-(X @ beta)))) - d * beta_r - lam * beta
    assert np.max(np.abs(grad)) < 1e-5


def test_lt_requires_positive_penalty():
    with pytest.raises(ValueError):
        irwls_lt(np.ones((3, 1)), np.array([0.0, 1.0, 1.0]), np.zeros(1), 0.0, 1.0, np.ones(1))


# -- penalty parameters ----------------------------------------------------


def test_select_lambda_examples():
    assert select_lambda_ml(np.ones(5), 4) == pytest.approx(1.0)
    assert select_lambda_ml([3.0, 0.0, 0.0], 2) == pytest.approx(1 / 3)
    assert select_lambda_ml(np.zeros(5), 4) == LAMBDA_MAX
    assert select_lambda_ridge([1.0, 1.0], 1) == pytest.approx(1.0)
    assert select_lambda_ridge(np.full(5, 0.5), 4) == pytest.approx(4.0)
    assert select_lambda_ridge(np.zeros(3), 2) == LAMBDA_MAX


def _mse_instance(seed=5):
    rng = np.random.default_rng(seed)
    X, y = collinear_data(rng, n=30, noise=0.05)
    beta_r = irwls_ridge(X, y, np.zeros(4), 0.5, 100).beta
    return X, y, beta_r


def test_lt_mse_is_quadratic_in_d():
    X, y, beta_r = _mse_instance()
    ds = np.array([-1.0, 0.0, 1.0, 2.0])
    vals = np.array([lt_mse(d, 0.5, X, y, beta_r) for d in ds])
    coef, res, *_ = np.polyfit(ds, vals, 2, full=True)
    assert res.size == 0 or res[0] <= (1e-8 * np.max(np.abs(vals))) ** 2
    np.testing.assert_allclose(np.polyval(coef, ds), vals, rtol=1e-8)
    a, b, c = lt_mse_coefficients(0.5, X, y, beta_r)
    np.testing.assert_allclose([a, b, c], coef, rtol=1e-8)


def test_lt_mse_vertex_is_minimum():
    X, y, beta_r = _mse_instance()
    lam = select_lambda_ridge(beta_r, 3)
    d = select_d(lam, X, y, beta_r)
    at = lt_mse(d, lam, X, y, beta_r)
    assert at <= lt_mse(d - 0.1, lam, X, y, beta_r)
    assert at <= lt_mse(d + 0.1, lam, X, y, beta_r)
    assert at <= lt_mse(0.0, lam, X, y, beta_r)
    assert select_d(lam, X, y, beta_r) == d


def test_lt_mse_variance_decreases_in_lambda():
    X, y, beta_r = _mse_instance()
    var = [lt_mse_terms(0.0, lam, X, y, beta_r)[0] for lam in np.logspace(-2, 4, 25)]
    assert all(a > b for a, b in zip(var, var[1:]))
    assert var[-1] < 1e-6


def test_select_d_matches_fine_grid_search():
    X, y, beta_r = _mse_instance(seed=9)
    lam = 2.0
    d = select_d(lam, X, y, beta_r)
    grid = np.round(np.arange(-5000, 5001) * 1e-3, 6)
    values = [lt_mse(g, lam, X, y, beta_r) for g in grid]
    best = grid[int(np.argmin(values))]
    assert -5 < best < 5
    assert abs(d - best) < 2e-3


def test_select_d_grid_fallback(monkeypatch):
    import mixshrink.solvers as solvers

    X, y, beta_r = _mse_instance()
    monkeypatch.setattr(solvers, "lt_mse_coefficients", lambda *a: (0.0, 1.0, 0.0))
    d = solvers.select_d(1.0, X, y, beta_r)
    values = {g: lt_mse(g, 1.0, X, y, beta_r) for g in solvers.D_GRID}
    assert d in solvers.D_GRID
    assert values[d] == min(values.values())


def test_lt_mse_ignores_response():
    X, y, beta_r = _mse_instance()
    assert lt_mse(0.3, 1.0, X, y, beta_r) == lt_mse(0.3, 1.0, X, 1 - y, beta_r)


# -- gradients -------------------------------------------------------------


def _gradient_cases(seed, count=20):
    rng = np.random.default_rng(seed)
    data, _ = logistic_data(rng, n=40, p=4)
    for _ in range(count):
        yield data.X, data.y, rng.normal(scale=0.7, size=5), rng


def _rel_err(num, ana):
    return np.max(np.abs(num - ana)) / max(np.max(np.abs(ana)), 1.0)


def test_partition_loglik_gradient():
    for X, y, beta, _ in _gradient_cases(1):
        num = central_difference(lambda b: partition_loglik(b, X, y), beta)
        assert _rel_err(num, partition_score(beta, X, y)) < 1e-5


def test_ridge_objective_gradient():
    for X, y, beta, rng in _gradient_cases(2):
        lam = rng.uniform(0.01, 10)
        num = central_difference(lambda b: ridge_objective(b, X, y, lam), beta)
        assert _rel_err(num, ridge_gradient(beta, X, y, lam)) < 1e-5


def test_lt_objective_gradient():
    for X, y, beta, rng in _gradient_cases(3):
        lam, d, br = rng.uniform(0.01, 10), rng.uniform(-3, 3), rng.standard_normal(5)
        num = central_difference(lambda b: lt_objective(b, X, y, lam, d, br), beta)
        assert _rel_err(num, lt_gradient(beta, X, y, lam, d, br)) < 1e-5


# -- solver handles --------------------------------------------------------


def test_normal_matrix_is_symmetric_positive_definite(rng):
    data, _ = logistic_data(rng, n=30)
    U = normal_matrix(data.X, rng.standard_normal(5), lam=0.1)
    np.testing.assert_array_equal(U, U.T)
    assert np.linalg.eigvalsh(U).min() > 0
    w = irwls_weights(data.X, 5 * rng.standard_normal(5))
    assert np.all((w > 0) & (w <= 0.25))


def test_solver_handles_report_penalties(rng):
    X, y = collinear_data(rng, n=40)
    beta0 = np.zeros(4)
    assert make_solver("ml").name == "ML"
    ml = MLSolver().update(X, y, beta0)
    assert ml.lam is None and ml.d is None
    ridge = RidgeSolver().update(X, y, beta0)
    ml_full = irwls_ml(X, y, beta0)
    assert ridge.lam == pytest.approx(select_lambda_ml(ml_full.beta, 3))
    lt = LTSolver().update(X, y, beta0)
    assert lt.lam > 0 and np.isfinite(lt.d)
    with pytest.raises(ValueError, match="unknown solver"):
        make_solver("lasso")


def test_lambda_cap_is_flagged():
    # Balanced intercept-only partition: the ML estimate is exactly zero.
    y = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    up = RidgeSolver().update(np.ones((6, 1)), y, np.zeros(1))
    assert up.lam == LAMBDA_MAX and up.lambda_capped
