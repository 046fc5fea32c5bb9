import math

import numpy as np
import pytest

from psimkl.kernels import Dataset, KernelSpec, cross_grams, gram_bank
from psimkl.norms import Block, ElasticNet, Lp, psi_norm
from psimkl.solver import (
    Diagnostics,
    GramFactors,
    MklModel,
    MklProblem,
    SolverOptions,
    fit,
    kernel_ridge_solve,
    lp_weight_update,
    predict,
    stationarity_residual,
)


def _toy_problem(seed=0, n=50, d=3, noise=0.1, widths=None):
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    y = np.sin(5 * x[:, 0]) + 0.6 * np.cos(3 * x[:, 1 % d]) + noise * rng.standard_normal(n)
    widths = widths or [0.5] * d
    bank = gram_bank(Dataset(x, y), [KernelSpec(j, widths[j]) for j in range(d)])
    return bank, y


def _in_sample(bank, model):
    return np.einsum("mij,mj->i", bank.grams, model.dual_coeffs) + model.bias


# --- kernel ridge -----------------------------------------------------------


def test_ridge_interpolation_limit():
    y = np.ones(3)
    c, b = kernel_ridge_solve(np.eye(3), y, 1e-10, with_bias=False)
    np.testing.assert_allclose(c, np.ones(3), rtol=1e-8)


def test_ridge_zero_data():
    c, b = kernel_ridge_solve(np.eye(4) * 1.0, np.zeros(4), 0.1)
    np.testing.assert_allclose(c, 0.0, atol=1e-14)
    assert b == 0.0


def test_ridge_matches_dense_normal_equations():
    # independent oracle: solve the full (n+1)-dim normal equations by lstsq
    rng = np.random.default_rng(4)
    n = 20
    a = rng.standard_normal((n, n))
    gram = a @ a.T / n
    gram = gram / np.max(np.diag(gram))
    np.fill_diagonal(gram, 1.0)
    y = rng.standard_normal(n)
    lam = 0.1
    c, b = kernel_ridge_solve(gram, y, lam)
    # stationarity: (2/n) G (G c + b 1 - y) + 2 lam G c = 0 ; 1'(G c + b 1 - y) = 0
    top = np.hstack([gram @ gram + n * lam * gram, (gram @ np.ones(n))[:, None]])
    bottom = np.hstack([np.ones(n) @ gram, n])
    system = np.vstack([top, bottom])
    rhs = np.concatenate([gram @ y, [np.sum(y)]])
    sol, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    fitted_ours = gram @ c + b
    fitted_oracle = gram @ sol[:n] + sol[n]
    np.testing.assert_allclose(fitted_ours, fitted_oracle, rtol=1e-8, atol=1e-10)
    resid = gram @ (gram @ c + b - y) + n * lam * gram @ c
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(y) * n


def test_ridge_residual_bound():
    rng = np.random.default_rng(9)
    for _ in range(5):
        n = 30
        x = rng.random((n, 1))
        bank = gram_bank(Dataset(x, np.zeros(n)), [KernelSpec(0, 0.4)])
        y = rng.standard_normal(n)
        c, b = kernel_ridge_solve(bank.grams[0], y, 0.05)
        g = bank.grams[0]
        resid = (2.0 / n) * g @ (g @ c + b - y) + 2 * 0.05 * g @ c
        assert np.linalg.norm(resid) <= 1e-8 * (1 + np.linalg.norm(y))


def test_ridge_rejects_bad_lambda():
    with pytest.raises(ValueError):
        kernel_ridge_solve(np.eye(3), np.zeros(3), 0.0)


# --- fit: degeneracies and equivalences --------------------------------------


def test_single_kernel_matches_ridge_for_every_norm():
    rng = np.random.default_rng(1)
    x = rng.random((40, 1))
    y = np.sin(4 * x[:, 0]) + 0.05 * rng.standard_normal(40)
    bank = gram_bank(Dataset(x, y), [KernelSpec(0, 0.5)])
    c, b = kernel_ridge_solve(bank.grams[0], y, 0.05)
    reference = bank.grams[0] @ c + b
    tight = SolverOptions(tol=1e-12, max_iters=100_000)
    for spec in (Lp(1), Lp(1.5), Lp(2), Lp(math.inf), ElasticNet(0.5), Block(2, 1, ((0,),))):
        model = fit(MklProblem(bank, y, spec, 0.05), tight)
        np.testing.assert_allclose(
            _in_sample(bank, model), reference, rtol=0, atol=1e-8 * np.max(np.abs(reference))
        )


def test_zero_outputs_give_zero_model():
    bank, _ = _toy_problem(seed=2)
    y = np.zeros(bank.n)
    for spec in (Lp(1), ElasticNet(0.5), Lp(3)):
        model = fit(MklProblem(bank, y, spec, 0.1))
        np.testing.assert_allclose(model.dual_coeffs, 0.0, atol=1e-12)
        assert model.bias == pytest.approx(0.0, abs=1e-12)
        assert model.objective == pytest.approx(0.0, abs=1e-15)


def test_p2_matches_uniform_sum_ridge():
    bank, y = _toy_problem(seed=3, n=60, d=4)
    model = fit(MklProblem(bank, y, Lp(2), 0.05))
    c, b = kernel_ridge_solve(bank.grams.sum(axis=0), y, 0.05)
    reference = bank.grams.sum(axis=0) @ c + b
    rel = np.max(np.abs(_in_sample(bank, model) - reference)) / np.max(np.abs(reference))
    assert rel <= 1e-6


def test_l1_exact_sparsity_and_convex_oracle():
    cvxpy = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(5)
    n = 40
    x = rng.random((n, 2))
    y = np.sin(5 * x[:, 0])
    bank = gram_bank(Dataset(x, y), [KernelSpec(0, 0.3), KernelSpec(1, 0.3)])
    lam = 0.4
    model = fit(MklProblem(bank, y, Lp(1), lam))
    assert model.rkhs_norms[1] == 0.0
    assert model.rkhs_norms[0] > 0.0

    # generic convex-solver oracle on the finite-dimensional objective
    factors = GramFactors(bank)
    g1 = cvxpy.Variable(n)
    g2 = cvxpy.Variable(n)
    b = cvxpy.Variable()
    pred = factors.roots[0] @ g1 + factors.roots[1] @ g2 + b
    penalty = cvxpy.square(cvxpy.norm2(g1) + cvxpy.norm2(g2))
    objective = cvxpy.sum_squares(y - pred) / n + lam * penalty
    cvxpy.Problem(cvxpy.Minimize(objective)).solve(solver=cvxpy.CLARABEL)
    oracle = float(objective.value)
    assert model.objective == pytest.approx(oracle, rel=1e-6)


def test_lp43_long_run_self_consistency():
    bank, y = _toy_problem(seed=6, n=45, d=3)
    problem = MklProblem(bank, y, Lp(4 / 3), 0.02)
    quick = fit(problem, SolverOptions(tol=1e-8))
    reference = fit(problem, SolverOptions(tol=1e-12, max_iters=100_000))
    assert quick.objective == pytest.approx(reference.objective, rel=1e-5)


def test_elastic_net_limits():
    bank, y = _toy_problem(seed=7, n=50, d=4)
    lam = 0.05
    tight = SolverOptions(tol=1e-10, max_iters=50_000)
    en1 = fit(MklProblem(bank, y, ElasticNet(1.0), lam), tight)
    l1 = fit(MklProblem(bank, y, Lp(1), lam), tight)
    scale = np.max(np.abs(_in_sample(bank, l1)))
    assert np.max(np.abs(_in_sample(bank, en1) - _in_sample(bank, l1))) <= 1e-6 * scale

    en0 = fit(MklProblem(bank, y, ElasticNet(0.0), lam), tight)
    l2 = fit(MklProblem(bank, y, Lp(2), lam), tight)
    scale = np.max(np.abs(_in_sample(bank, l2)))
    assert np.max(np.abs(_in_sample(bank, en0) - _in_sample(bank, l2))) <= 1e-6 * scale


# --- fit: contracts -----------------------------------------------------------


def test_model_invariants_random_problems():
    rng = np.random.default_rng(8)
    specs = [Lp(1), Lp(4 / 3), Lp(2), Lp(math.inf), ElasticNet(0.5), Block(2, 1, ((0, 1), (2,)))]
    for i, spec in enumerate(specs):
        bank, y = _toy_problem(seed=20 + i, n=35, d=3)
        model = fit(MklProblem(bank, y, spec, 0.05))
        quad = np.einsum("mi,mij,mj->m", model.dual_coeffs, bank.grams, model.dual_coeffs)
        np.testing.assert_allclose(model.rkhs_norms**2, quad, rtol=1e-8, atol=1e-12)
        resid = y - _in_sample(bank, model)
        expected = float(np.mean(resid**2)) + 0.05 * psi_norm(model.rkhs_norms, spec) ** 2
        assert model.objective == pytest.approx(expected, rel=1e-10)


def test_monotone_descent_both_backends():
    rng = np.random.default_rng(10)
    for trial in range(25):
        bank, y = _toy_problem(seed=100 + trial, n=25, d=3, noise=0.3)
        lam = float(10 ** rng.uniform(-3, 0))
        spec_a = Lp(float(rng.uniform(1.0, 2.0)))
        hist = fit(MklProblem(bank, y, spec_a, lam)).diagnostics.objective_history
        assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(hist, hist[1:]))
        spec_b = [ElasticNet(0.5), Lp(2.5), Lp(math.inf), Block(2, 1, ((0, 2), (1,)))][trial % 4]
        hist = fit(MklProblem(bank, y, spec_b, lam)).diagnostics.objective_history
        assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(hist, hist[1:]))


def test_stationarity_certificate():
    for i, spec in enumerate([Lp(1), Lp(1.5), ElasticNet(0.3), Lp(3), Block(2, 1.5, ((0, 1), (2,)))]):
        bank, y = _toy_problem(seed=40 + i, n=30, d=3)
        opts = SolverOptions(tol=1e-8)
        model = fit(MklProblem(bank, y, spec, 0.05), opts)
        assert model.diagnostics.converged
        assert model.diagnostics.stationarity_residual <= opts.tol * (1 + np.linalg.norm(y))


def test_lambda_monotonicity_of_penalty_norm():
    bank, y = _toy_problem(seed=50, n=40, d=3)
    for spec in (Lp(1.5), ElasticNet(0.5)):
        values = []
        for lam in np.logspace(-4, 1, 10):
            model = fit(MklProblem(bank, y, spec, float(lam)))
            values.append(psi_norm(model.rkhs_norms, spec))
        assert all(v2 <= v1 * (1 + 1e-6) + 1e-9 for v1, v2 in zip(values, values[1:]))


def test_permutation_equivariance():
    rng = np.random.default_rng(12)
    x = rng.random((30, 3))
    y = np.sin(4 * x[:, 0]) + x[:, 2] + 0.05 * rng.standard_normal(30)
    specs = [KernelSpec(0, 0.4), KernelSpec(1, 0.6), KernelSpec(2, 0.8)]
    perm = [2, 0, 1]
    for norm in (Lp(1.3), ElasticNet(0.4)):
        base = fit(MklProblem(gram_bank(Dataset(x, y), specs), y, norm, 0.05))
        shuffled = fit(
            MklProblem(gram_bank(Dataset(x, y), [specs[j] for j in perm]), y, norm, 0.05)
        )
        np.testing.assert_allclose(
            shuffled.rkhs_norms, base.rkhs_norms[perm], rtol=1e-6, atol=1e-9
        )
        np.testing.assert_allclose(
            shuffled.dual_coeffs, base.dual_coeffs[perm], rtol=1e-5, atol=1e-8
        )


def test_non_convergence_reported():
    bank, y = _toy_problem(seed=60)
    model = fit(MklProblem(bank, y, Lp(3), 0.05), SolverOptions(max_iters=1))
    assert not model.diagnostics.converged
    assert model.diagnostics.iterations == 1


def test_invalid_lambda_rejected():
    bank, y = _toy_problem(seed=61)
    with pytest.raises(ValueError):
        MklProblem(bank, y, Lp(2), 0.0)
    with pytest.raises(ValueError):
        MklProblem(bank, y, Lp(2), -1.0)


def test_unsupported_block_combination_raises():
    bank, y = _toy_problem(seed=62)
    with pytest.raises(ValueError):
        fit(MklProblem(bank, y, Block(3, 2, ((0, 1), (2,))), 0.1))


def test_alternating_backend_rejects_large_p():
    bank, y = _toy_problem(seed=63)
    with pytest.raises(ValueError):
        fit(MklProblem(bank, y, Lp(3), 0.1), SolverOptions(backend="alternating_weights"))


# --- weight update -------------------------------------------------------------


def test_weight_update_examples():
    for p in (1.0, 1.5, 2.0, 3.0):
        w = lp_weight_update(np.full(4, 0.7), p, 1e-8)
        assert np.allclose(w, w[0])
    assert np.allclose(lp_weight_update([0.3, 2.0, 1.1], 2.0, 1e-8), 1.0)
    theta = lp_weight_update([1.0, 0.0], 1.0, 1e-8)
    np.testing.assert_allclose(theta, np.array([1.0, 1e-8]) / (1 + 1e-8), rtol=1e-12)


def test_weight_update_variational_identity():
    # 1-D numeric minimization oracle for the variational form at M=2
    rng = np.random.default_rng(13)
    for p in (1.0, 1.2, 1.5, 1.8):
        v = np.abs(rng.standard_normal(2)) + 0.1
        r = p / (2.0 - p)
        fractions = np.linspace(1e-6, 1 - 1e-6, 20001)
        theta1 = fractions ** (1.0 / r)
        theta2 = (1 - fractions) ** (1.0 / r)
        values = v[0] ** 2 / theta1 + v[1] ** 2 / theta2
        target = psi_norm(v, Lp(p)) ** 2
        assert np.min(values) == pytest.approx(target, rel=1e-6)
        theta = lp_weight_update(v, p, 1e-12)
        assert float(np.sum(v**2 / theta)) == pytest.approx(target, rel=1e-10)


def test_weight_update_never_increases_weighted_objective():
    rng = np.random.default_rng(14)
    for _ in range(20):
        v = np.abs(rng.standard_normal(5))
        p = float(rng.uniform(1.0, 2.0))
        theta_old = lp_weight_update(np.abs(rng.standard_normal(5)) + 0.1, p, 1e-8)
        theta_new = lp_weight_update(v, p, 1e-12)
        old_value = float(np.sum(v**2 / theta_old))
        new_value = float(np.sum(v**2 / theta_new))
        assert new_value <= old_value * (1 + 1e-10)


def test_weight_update_validation():
    with pytest.raises(ValueError):
        lp_weight_update([1.0], math.inf, 1e-8)
    with pytest.raises(ValueError):
        lp_weight_update([1.0], 0.5, 1e-8)
    with pytest.raises(ValueError):
        lp_weight_update([-1.0], 1.5, 1e-8)


# --- predict -------------------------------------------------------------------


def test_predict_reproduces_in_sample():
    bank, y = _toy_problem(seed=70, n=30, d=2)
    model = fit(MklProblem(bank, y, Lp(1.5), 0.05))
    preds = predict(model, bank.grams)
    np.testing.assert_allclose(preds, _in_sample(bank, model), rtol=0, atol=1e-12)


def test_predict_zero_model_is_bias():
    diag = Diagnostics(0, 0.0, True, "test")
    model = MklModel(np.zeros((2, 3)), 1.7, np.zeros(2), 0.0, diag)
    cross = np.ones((2, 5, 3))
    np.testing.assert_allclose(predict(model, cross), 1.7)


def test_predict_hand_built_expansion():
    # four-term manual expansion with M=2, n=2, one test point
    alpha = np.array([[0.5, -0.25], [1.0, 2.0]])
    diag = Diagnostics(0, 0.0, True, "test")
    model = MklModel(alpha, 0.3, np.ones(2), 0.0, diag)
    cross = np.array([[[0.9, 0.1]], [[0.4, 0.7]]])
    expected = 0.5 * 0.9 + (-0.25) * 0.1 + 1.0 * 0.4 + 2.0 * 0.7 + 0.3
    assert predict(model, cross)[0] == pytest.approx(expected, rel=1e-12)


def test_predict_shape_mismatch():
    diag = Diagnostics(0, 0.0, True, "test")
    model = MklModel(np.zeros((2, 3)), 0.0, np.zeros(2), 0.0, diag)
    with pytest.raises(ValueError):
        predict(model, np.ones((3, 5, 3)))
