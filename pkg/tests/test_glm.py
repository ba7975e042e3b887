import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import minimize

from reprosamples.glm import (Dataset, SeparationError, WorkingModel,
                              fit_quasi_mle, inv_logit, link_logit, loglik,
                              loglik_grad, loglik_hess)


def rng(seed=0):
    return np.random.default_rng(seed)


def random_instance(seed, n=20, p=5, k=3):
    r = rng(seed)
    X = r.standard_normal((n, p))
    y = (r.random(n) < 0.5).astype(float)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    tau = tuple(sorted(r.choice(p, size=k, replace=False) + 1))
    beta = r.standard_normal(k)
    return Dataset(X, y), WorkingModel(tau, beta)


SYM4 = Dataset(np.array([[1.0], [1.0], [-1.0], [-1.0]]),
               np.array([1.0, 0.0, 1.0, 0.0]))


class TestLink:
    def test_logit_at_half_is_zero(self):
        assert link_logit(0.5) == 0.0

    def test_inv_logit_at_zero(self):
        assert inv_logit(0.0) == 0.5

    def test_round_trip(self):
        assert_allclose(link_logit(inv_logit(2.3)), 2.3, atol=1e-10)

    def test_inv_logit_stable_at_700(self):
        assert inv_logit(-700.0) >= 0.0
        assert np.isfinite(inv_logit(700.0))

    def test_domain_error(self):
        with pytest.raises(ValueError):
            link_logit(1.0)
        with pytest.raises(ValueError):
            link_logit(0.0)


class TestDataset:
    def test_rejects_nonbinary_y(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((3, 2)), np.array([0.0, 0.5, 1.0]))

    def test_rejects_nonfinite_X(self):
        X = np.ones((3, 2))
        X[1, 1] = np.nan
        with pytest.raises(ValueError):
            Dataset(X, np.array([0.0, 1.0, 0.0]))

    def test_rejects_single_row(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((1, 2)), np.array([1.0]))


class TestLoglik:
    def test_zero_beta_gives_log_half(self):
        data, model = random_instance(3)
        zero = WorkingModel(model.tau, np.zeros(len(model.tau)))
        assert_allclose(loglik(data, zero), np.log(0.5), atol=1e-12)

    def test_single_obs_value(self):
        data = Dataset(np.array([[2.0], [2.0]]), np.array([1.0, 1.0]))
        model = WorkingModel((1,), np.array([1.0]))
        # per-observation z = 2: y z - log(1 + e^z)
        assert_allclose(loglik(data, model), 2.0 - np.log1p(np.exp(2.0)),
                        atol=1e-12)

    def test_matches_naive_summation_oracle(self):
        data, model = random_instance(11)
        idx = [j - 1 for j in model.tau]
        total = 0.0
        for i in range(data.n):
            z = float(data.X[i, idx] @ model.beta_tau)
            eta = 1.0 / (1.0 + np.exp(-z))
            total += data.y[i] * np.log(eta) + (1 - data.y[i]) * np.log(1 - eta)
        assert_allclose(loglik(data, model), total / data.n, atol=1e-12)

    def test_concave_along_segments(self):
        data, model = random_instance(7)
        r = rng(70)
        for _ in range(20):
            b0 = r.standard_normal(len(model.tau))
            dirn = r.standard_normal(len(model.tau))
            h = 1e-3
            vals = [loglik(data, WorkingModel(model.tau, b0 + t * dirn))
                    for t in (-h, 0.0, h)]
            assert vals[0] + vals[2] - 2 * vals[1] <= 1e-8


class TestDerivatives:
    def test_grad_zero_on_symmetric_data(self):
        model = WorkingModel((1,), np.zeros(1))
        assert_allclose(loglik_grad(SYM4, model), 0.0, atol=1e-14)

    def test_hess_quarter_on_symmetric_data(self):
        model = WorkingModel((1,), np.zeros(1))
        assert_allclose(loglik_hess(SYM4, model), [[-0.25]], atol=1e-14)

    @pytest.mark.parametrize("seed", range(12))
    def test_finite_differences(self, seed):
        data, model = random_instance(seed + 100)
        k = len(model.tau)
        g = loglik_grad(data, model)
        H = loglik_hess(data, model)
        h = 1e-6
        for a in range(k):
            e = np.zeros(k)
            e[a] = h
            up = loglik(data, WorkingModel(model.tau, model.beta_tau + e))
            dn = loglik(data, WorkingModel(model.tau, model.beta_tau - e))
            assert_allclose((up - dn) / (2 * h), g[a], rtol=1e-5, atol=1e-8)
            gp = loglik_grad(data, WorkingModel(model.tau, model.beta_tau + e))
            gm = loglik_grad(data, WorkingModel(model.tau, model.beta_tau - e))
            assert_allclose((gp - gm) / (2 * h), H[a], rtol=1e-5, atol=1e-7)


class TestQuasiMle:
    def test_symmetric_data_fits_zero(self):
        fit = fit_quasi_mle(SYM4, (1,))
        assert_allclose(fit.beta_tau, 0.0, atol=1e-8)

    def test_separable_raises(self):
        X = np.repeat([[-1.0], [1.0]], 5, axis=0)
        y = np.repeat([0.0, 1.0], 5)
        with pytest.raises(SeparationError):
            fit_quasi_mle(Dataset(X, y), (1,))

    def test_recovers_logistic_truth(self):
        r = rng(5)
        n = 500
        X = r.standard_normal((n, 2))
        beta = np.array([1.5, -1.0])
        y = (r.random(n) < 1.0 / (1.0 + np.exp(-(X @ beta)))).astype(float)
        data = Dataset(X, y)
        fit = fit_quasi_mle(data, (1, 2))
        assert np.all(np.abs(fit.beta_tau - beta) < 0.25)
        # independent convex-optimizer oracle
        res = minimize(lambda b: -loglik(data, WorkingModel((1, 2), b)),
                       np.zeros(2), method="BFGS",
                       options={"gtol": 1e-10})
        assert_allclose(fit.beta_tau, res.x, atol=1e-6)

    def test_gradient_small_at_fit(self):
        data, model = random_instance(42, n=80)
        fit = fit_quasi_mle(data, model.tau)
        assert np.max(np.abs(loglik_grad(data, fit))) <= 1e-8

    def test_permutation_invariance(self):
        data, model = random_instance(9, n=60)
        perm = rng(1).permutation(data.n)
        shuffled = Dataset(data.X[perm], data.y[perm])
        f1 = fit_quasi_mle(data, model.tau)
        f2 = fit_quasi_mle(shuffled, model.tau)
        assert_allclose(f1.beta_tau, f2.beta_tau, atol=1e-6)

    def test_local_maximality(self):
        data, model = random_instance(21, n=100)
        fit = fit_quasi_mle(data, model.tau)
        best = loglik(data, fit)
        r = rng(22)
        for _ in range(100):
            pert = r.standard_normal(len(model.tau))
            pert *= 0.1 * r.random() / np.linalg.norm(pert)
            other = WorkingModel(model.tau, fit.beta_tau + pert)
            assert loglik(data, other) <= best + 1e-12
