import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import erfinv

from reprosamples.candidates import CandidateSet
from reprosamples.glm import Dataset, fit_quasi_mle, inv_logit, loglik_hess, per_obs_grad
from reprosamples.inference import (chi2_cdf, chi2_quantile, confset_Abeta,
                                    confset_beta_j, confset_case_prob,
                                    rank_factorize, sandwich_cov, wald_stat)


def logistic_data(seed, n=400, p=6, k=3, scale=1.5):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:k] = scale
    pi = 1.0 / (1.0 + np.exp(-(X @ beta)))
    y = (r.random(n) < pi).astype(float)
    return Dataset(X, y)


def cand_of(*models):
    return CandidateSet(list(models), {}, {})


class TestRankFactorize:
    def test_identity(self):
        fac = rank_factorize(np.eye(4))
        assert fac.r == 4
        assert_allclose(fac.C @ fac.D, np.eye(4), atol=1e-10)
        assert_allclose(fac.D @ fac.D.T, np.eye(4), atol=1e-10)

    def test_rank_one(self):
        A = np.ones((2, 2))
        fac = rank_factorize(A)
        assert fac.r == 1
        assert_allclose(fac.C @ fac.D, A, atol=1e-10)

    def test_zero_matrix(self):
        fac = rank_factorize(np.zeros((3, 5)))
        assert fac.r == 0
        assert fac.C.shape == (3, 0)

    def test_random_reconstruction(self):
        r = np.random.default_rng(0)
        for trial in range(20):
            q, k, rank = r.integers(1, 6), r.integers(1, 6), r.integers(1, 4)
            rank = min(rank, q, k)
            A = r.standard_normal((q, rank)) @ r.standard_normal((rank, k))
            fac = rank_factorize(A)
            assert fac.r == rank
            assert_allclose(fac.C @ fac.D, A, atol=1e-8)
            assert_allclose(fac.D @ fac.D.T, np.eye(fac.r), atol=1e-8)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            rank_factorize(np.array([[np.nan, 1.0]]))


class TestChi2Quantile:
    def test_reference_values(self):
        assert_allclose(chi2_quantile(0.95, 1), 3.841459, atol=1e-5)
        assert_allclose(chi2_quantile(0.95, 4), 9.487729, atol=1e-5)

    def test_tiny_alpha(self):
        assert chi2_quantile(1e-12, 1) < 1e-5

    def test_round_trip(self):
        for alpha in (0.05, 0.5, 0.9, 0.95, 0.999):
            for df in (1, 2, 5, 20):
                assert_allclose(chi2_cdf(chi2_quantile(alpha, df), df),
                                alpha, atol=1e-10)

    def test_df2_closed_form(self):
        # df=2: the chi-squared is exponential(1/2), so the quantile is
        # -2 log(1-alpha) in closed form
        for alpha in (0.1, 0.5, 0.95):
            assert_allclose(chi2_quantile(alpha, 2),
                            -2.0 * np.log1p(-alpha), rtol=1e-12)

    def test_df1_normal_connection(self):
        # df=1: quantile is the square of the standard normal
        # (1+alpha)/2-quantile, reachable through erfinv
        for alpha in (0.5, 0.9, 0.95):
            z = np.sqrt(2.0) * erfinv(alpha)
            assert_allclose(chi2_quantile(alpha, 1), z * z, rtol=1e-10)

    def test_bisection_oracle(self):
        for alpha, df in ((0.95, 3), (0.8, 7)):
            lo, hi = 0.0, 1e3
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if chi2_cdf(mid, df) < alpha:
                    lo = mid
                else:
                    hi = mid
            assert_allclose(chi2_quantile(alpha, df), 0.5 * (lo + hi),
                            atol=1e-8)

    def test_domains(self):
        with pytest.raises(ValueError):
            chi2_quantile(0.0, 1)
        with pytest.raises(ValueError):
            chi2_quantile(0.5, 0)


class TestSandwichCov:
    def test_matches_loop_oracle(self):
        data = logistic_data(1, n=300, p=5)
        tau = (1, 2, 3)
        model = fit_quasi_mle(data, tau)
        D = np.array([[1.0, 0.0, 2.0], [0.0, -1.0, 0.5]])
        V = sandwich_cov(data, model, D)
        # explicit oracle: per-observation gradients, plain covariance loop
        G = per_obs_grad(data, model)
        gbar = G.mean(axis=0)
        C = np.zeros((3, 3))
        for g in G:
            C += np.outer(g - gbar, g - gbar)
        C /= data.n - 1
        Hinv = np.linalg.inv(loglik_hess(data, model))
        V_ref = D @ Hinv @ C @ Hinv @ D.T
        assert_allclose(V, 0.5 * (V_ref + V_ref.T), atol=1e-10)

    def test_symmetric_positive_definite(self):
        data = logistic_data(2)
        model = fit_quasi_mle(data, (1, 2, 3, 4))
        V = sandwich_cov(data, model, np.eye(4))
        assert_allclose(V, V.T, atol=0)
        assert np.min(np.linalg.eigvalsh(V)) > 1e-10

    def test_duplicated_column_rejected(self):
        r = np.random.default_rng(3)
        X = r.standard_normal((100, 3))
        X[:, 2] = X[:, 0]
        pi = 1.0 / (1.0 + np.exp(-X[:, 0]))
        y = (r.random(100) < pi).astype(float)
        data = Dataset(X, y)
        with pytest.raises((FloatingPointError, np.linalg.LinAlgError)):
            model = fit_quasi_mle(data, (1, 3))
            sandwich_cov(data, model, np.eye(2))


class TestWaldStat:
    def test_zero_at_center(self):
        r = np.random.default_rng(4)
        beta = r.standard_normal(3)
        D = r.standard_normal((2, 3))
        M = r.standard_normal((2, 2))
        V = M @ M.T + np.eye(2)
        assert wald_stat(100, beta, D, V, D @ beta) == pytest.approx(0.0, abs=1e-20)

    def test_matches_explicit_inverse(self):
        r = np.random.default_rng(5)
        for _ in range(10):
            beta = r.standard_normal(4)
            D = r.standard_normal((3, 4))
            M = r.standard_normal((3, 3))
            V = M @ M.T + 0.5 * np.eye(3)
            t = r.standard_normal(3)
            got = wald_stat(57, beta, D, V, t)
            delta = D @ beta - t
            ref = 57 * delta @ np.linalg.inv(V) @ delta
            assert_allclose(got, ref, rtol=1e-10)


class TestConfsetAbeta:
    def test_center_always_covered(self):
        data = logistic_data(6)
        cs = confset_Abeta(data, cand_of((1, 2, 3)), np.eye(data.p), 0.95)
        for reg in cs.regions:
            assert cs.covers(reg.center_point())

    def test_alpha_monotone(self):
        data = logistic_data(7)
        cand = cand_of((1, 2), (1, 2, 3))
        A = np.eye(data.p)
        lo = confset_Abeta(data, cand, A, 0.80)
        hi = confset_Abeta(data, cand, A, 0.99)
        r = np.random.default_rng(8)
        for _ in range(50):
            reg = lo.regions[int(r.integers(len(lo.regions)))]
            t = reg.center_point() + 0.3 * (reg.C_map @ r.standard_normal(reg.df))
            if lo.covers(t):
                assert hi.covers(t)

    def test_union_over_models(self):
        data = logistic_data(9)
        c1 = confset_Abeta(data, cand_of((1, 2)), np.eye(data.p), 0.95)
        c12 = confset_Abeta(data, cand_of((1, 2), (1, 2, 3)),
                            np.eye(data.p), 0.95)
        t = c1.regions[0].center_point()
        assert c12.covers(t)

    def test_rank_zero_singleton(self):
        data = logistic_data(10)
        A = np.zeros((1, data.p))
        A[0, 5] = 1.0  # column 6, outside the candidate model
        cs = confset_Abeta(data, cand_of((1, 2)), A, 0.95)
        assert cs.covers([0.0])
        assert not cs.covers([0.5])

    def test_off_span_point_uncovered(self):
        data = logistic_data(11)
        A = np.eye(data.p)
        cs = confset_Abeta(data, cand_of((1,)), A, 0.95)
        t = np.zeros(data.p)
        t[1] = 1.0  # column 2 cannot move under model (1,)
        assert not cs.covers(t)

    def test_region_stat_matches_eigh_oracle(self):
        data = logistic_data(12)
        cs = confset_Abeta(data, cand_of((1, 2, 3)), np.eye(data.p), 0.95)
        reg = cs.regions[0]
        r = np.random.default_rng(13)
        u = reg.center + 0.1 * r.standard_normal(reg.df)
        t = reg.C_map @ u
        w, Q = np.linalg.eigh(reg.shape)
        delta = u - reg.center
        ref = reg.n * np.sum((Q.T @ delta) ** 2 / w)
        assert_allclose(reg.stat(t), ref, rtol=1e-8)

    def test_validation(self):
        data = logistic_data(14)
        with pytest.raises(ValueError):
            confset_Abeta(data, cand_of((1,)), np.eye(data.p), 1.5)
        with pytest.raises(ValueError):
            confset_Abeta(data, cand_of(), np.eye(data.p), 0.95)

    def test_json_round_trippable(self):
        import json
        data = logistic_data(15)
        cs = confset_Abeta(data, cand_of((1, 2)), np.eye(data.p), 0.95)
        doc = json.loads(cs.to_json())
        assert doc["alpha"] == 0.95
        assert doc["regions"][0]["tau"] == [1, 2]


class TestConfsetBetaJ:
    def test_absent_model_contributes_zero(self):
        data = logistic_data(16)
        cs = confset_beta_j(data, cand_of((1, 2)), 5, 0.95)
        assert cs.intervals == [[0.0, 0.0]]
        assert cs.length == 0.0
        assert cs.covers(0.0)

    def test_present_model_covers_mle(self):
        data = logistic_data(17)
        tau = (1, 2, 3)
        model = fit_quasi_mle(data, tau)
        cs = confset_beta_j(data, cand_of(tau), 2, 0.95)
        assert cs.covers(float(model.beta_tau[1]))

    def test_intervals_sorted_disjoint(self):
        data = logistic_data(18)
        cs = confset_beta_j(data, cand_of((1,), (1, 2), (2, 3)), 1, 0.95)
        flat = [v for iv in cs.intervals for v in iv]
        assert flat == sorted(flat)
        for (a, b), (c, d) in zip(cs.intervals, cs.intervals[1:]):
            assert b < c

    def test_alpha_monotone_length(self):
        data = logistic_data(19)
        cand = cand_of((1, 2, 3))
        lo = confset_beta_j(data, cand, 1, 0.80)
        hi = confset_beta_j(data, cand, 1, 0.99)
        assert hi.length >= lo.length

    def test_j_out_of_range(self):
        data = logistic_data(20)
        with pytest.raises(ValueError):
            confset_beta_j(data, cand_of((1,)), data.p + 1, 0.95)


class TestConfsetCaseProb:
    def test_covers_fitted_probabilities(self):
        data = logistic_data(21)
        tau = (1, 2, 3)
        model = fit_quasi_mle(data, tau)
        X_new = np.random.default_rng(22).standard_normal((2, data.p))
        cs = confset_case_prob(data, cand_of(tau), X_new, 0.95)
        idx = [j - 1 for j in tau]
        pi_hat = inv_logit(X_new[:, idx] @ model.beta_tau)
        assert cs.covers_probability(pi_hat)

    def test_boundary_uncovered(self):
        data = logistic_data(23)
        X_new = np.zeros((2, data.p))
        cs = confset_case_prob(data, cand_of((1, 2)), X_new, 0.95)
        assert not cs.covers_probability([0.0, 0.5])
        assert not cs.covers_probability([0.5, 1.0])

    def test_zero_rows_cover_half(self):
        data = logistic_data(24)
        X_new = np.zeros((2, data.p))
        cs = confset_case_prob(data, cand_of((1, 2)), X_new, 0.95)
        assert cs.covers_probability([0.5, 0.5])

    def test_coherent_with_linear_set(self):
        data = logistic_data(25)
        X_new = np.random.default_rng(26).standard_normal((2, data.p))
        cs = confset_case_prob(data, cand_of((1, 2, 3)), X_new, 0.95)
        r = np.random.default_rng(27)
        for _ in range(20):
            t = r.standard_normal(2)
            assert cs.covers_probability(inv_logit(t)) == cs.covers_linear(t)

    def test_rejects_nonfinite_rows(self):
        data = logistic_data(28)
        X_new = np.full((1, data.p), np.nan)
        with pytest.raises(ValueError):
            confset_case_prob(data, cand_of((1,)), X_new, 0.95)
