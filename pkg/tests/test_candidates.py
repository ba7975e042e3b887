import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from reprosamples.candidates import (CandidateSet, build_candidate_set,
                                     candidate_for_noise, ebic_score,
                                     log_binom, recovery_loss)
from reprosamples.glm import Dataset
from reprosamples.rng import substream
from reprosamples.solvers import AugmentedFit, SurrogateLoss

LOGISTIC = SurrogateLoss("logistic")
HINGE = SurrogateLoss("hinge")


def planted(seed, n=120, p=20, beta_vals=(5, 4, 3, 2.5)):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: len(beta_vals)] = beta_vals
    eps = r.logistic(0.0, 1.0, n)
    y = ((X @ beta + eps) > 0).astype(float)
    return Dataset(X, y)


class TestLogBinom:
    def test_small_exact(self):
        assert_allclose(log_binom(10, 3), math.log(120), rtol=1e-14)
        assert_allclose(log_binom(5, 5), 0.0, atol=1e-12)
        assert_allclose(log_binom(7, 0), 0.0, atol=1e-12)

    def test_large_against_product_oracle(self):
        # exact integer product, independent of log-gamma
        exact = math.log(1000 * 999 * 998 * 997 // 24)
        assert_allclose(log_binom(1000, 4), exact, rtol=1e-12)

    def test_no_overflow(self):
        assert np.isfinite(log_binom(10**6, 10**5))

    def test_domain(self):
        with pytest.raises(ValueError):
            log_binom(5, 6)
        with pytest.raises(ValueError):
            log_binom(5, -1)


class TestEbicScore:
    def test_empty_support_zero_fit(self):
        data = planted(0, n=40, p=6)
        fit = AugmentedFit.from_beta(np.zeros(6), 0.0, 1.0)
        sc = ebic_score(data, np.zeros(40), fit, LOGISTIC, 0.5)
        assert_allclose(sc.deviance_term, 2 * 40 * math.log(2.0), rtol=1e-12)
        assert sc.complexity_term == 0.0
        assert sc.combinatorial_term == 0.0

    def test_terms_at_full_scale(self):
        r = np.random.default_rng(1)
        n, p = 500, 1000
        data = Dataset(r.standard_normal((n, p)),
                       (r.random(n) < 0.5).astype(float))
        beta = np.zeros(p)
        beta[:4] = 1.0
        fit = AugmentedFit.from_beta(beta, 0.3, 0.1)
        sc = ebic_score(data, r.logistic(0.0, 1.0, n), fit, HINGE, 1.0)
        assert_allclose(sc.complexity_term, 4 * math.log(500), rtol=1e-12)
        exact = math.log(1000 * 999 * 998 * 997 // 24)
        assert_allclose(sc.combinatorial_term, 2.0 * exact, rtol=1e-12)

    def test_xi_zero_is_plain_bic(self):
        data = planted(2, n=50, p=8)
        beta = np.zeros(8)
        beta[2] = 1.5
        fit = AugmentedFit.from_beta(beta, 0.7, 0.05)
        eps = np.random.default_rng(3).logistic(0.0, 1.0, 50)
        sc = ebic_score(data, eps, fit, LOGISTIC, 0.0)
        assert sc.combinatorial_term == 0.0
        margins = (2 * data.y - 1) * (data.X @ beta + 0.7 * eps)
        dev = 2 * float(np.sum(np.log1p(np.exp(-margins))))
        assert_allclose(sc.total, dev + math.log(50), rtol=1e-10)

    def test_hinge_uses_exact_loss(self):
        data = planted(4, n=30, p=5)
        beta = np.zeros(5)
        beta[0] = 2.0
        fit = AugmentedFit.from_beta(beta, 0.5, 0.0)
        eps = np.random.default_rng(5).logistic(0.0, 1.0, 30)
        sc = ebic_score(data, eps, fit, HINGE, 0.0)
        margins = (2 * data.y - 1) * (data.X @ beta + 0.5 * eps)
        dev = 2 * float(np.sum(np.maximum(0.0, 1.0 - margins)))
        assert_allclose(sc.deviance_term, dev, rtol=1e-12)

    def test_xi_domain(self):
        data = planted(6, n=30, p=5)
        fit = AugmentedFit.from_beta(np.zeros(5), 0.0, 0.0)
        with pytest.raises(ValueError):
            ebic_score(data, np.zeros(30), fit, LOGISTIC, 1.5)


class TestCandidateForNoise:
    def test_requires_positive_cap(self):
        data = planted(7)
        with pytest.raises(ValueError):
            candidate_for_noise(data, np.zeros(data.n), HINGE, 0)

    def test_one_pick_per_xi_and_cap_respected(self):
        data = planted(8)
        eps = substream(0, "candidate-noise", 0).logistic(0.0, 1.0, data.n)
        picks = candidate_for_noise(data, eps, HINGE, 5,
                                    xi_grid=(0.0, 0.5, 1.0))
        assert len(picks) == 3
        for support, xi, lam in picks:
            assert len(support) <= 5
            assert all(1 <= j <= data.p for j in support)

    def test_larger_xi_never_larger_support(self):
        data = planted(9)
        eps = substream(1, "candidate-noise", 0).logistic(0.0, 1.0, data.n)
        picks = candidate_for_noise(data, eps, HINGE, 8)
        sizes = [len(s) for s, _, _ in picks]
        assert sizes == sorted(sizes, reverse=True)


class TestBuildCandidateSet:
    def test_recovers_planted_support(self):
        data = planted(10)
        cand = build_candidate_set(data, d=3, s_u=6, seed=0)
        assert (1, 2, 3, 4) in cand

    def test_deterministic(self):
        data = planted(11)
        a = build_candidate_set(data, d=2, s_u=6, seed=5)
        b = build_candidate_set(data, d=2, s_u=6, seed=5)
        assert a.to_json() == b.to_json()

    def test_union_monotone_in_d(self):
        data = planted(12)
        small = build_candidate_set(data, d=1, s_u=6, seed=3)
        big = build_candidate_set(data, d=2, s_u=6, seed=3)
        assert set(small.models) <= set(big.models)

    def test_provenance_and_params(self):
        data = planted(13)
        cand = build_candidate_set(data, d=2, s_u=6, seed=0, loss="hinge")
        assert cand.params["d"] == 2
        assert cand.params["loss"] == "hinge"
        for m in cand.models:
            for entry in cand.provenance[m]:
                assert set(entry) == {"j", "xi", "lambda"}
                assert entry["j"] in (0, 1)

    def test_json_round_trip(self):
        data = planted(14)
        cand = build_candidate_set(data, d=2, s_u=6, seed=0)
        back = CandidateSet.from_json(cand.to_json())
        assert back.models == cand.models
        assert back.to_json() == cand.to_json()

    def test_d_validation(self):
        data = planted(15)
        with pytest.raises(ValueError):
            build_candidate_set(data, d=0)


class TestRecoveryLoss:
    def test_exact_zero_on_regenerated_data(self):
        for seed in range(3):
            r = np.random.default_rng(seed)
            n, p = 200, 10
            X = r.standard_normal((n, p))
            beta_tau = np.array([5.0, 4.0, 3.0, 2.5])
            eps = r.logistic(0.0, 1.0, n)
            y = ((X[:, :4] @ beta_tau + 1.0 * eps) > 0).astype(float)
            loss = recovery_loss((1, 2, 3, 4), beta_tau, 1.0, X, y, eps)
            assert loss == 0.0

    def test_flipped_labels_give_one(self):
        r = np.random.default_rng(99)
        X = r.standard_normal((50, 3))
        eps = r.logistic(0.0, 1.0, 50)
        y = ((X[:, 0] * 2.0 + eps) > 0).astype(float)
        assert recovery_loss((1,), [2.0], 1.0, X, 1.0 - y, eps) == 1.0

    def test_empty_support(self):
        X = np.ones((4, 2))
        eps = np.array([1.0, -1.0, 1.0, -1.0])
        y = np.array([1.0, 0.0, 1.0, 0.0])
        assert recovery_loss((), [], 1.0, X, y, eps) == 0.0
