"""Wald confidence sets for linear combinations of working-GLM coefficients.

Each candidate model contributes one ellipsoidal region (rank-factorized
target map, sandwich covariance, chi-squared threshold); the confidence set
is the union of the regions. Scalar targets degenerate to interval unions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammainc, gammaincinv

from .glm import (Dataset, SeparationError, WorkingModel, fit_quasi_mle,
                  inv_logit, link_logit, loglik_hess, per_obs_grad)

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RankFactorization:
    """A_tau = C @ D with D D' = I_r; r the numerical rank."""

    C: np.ndarray
    D: np.ndarray
    r: int


def rank_factorize(A_tau: np.ndarray, tol: float = RANK_TOL) -> RankFactorization:
    """Rank factorization via SVD. r = 0 yields an empty factorization."""
    A_tau = np.atleast_2d(np.asarray(A_tau, dtype=float))
    if not np.all(np.isfinite(A_tau)):
        raise ValueError("A_tau must be finite")
    q, k = A_tau.shape
    if k == 0 or not np.any(A_tau):
        return RankFactorization(np.zeros((q, 0)), np.zeros((0, k)), 0)
    U, s, Vt = np.linalg.svd(A_tau, full_matrices=False)
    r = int(np.sum(s > tol * s[0]))
    return RankFactorization(U[:, :r] * s[:r], Vt[:r], r)


def chi2_quantile(alpha: float, df: int) -> float:
    """alpha-quantile of chi-squared with df degrees of freedom."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if df < 1:
        raise ValueError("df must be >= 1")
    return float(2.0 * gammaincinv(df / 2.0, alpha))


def chi2_cdf(x: float, df: int) -> float:
    return float(gammainc(df / 2.0, x / 2.0))


def sandwich_cov(data: Dataset, model: WorkingModel, D: np.ndarray) -> np.ndarray:
    """Misspecification-robust covariance D H^{-1} Cov(grad) H^{-1} D'.

    H is the mean Hessian at the fit (negative definite; the sign cancels),
    Cov uses the unbiased 1/(n-1) normalization. Result is symmetrized.
    """
    k = len(model.tau)
    if data.n <= k:
        raise ValueError("need n > |tau|")
    D = np.atleast_2d(np.asarray(D, dtype=float))
    H = loglik_hess(data, model)
    G = per_obs_grad(data, model)
    C = np.atleast_2d(np.cov(G.T, ddof=1))
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("singular Hessian in sandwich covariance") from exc
    M = Hinv @ C @ Hinv
    V = D @ M @ D.T
    V = 0.5 * (V + V.T)
    if V.shape[0] and np.min(np.linalg.eigvalsh(V)) <= 1e-10:
        raise FloatingPointError("ill-conditioned sandwich covariance")
    return V


def wald_stat(n: int, beta_hat: np.ndarray, D: np.ndarray, V: np.ndarray,
              t: np.ndarray) -> float:
    """n (D beta - t)' V^{-1} (D beta - t), via a Cholesky solve."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    delta = D @ np.asarray(beta_hat, dtype=float) - np.asarray(t, dtype=float).ravel()
    if delta.size == 0:
        return 0.0
    cf = cho_factor(np.atleast_2d(V), lower=True)
    return float(n * delta @ cho_solve(cf, delta))


@dataclass(frozen=True)
class CoefRegion:
    """One candidate model's Wald ellipsoid in target coordinates."""

    tau: tuple
    center: np.ndarray       # D beta_hat, length df
    shape: np.ndarray        # V_hat, df x df
    threshold: float         # chi^2_df alpha-quantile
    C_map: np.ndarray        # q x df, maps region coords to target space
    df: int
    n: int

    def stat(self, t: np.ndarray, *, lstsq_tol: float = 1e-8):
        """Wald statistic of a target-space point, or None if t is not in
        the column span of C_map (not representable under this model)."""
        t = np.asarray(t, dtype=float).ravel()
        if self.df == 0:
            return 0.0 if np.max(np.abs(t), initial=0.0) <= lstsq_tol else None
        u, *_ = np.linalg.lstsq(self.C_map, t, rcond=None)
        resid = self.C_map @ u - t
        if np.max(np.abs(resid)) > lstsq_tol * (1.0 + np.max(np.abs(t))):
            return None
        delta = u - self.center
        cf = cho_factor(self.shape, lower=True)
        return float(self.n * delta @ cho_solve(cf, delta))

    def covers(self, t) -> bool:
        s = self.stat(t)
        return s is not None and s <= self.threshold

    def center_point(self) -> np.ndarray:
        """The covered point C D beta_hat in target space."""
        return self.C_map @ self.center


@dataclass
class CoefConfidenceSet:
    """Union of per-candidate-model Wald regions for a linear target."""

    regions: list
    alpha: float
    target: str
    skipped: list = field(default_factory=list)

    def covers(self, t) -> bool:
        return any(reg.covers(t) for reg in self.regions)

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "target": self.target,
            "regions": [{
                "tau": list(reg.tau),
                "center": list(reg.center),
                "shape": [float(v) for v in np.asarray(reg.shape).ravel()],
                "threshold": reg.threshold,
                "df": reg.df,
                "C": [float(v) for v in np.asarray(reg.C_map).ravel()],
                "n": reg.n,
            } for reg in self.regions],
            "skipped": self.skipped,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def confset_Abeta(data: Dataset, cand, A: np.ndarray, alpha: float,
                  *, target: str = "Abeta") -> CoefConfidenceSet:
    """Level-alpha confidence set for A beta as a union over candidate models.

    Candidate models whose quasi-MLE separates are skipped with a recorded
    reason; rank-zero targets contribute the singleton {0}.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if len(cand.models) == 0:
        raise ValueError("empty candidate set")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    regions, skipped = [], []
    for tau in sorted(cand.models, key=lambda t: (len(t), t)):
        try:
            model = fit_quasi_mle(data, tau)
        except (SeparationError, FloatingPointError) as exc:
            skipped.append({"tau": list(tau), "reason": str(exc)})
            continue
        idx = np.asarray([j - 1 for j in tau], dtype=int)
        fac = rank_factorize(A[:, idx] if len(idx) else np.zeros((A.shape[0], 0)))
        if fac.r == 0:
            regions.append(CoefRegion(tau, np.zeros(0), np.zeros((0, 0)), 0.0,
                                      fac.C, 0, data.n))
            continue
        try:
            V = sandwich_cov(data, model, fac.D)
        except FloatingPointError as exc:
            skipped.append({"tau": list(tau), "reason": str(exc)})
            continue
        regions.append(CoefRegion(tau, fac.D @ model.beta_tau, V,
                                  chi2_quantile(alpha, fac.r), fac.C, fac.r,
                                  data.n))
    return CoefConfidenceSet(regions, alpha, target, skipped)


def _merge_intervals(intervals):
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    merged = []
    for lo, hi in ivs:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [[lo, hi] for lo, hi in merged]


@dataclass
class ScalarConfidenceSet:
    """Union of intervals for a single coefficient."""

    intervals: list
    alpha: float
    j: int
    skipped: list = field(default_factory=list)

    @property
    def length(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def covers(self, x: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    def to_json(self) -> str:
        doc = {"alpha": self.alpha, "j": self.j,
               "intervals": self.intervals, "length": self.length,
               "skipped": self.skipped}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def confset_beta_j(data: Dataset, cand, j: int, alpha: float) -> ScalarConfidenceSet:
    """Interval-union confidence set for a single coefficient.

    Candidate models containing j contribute classical Wald intervals;
    models without j contribute the singleton {0}.
    """
    if not 1 <= j <= data.p:
        raise ValueError(f"column index out of range: {j}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if len(cand.models) == 0:
        raise ValueError("empty candidate set")
    q1 = chi2_quantile(alpha, 1)
    pieces, skipped = [], []
    for tau in sorted(cand.models, key=lambda t: (len(t), t)):
        if j not in tau:
            pieces.append((0.0, 0.0))
            continue
        try:
            model = fit_quasi_mle(data, tau)
            pos = tau.index(j)
            D = np.zeros((1, len(tau)))
            D[0, pos] = 1.0
            V = sandwich_cov(data, model, D)
        except (SeparationError, FloatingPointError) as exc:
            skipped.append({"tau": list(tau), "reason": str(exc)})
            continue
        half = float(np.sqrt(q1 * V[0, 0] / data.n))
        c = float(model.beta_tau[pos])
        pieces.append((c - half, c + half))
    return ScalarConfidenceSet(_merge_intervals(pieces), alpha, j, skipped)


@dataclass
class CaseProbConfidenceSet:
    """Confidence set for case probabilities: the linear set pushed through
    the inverse link, elementwise."""

    linear: CoefConfidenceSet
    alpha: float

    def covers_probability(self, pi) -> bool:
        """Membership of a probability vector; boundary values {0, 1} are
        not representable and reported uncovered."""
        pi = np.asarray(pi, dtype=float).ravel()
        if np.any(pi <= 0.0) or np.any(pi >= 1.0):
            return False
        return self.linear.covers(link_logit(pi))

    def covers_linear(self, t) -> bool:
        return self.linear.covers(t)

    def to_json(self) -> str:
        doc = json.loads(self.linear.to_json())
        doc["transform"] = "inv_logit"
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def confset_case_prob(data: Dataset, cand, X_new: np.ndarray,
                      alpha: float) -> CaseProbConfidenceSet:
    """Simultaneous confidence set for working case probabilities of new rows."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if not np.all(np.isfinite(X_new)):
        raise ValueError("X_new must be finite")
    linear = confset_Abeta(data, cand, X_new, alpha, target="case_prob")
    return CaseProbConfidenceSet(linear, alpha)
