"""Monte-Carlo model confidence sets under a well-specified sparse GLM.

For each candidate support, synthetic responses are generated at a plug-in
(or profiled) coefficient vector, pushed through the capped lasso-path
model selector, and the resulting selector distribution is compared with
the observed selection via the nuclear exceedance statistic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .glm import Dataset, SeparationError, WorkingModel, fit_quasi_mle
from .rng import substream
from .solvers import SolverError, l1_logistic_path, path_model_selector

FAILED_KEY = "failed"


@dataclass
class SelectorDistribution:
    """Empirical distribution of the capped path selector over m draws."""

    counts: dict
    m: int
    theta: WorkingModel

    def prob(self, tau) -> float:
        return self.counts.get(tuple(tau) if not isinstance(tau, str) else tau,
                               0) / self.m


class _SelectorCache(dict):
    """Memoizes path selections keyed by (size cap, response bytes)."""


def select_support(X: np.ndarray, y: np.ndarray, size_cap: int,
                   cache: _SelectorCache | None = None,
                   grid_size: int = 50) -> tuple:
    """Capped lasso-path selector on a response vector.

    The path is truncated once the support outgrows the cap; selection and
    truncation use the same rule for observed and synthetic responses.
    """
    key = None
    if cache is not None:
        key = (size_cap, y.astype(np.int8).tobytes())
        hit = cache.get(key)
        if hit is not None:
            return hit
    data = Dataset(X, y)
    path = l1_logistic_path(data, grid_size, tol=1e-5, stop_support=size_cap)
    tau = path_model_selector(path, size_cap)
    if cache is not None:
        cache[key] = tau
    return tau


def _noise_matrix(n: int, m: int, seed: int, purpose: str) -> np.ndarray:
    """m x n working noises -g(u) with u uniform; one substream per draw."""
    eps = np.empty((m, n))
    for j in range(m):
        u = substream(seed, purpose, j).uniform(0.0, 1.0, n)
        eps[j] = -(np.log(u) - np.log1p(-u))
    return eps


def _distribution_for_beta(X, tau, beta_tau, eps, cache) -> SelectorDistribution:
    idx = np.asarray([j - 1 for j in tau], dtype=int)
    z = X[:, idx] @ np.asarray(beta_tau, dtype=float) if len(idx) else 0.0
    counts: dict = {}
    cap = len(tau)
    for j in range(eps.shape[0]):
        y_star = (z + eps[j] > 0).astype(float)
        try:
            sel = select_support(X, y_star, cap, cache)
        except (SolverError, FloatingPointError, ValueError):
            sel = FAILED_KEY
        counts[sel] = counts.get(sel, 0) + 1
    return SelectorDistribution(counts, eps.shape[0],
                                WorkingModel(tau, np.asarray(beta_tau, float)))


def simulate_selector_distribution(X: np.ndarray, theta: WorkingModel, m: int,
                                   size_cap: int, seed: int,
                                   *, purpose: str = "selector-noise",
                                   cache: _SelectorCache | None = None
                                   ) -> SelectorDistribution:
    """Selector distribution over m synthetic responses generated at theta.

    ``size_cap`` must equal |theta.tau| in the inferential use; it is kept
    explicit for diagnostics. Deterministic per seed with per-draw
    substreams.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    eps = _noise_matrix(X.shape[0], m, seed, purpose)
    if cache is None:
        cache = _SelectorCache()
    idx = np.asarray([j - 1 for j in theta.tau], dtype=int)
    z = X[:, idx] @ theta.beta_tau if len(idx) else 0.0
    counts: dict = {}
    for j in range(m):
        y_star = (z + eps[j] > 0).astype(float)
        try:
            sel = select_support(X, y_star, size_cap, cache)
        except (SolverError, FloatingPointError, ValueError):
            sel = FAILED_KEY
        counts[sel] = counts.get(sel, 0) + 1
    return SelectorDistribution(counts, m, theta)


def nuclear_stat(dist: SelectorDistribution, observed_tau) -> float:
    """Fraction of draws whose selected support is strictly more frequent
    than the observed selection."""
    if not dist.counts:
        raise ValueError("empty selector distribution")
    p_obs = dist.prob(tuple(observed_tau))
    exceed = 0
    for tau_star, cnt in dist.counts.items():
        if cnt / dist.m > p_obs:
            exceed += cnt
    return exceed / dist.m


@dataclass
class ModelConfidenceSet:
    """Candidate supports retained by the nuclear-statistic test."""

    retained: list            # list of dicts: tau, T_hat, beta_used
    alpha: float
    m: int
    nuisance_mode: str
    excluded: list = field(default_factory=list)

    @property
    def models(self) -> list:
        return [tuple(r["tau"]) for r in self.retained]

    def to_json(self) -> str:
        doc = {"alpha": self.alpha, "m": self.m, "mode": self.nuisance_mode,
               "models": [{"tau": list(r["tau"]), "T_hat": r["T_hat"],
                           "beta_used": [float(b) for b in r["beta_used"]]}
                          for r in self.retained],
               "excluded": self.excluded}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def profile_nuclear(data: Dataset, tau, m: int, seed: int,
                    budget: int = 200, *, beta_init=None,
                    purpose: str | None = None):
    """Nelder-Mead minimization of the estimated nuclear statistic over the
    coefficient vector, with common random numbers across evaluations.

    Returns (beta_opt, T_hat_min). Best-found only; with budget 1 the
    start point is returned unchanged.
    """
    if budget < 1:
        raise ValueError("need budget >= 1")
    tau = tuple(int(j) for j in tau)
    if beta_init is None:
        beta_init = fit_quasi_mle(data, tau).beta_tau
    beta_init = np.asarray(beta_init, dtype=float)
    purpose = purpose or f"mcs-noise:{','.join(map(str, tau))}"
    eps = _noise_matrix(data.n, m, seed, purpose)
    cache = _SelectorCache()
    obs_sel = select_support(data.X, data.y, len(tau), cache)

    def objective(beta):
        dist = _distribution_for_beta(data.X, tau, beta, eps, cache)
        return nuclear_stat(dist, obs_sel)

    t0 = objective(beta_init)
    if budget == 1 or len(tau) == 0:
        return beta_init, t0
    res = minimize(objective, beta_init, method="Nelder-Mead",
                   options={"maxfev": budget, "xatol": 1e-3, "fatol": 1e-9})
    if res.fun <= t0:
        return np.asarray(res.x, dtype=float), float(res.fun)
    return beta_init, t0


def model_confidence_set(data: Dataset, cand, alpha: float, m: int,
                         nuisance_mode: str = "mle", seed: int = 0,
                         *, profile_budget: int = 200) -> ModelConfidenceSet:
    """Retain each candidate support whose nuclear statistic is below alpha.

    ``nuisance_mode`` is "mle" (plug in the quasi-MLE) or "profile"
    (minimize the statistic over the coefficients, started at the MLE).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if nuisance_mode not in ("mle", "profile"):
        raise ValueError(f"unknown nuisance mode {nuisance_mode!r}")
    if m < 1:
        raise ValueError("need m >= 1")
    retained, excluded = [], []
    obs_cache = _SelectorCache()
    for tau in sorted(cand.models, key=lambda t: (len(t), t)):
        try:
            beta_hat = fit_quasi_mle(data, tau).beta_tau if len(tau) else np.zeros(0)
        except (SeparationError, FloatingPointError) as exc:
            excluded.append({"tau": list(tau), "reason": str(exc)})
            continue
        purpose = f"mcs-noise:{','.join(map(str, tau))}"
        obs_sel = select_support(data.X, data.y, len(tau), obs_cache)
        if nuisance_mode == "profile" and len(tau) > 0:
            beta_used, t_hat = profile_nuclear(data, tau, m, seed,
                                               profile_budget,
                                               beta_init=beta_hat,
                                               purpose=purpose)
        else:
            dist = simulate_selector_distribution(
                data.X, WorkingModel(tau, beta_hat), m, len(tau), seed,
                purpose=purpose)
            t_hat = nuclear_stat(dist, obs_sel)
            beta_used = beta_hat
        if t_hat < alpha:
            retained.append({"tau": list(tau), "T_hat": float(t_hat),
                             "beta_used": list(map(float, beta_used))})
    return ModelConfidenceSet(retained, alpha, m, nuisance_mode, excluded)
