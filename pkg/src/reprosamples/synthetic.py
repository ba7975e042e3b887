"""Synthetic binary-response designs and population target definitions.

Four data-generating mean functions over an AR-correlated Gaussian design:
two dense models where the sparse logistic working model is misspecified
(M1, M2) and two exactly sparse logistic models (M3, M4). The population
target (s, tau0, beta0) is defined by forward stepwise search that
maximizes Monte-Carlo expected log-likelihood, with the sparsity chosen by
an information criterion evaluated at the observed-data sample size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .glm import Dataset, fit_quasi_mle, inv_logit, loglik
from .candidates import log_binom
from .rng import substream

_FULL_SCALE = {
    "M1": (500, 1000, 5000),
    "M2": (500, 1000, 5000),
    "M3": (500, 1000, 5000),
    "M4": (900, 1000, 10000),
}


@dataclass(frozen=True)
class SimDesign:
    """One of the four synthetic designs, possibly at reduced scale."""

    model_id: str
    n: int
    p: int
    d_default: int
    gamma: np.ndarray
    omega: np.ndarray
    beta: np.ndarray


def sim_design(model_id: str, n: int | None = None, p: int | None = None,
               d: int | None = None) -> SimDesign:
    """Build a design, defaulting each of n, p, d to its full-scale value."""
    if model_id not in _FULL_SCALE:
        raise ValueError(f"unknown design {model_id!r}")
    n0, p0, d0 = _FULL_SCALE[model_id]
    n, p, d = n or n0, p or p0, d or d0
    if n < 1 or p < 4:
        raise ValueError("need n >= 1 and p >= 4")
    gamma = np.zeros(p)
    gamma[:4] = (5.0, 4.0, 3.0, 2.5)
    gamma[4::2] = 0.1
    gamma[5::2] = -0.1
    omega = np.ones(p)
    omega[1::2] = -1.0
    beta = np.zeros(p)
    beta[:4] = (5.0, 4.0, 3.0, 1.0) if model_id == "M4" else (5.0, 4.0, 3.0, 2.5)
    if model_id in ("M1", "M2"):
        beta = np.zeros(p)
    return SimDesign(model_id, n, p, d, gamma, omega, beta)


def gen_design(n: int, p: int, seed: int) -> np.ndarray:
    """n rows i.i.d. N(0, Sigma) with Sigma_ij = 0.2^|i-j|.

    Uses the AR(1) recursion X_1 = Z_1, X_k = 0.2 X_{k-1} + sqrt(0.96) Z_k,
    which reproduces the covariance exactly in O(np) without a p x p
    factorization.
    """
    if n < 1 or p < 1:
        raise ValueError("need n, p >= 1")
    rng = substream(seed, "design", 0)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    scale = np.sqrt(1.0 - 0.04)
    for k in range(1, p):
        X[:, k] = 0.2 * X[:, k - 1] + scale * Z[:, k]
    return X


def mean_function(design: SimDesign, X) -> np.ndarray:
    """Case probability mu(X) for the design; rows or a single row."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != design.p:
        raise ValueError(f"rows must have length {design.p}")
    if design.model_id in ("M3", "M4"):
        mu = inv_logit(X @ design.beta)
    elif design.model_id == "M1":
        base = inv_logit(X @ design.gamma)
        mu = 0.5 + 0.95 * (base - 0.5) + 0.05 * (ndtr(X @ design.omega) - 0.5)
    else:  # M2
        base = inv_logit(X @ design.gamma)
        zw = X @ design.omega
        wiggle = np.where(base >= 0.5, np.sin(zw), np.sin(5.0 * zw))
        mu = np.clip(base + 0.2 * np.abs(base - 0.5) * wiggle, 0.0, 1.0)
    return float(mu[0]) if single else mu


def gen_response(mu, seed: int, *, with_u: bool = False):
    """y_i = 1{mu_i > u_i} with u_i i.i.d. Unif(0,1).

    With ``with_u`` also returns the realized uniforms so the exact
    data-generating noise can be reconstructed for oracle tests.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if np.any((mu < 0) | (mu > 1)):
        raise ValueError("mu entries must lie in [0, 1]")
    u = substream(seed, "response", 0).uniform(0.0, 1.0, mu.shape[0])
    y = (mu > u).astype(float)
    return (y, u) if with_u else y


def realized_working_noise(u: np.ndarray) -> np.ndarray:
    """Working noise eps = -g(u) for designs where the working model is the
    data-generating model (no distortion term)."""
    u = np.asarray(u, dtype=float)
    return -(np.log(u) - np.log1p(-u))


@dataclass(frozen=True)
class PopulationTarget:
    """Population-defined (s, tau0, beta0) plus the stepwise trace."""

    s: int
    tau0: tuple
    beta0: np.ndarray
    n_mc: int
    trace: tuple = field(default=())


def _stepwise_path(data: Dataset, s_u: int, screen_top: int = 25):
    """Forward stepwise supports of sizes 1..s_u maximizing sample
    log-likelihood, with score-based screening of entry candidates.

    At each step the candidate columns are ranked by the absolute score of
    the current fit's residual, and only the top ``screen_top`` are fitted
    exactly. Returns [(tau, beta, loglik_mean)] per size.
    """
    n, p = data.n, data.p
    current: list = []
    beta_cur = np.zeros(0)
    out = []
    for _ in range(s_u):
        if current:
            z = data.X[:, [j - 1 for j in current]] @ beta_cur
        else:
            z = np.zeros(n)
        resid = data.y - inv_logit(z)
        scores = np.abs(resid @ data.X) / n
        scores[[j - 1 for j in current]] = -np.inf
        order = np.argsort(scores)[::-1][:screen_top]
        best = None
        for k0 in order:
            tau_try = tuple(sorted(current + [int(k0) + 1]))
            try:
                fit = fit_quasi_mle(data, tau_try)
            except Exception:
                continue
            ll = loglik(data, fit)
            if best is None or ll > best[2]:
                best = (tau_try, fit.beta_tau, ll)
        if best is None:
            raise RuntimeError("stepwise fit failure: no candidate column "
                               "admits a finite fit")
        current = list(best[0])
        beta_cur = best[1]
        out.append(best)
    return out


def population_targets(design: SimDesign, s_u: int = 10,
                       n_mc: int = 50000, seed: int = 0) -> PopulationTarget:
    """Monte-Carlo population target for a design.

    Draws n_mc samples, runs forward stepwise up to size s_u (each size
    fitted by quasi-MLE on the Monte-Carlo sample), then picks the size s
    minimizing -2n*E[loglik] + s*log n + 2*log C(p, s) with n the design's
    observed-data sample size.
    """
    if n_mc < 1000:
        raise ValueError("need n_mc >= 1000")
    X = gen_design(n_mc, design.p, seed)
    mu = mean_function(design, X)
    y = gen_response(mu, seed + 1)
    data = Dataset(X, y)
    path = _stepwise_path(data, s_u)
    n = design.n
    crits = [2.0 * n * np.log(2.0)]  # empty model: l = -log 2 per observation
    for k, (_, _, ll) in enumerate(path, start=1):
        crits.append(-2.0 * n * ll + k * np.log(n) + 2.0 * log_binom(design.p, k))
    s = int(np.argmin(crits))
    trace = tuple((k, float(c)) for k, c in enumerate(crits))
    if s == 0:
        return PopulationTarget(0, (), np.zeros(0), n_mc, trace)
    tau0, beta0, _ = path[s - 1]
    return PopulationTarget(s, tau0, np.asarray(beta0, float), n_mc, trace)


def export_csv(X: np.ndarray, y: np.ndarray, path, u=None):
    """Write a dataset as CSV with header "y,x1,...,xp"; optionally write
    the realized uniforms alongside (one value per line)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    with open(path, "w", newline="\n") as fh:
        fh.write("y," + ",".join(f"x{k}" for k in range(1, p + 1)) + "\n")
        for i in range(n):
            fh.write(repr(int(y[i])) + ","
                     + ",".join(repr(float(v)) for v in X[i]) + "\n")
    if u is not None:
        with open(str(path) + ".u", "w", newline="\n") as fh:
            for v in np.asarray(u, dtype=float):
                fh.write(repr(float(v)) + "\n")
