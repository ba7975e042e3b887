"""Working-GLM core: links, log-likelihood, derivatives, quasi-MLE.

The working model is a low-dimensional GLM on a support ``tau``; the
log-likelihood here is always the *sample mean* over observations.
Consumers that need sums multiply by ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SeparationError(RuntimeError):
    """The quasi-MLE does not exist (complete or quasi-complete separation)."""


@dataclass(frozen=True)
class Dataset:
    """Design matrix (n x p) with a binary response vector.

    Columns are indexed 1-based everywhere in the public API, matching the
    serialized formats.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, p = X.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ValueError("y length must match the number of rows of X")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y must contain only 0s and 1s")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def columns(self, tau) -> np.ndarray:
        """Submatrix X[:, tau] for a 1-based support."""
        idx = np.asarray(list(tau), dtype=int) - 1
        return self.X[:, idx]


def _check_support(tau, p: int) -> tuple[int, ...]:
    tau = tuple(int(j) for j in tau)
    if any(j < 1 or j > p for j in tau):
        raise ValueError(f"support indices must lie in [1, {p}]: {tau}")
    if len(set(tau)) != len(tau) or list(tau) != sorted(tau):
        raise ValueError(f"support must be strictly increasing: {tau}")
    return tau


@dataclass(frozen=True)
class WorkingModel:
    """A support (1-based, sorted) together with its coefficient vector."""

    tau: tuple[int, ...]
    beta_tau: np.ndarray

    def __post_init__(self):
        tau = tuple(int(j) for j in self.tau)
        if list(tau) != sorted(set(tau)) or (tau and tau[0] < 1):
            raise ValueError(f"invalid support {tau}")
        beta = np.asarray(self.beta_tau, dtype=np.float64).ravel()
        if beta.shape[0] != len(tau):
            raise ValueError("beta_tau length must equal |tau|")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "beta_tau", beta)


def link_logit(p):
    """Logit link g(p) = log(p / (1-p)); zero at p = 1/2."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("link_logit requires p in (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def inv_logit(z):
    """Stable inverse logit; no overflow for |z| <= 700."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out) if out.ndim == 0 else out


def _linear_predictor(data: Dataset, model: WorkingModel) -> np.ndarray:
    tau = _check_support(model.tau, data.p)
    if len(tau) == 0:
        return np.zeros(data.n)
    z = data.columns(tau) @ model.beta_tau
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite linear predictor")
    return z


def loglik(data: Dataset, model: WorkingModel) -> float:
    """Mean working log-likelihood: mean_i [y_i z_i - log(1 + e^{z_i})]."""
    z = _linear_predictor(data, model)
    return float(np.mean(data.y * z - np.logaddexp(0.0, z)))


def loglik_grad(data: Dataset, model: WorkingModel) -> np.ndarray:
    """Gradient of the mean log-likelihood: mean_i (y_i - eta_i) x_{i,tau}."""
    z = _linear_predictor(data, model)
    Xt = data.columns(model.tau)
    return Xt.T @ (data.y - inv_logit(z)) / data.n


def loglik_hess(data: Dataset, model: WorkingModel) -> np.ndarray:
    """Hessian of the mean log-likelihood (negative semidefinite)."""
    z = _linear_predictor(data, model)
    Xt = data.columns(model.tau)
    w = inv_logit(z)
    w = w * (1.0 - w)
    return -(Xt.T * w) @ Xt / data.n


def per_obs_grad(data: Dataset, model: WorkingModel) -> np.ndarray:
    """Per-observation score vectors, one row per observation."""
    z = _linear_predictor(data, model)
    Xt = data.columns(model.tau)
    return Xt * (data.y - inv_logit(z))[:, None]


def fit_quasi_mle(
    data: Dataset,
    tau,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    beta_bound: float = 1e4,
    beta0: np.ndarray | None = None,
) -> WorkingModel:
    """Quasi-MLE on a fixed support by Newton iterations with step halving.

    Raises SeparationError when the maximizer diverges (norm bound exceeded,
    no convergence, or all signed margins strictly positive at the fit).
    """
    tau = _check_support(tau, data.p)
    k = len(tau)
    if k >= data.n:
        raise ValueError("quasi-MLE needs |tau| < n")
    y = data.y
    if y.min() == y.max():
        raise SeparationError("response contains a single class")
    if k == 0:
        return WorkingModel(tau, np.zeros(0))
    Xt = np.ascontiguousarray(data.columns(tau))
    n = data.n
    beta = np.zeros(k) if beta0 is None else np.asarray(beta0, dtype=float).copy()

    def objective(b):
        z = Xt @ b
        return float(np.mean(y * z - np.logaddexp(0.0, z)))

    obj = objective(beta)
    for _ in range(max_iter):
        z = Xt @ beta
        eta = inv_logit(z)
        grad = Xt.T @ (y - eta) / n
        if np.max(np.abs(grad)) <= tol:
            signed = (2.0 * y - 1.0) * z
            if np.min(signed) > 0.0:
                raise SeparationError("all signed margins positive: MLE diverges")
            return WorkingModel(tau, beta)
        w = np.clip(eta * (1.0 - eta), 1e-12, None)
        H = (Xt.T * w) @ Xt / n
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise FloatingPointError("singular Hessian in quasi-MLE") from exc
        t = 1.0
        for _ in range(50):
            cand = beta + t * step
            cand_obj = objective(cand)
            if cand_obj >= obj:
                break
            t *= 0.5
        beta = beta + t * step
        obj = objective(beta)
        if np.linalg.norm(beta) > beta_bound:
            raise SeparationError(f"coefficient norm exceeded {beta_bound:g}")
    raise SeparationError(f"quasi-MLE did not converge in {max_iter} iterations")
