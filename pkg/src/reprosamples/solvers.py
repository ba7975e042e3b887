"""Penalized margin-loss solvers.

Two families share the coordinate-descent core:

* ridge-initialized adaptive-L1 on the noise-augmented design, with a free
  unpenalized scale ``sigma`` on the synthetic noise column (logistic or
  smoothed hinge loss);
* the plain L1 logistic solution path on the raw design, plus the
  size-capped path selector.

Margins are always ``(2y-1) * (x' beta + sigma * eps)``; losses are
nonincreasing functions of the margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

HINGE_SMOOTHING = 1e-3
WEIGHT_CAP = 1e6

LOSS_LOGISTIC = 0
LOSS_HINGE = 1


class SolverError(RuntimeError):
    """Coordinate descent failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class SurrogateLoss:
    """Convex nonincreasing surrogate of the 0-1 loss, as a margin function."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("logistic", "hinge"):
            raise ValueError(f"unknown loss kind {self.kind!r}")

    @property
    def code(self) -> int:
        return LOSS_LOGISTIC if self.kind == "logistic" else LOSS_HINGE

    def value(self, m):
        """Loss at margins m. Hinge is the exact (unsmoothed) hinge."""
        m = np.asarray(m, dtype=np.float64)
        if self.kind == "logistic":
            return np.logaddexp(0.0, -m)
        return np.maximum(0.0, 1.0 - m)

    def smoothed_value(self, m):
        """Loss as minimized by the solver (hinge Huberized at 1e-3)."""
        m = np.asarray(m, dtype=np.float64)
        if self.kind == "logistic":
            return np.logaddexp(0.0, -m)
        d = HINGE_SMOOTHING
        out = np.where(
            m >= 1.0,
            0.0,
            np.where(m <= 1.0 - d, 1.0 - m - d / 2.0, (1.0 - m) ** 2 / (2.0 * d)),
        )
        return out


@dataclass(frozen=True)
class AugmentedFit:
    """Solution of the adaptive-L1 problem on the noise-augmented design."""

    beta: np.ndarray
    sigma: float
    lam: float
    support: tuple[int, ...]

    @staticmethod
    def from_beta(beta: np.ndarray, sigma: float, lam: float) -> "AugmentedFit":
        support = tuple(int(k + 1) for k in np.flatnonzero(beta))
        return AugmentedFit(np.asarray(beta, dtype=float), float(sigma), float(lam), support)


@dataclass(frozen=True)
class L1Path:
    """Warm-started lasso solution path on a strictly decreasing lambda grid."""

    lambdas: np.ndarray
    betas: np.ndarray
    supports: list
    sizes: np.ndarray


@njit(cache=True, inline="always")
def _loss_val(m, kind, delta):
    if kind == LOSS_LOGISTIC:
        if m > 0.0:
            return np.log1p(np.exp(-m))
        return -m + np.log1p(np.exp(m))
    if m >= 1.0:
        return 0.0
    if m <= 1.0 - delta:
        return 1.0 - m - delta / 2.0
    return (1.0 - m) * (1.0 - m) / (2.0 * delta)


@njit(cache=True, inline="always")
def _loss_d1(m, kind, delta):
    if kind == LOSS_LOGISTIC:
        if m > 0.0:
            e = np.exp(-m)
            return -e / (1.0 + e)
        return -1.0 / (1.0 + np.exp(m))
    if m >= 1.0:
        return 0.0
    if m <= 1.0 - delta:
        return -1.0
    return -(1.0 - m) / delta


@njit(cache=True, inline="always")
def _loss_d2(m, kind, delta):
    if kind == LOSS_LOGISTIC:
        if m > 0.0:
            e = np.exp(-m)
            s = 1.0 / (1.0 + e)
            return s * (1.0 - s)
        e = np.exp(m)
        s = e / (1.0 + e)
        return s * (1.0 - s)
    if m >= 1.0 or m <= 1.0 - delta:
        return 0.0
    return 1.0 / delta


@njit(cache=True)
def _total_loss(margins, kind, delta):
    s = 0.0
    for i in range(margins.shape[0]):
        s += _loss_val(margins[i], kind, delta)
    return s


@njit(cache=True)
def _coord_step(A_col, margins, beta_k, lam_w, kind, delta):
    """One safeguarded proximal-Newton update of a single coordinate.

    Returns the accepted new value; ``margins`` is updated in place.
    Acceptance requires the penalized objective restricted to this
    coordinate not to increase.
    """
    n = margins.shape[0]
    g = 0.0
    h = 0.0
    for i in range(n):
        a = A_col[i]
        g += _loss_d1(margins[i], kind, delta) * a
        h += _loss_d2(margins[i], kind, delta) * a * a
    col_sq = 0.0
    for i in range(n):
        col_sq += A_col[i] * A_col[i]
    # In locally linear zones (exact/smoothed hinge away from the elbow) the
    # curvature vanishes; floor it at a fraction of ||col||^2 so proposals
    # stay line-searchable. The proximal fixed point does not depend on h.
    if h < 0.1 * col_sq + 1e-12:
        h = 0.1 * col_sq + 1e-12
    u = beta_k - g / h
    thr = lam_w / h
    if u > thr:
        z = u - thr
    elif u < -thr:
        z = u + thr
    else:
        z = 0.0
    if z == beta_k:
        return beta_k
    cur = _total_loss(margins, kind, delta) + lam_w * abs(beta_k)
    t = 1.0
    for _ in range(30):
        cand = beta_k + t * (z - beta_k)
        val = 0.0
        for i in range(n):
            val += _loss_val(margins[i] + A_col[i] * (cand - beta_k), kind, delta)
        if val + lam_w * abs(cand) <= cur + 1e-12 * (1.0 + abs(cur)):
            for i in range(n):
                margins[i] += A_col[i] * (cand - beta_k)
            return cand
        t *= 0.5
    return beta_k


@njit(cache=True)
def _cd_augmented(A, e, beta, sigma, lam, weights, kind, delta,
                  use_sigma, max_sweeps, tol):
    """Cyclic coordinate descent on sum-loss + lam * sum w_k |beta_k|.

    A has rows (2y_i - 1) x_i; e is the signed noise column. Returns
    (beta, sigma, sweeps, converged, objective trace).
    """
    n, p = A.shape
    margins = np.empty(n)
    for i in range(n):
        m = sigma * e[i]
        for k in range(p):
            m += A[i, k] * beta[k]
        margins[i] = m
    obj_trace = np.empty(max_sweeps)
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        max_change = 0.0
        for k in range(p):
            old = beta[k]
            beta[k] = _coord_step(A[:, k], margins, old, lam * weights[k], kind, delta)
            ch = abs(beta[k] - old)
            if ch > max_change:
                max_change = ch
        if use_sigma:
            old = sigma
            sigma = _coord_step(e, margins, old, 0.0, kind, delta)
            ch = abs(sigma - old)
            if ch > max_change:
                max_change = ch
        obj = _total_loss(margins, kind, delta)
        for k in range(p):
            obj += lam * weights[k] * abs(beta[k])
        obj_trace[sweep] = obj
        sweeps = sweep + 1
        if max_change < tol:
            converged = True
            break
    return beta, sigma, sweeps, converged, obj_trace[:sweeps]


@njit(cache=True)
def _cd_l1_path(A, lambdas, max_sweeps, tol, stop_support):
    """Warm-started mean-loss logistic lasso path over a decreasing grid.

    Stops early once the support size exceeds ``stop_support`` (pass a
    value >= p to disable). Returns (betas, sizes, n_done).
    """
    n, p = A.shape
    G = lambdas.shape[0]
    betas = np.zeros((G, p))
    sizes = np.zeros(G, dtype=np.int64)
    beta = np.zeros(p)
    margins = np.zeros(n)
    n_done = 0
    for g in range(G):
        lam_n = lambdas[g] * n  # mean-loss lambda on the sum-loss scale
        for _ in range(max_sweeps):
            max_change = 0.0
            for k in range(p):
                old = beta[k]
                beta[k] = _coord_step(A[:, k], margins, old, lam_n, LOSS_LOGISTIC, 0.0)
                ch = abs(beta[k] - old)
                if ch > max_change:
                    max_change = ch
            if max_change < tol:
                break
        size = 0
        for k in range(p):
            betas[g, k] = beta[k]
            if beta[k] != 0.0:
                size += 1
        sizes[g] = size
        n_done = g + 1
        if size > stop_support:
            break
    return betas, sizes, n_done


def _signed_design(X, y):
    s = (2.0 * np.asarray(y, dtype=np.float64) - 1.0)
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64) * s[:, None]), s


def _penalized_objective(A, e, beta, sigma, lam, weights, kind):
    m = A @ beta + sigma * e
    if kind == LOSS_LOGISTIC:
        base = float(np.sum(np.logaddexp(0.0, -m)))
    else:
        d = HINGE_SMOOTHING
        base = float(np.sum(np.where(
            m >= 1.0, 0.0,
            np.where(m <= 1.0 - d, 1.0 - m - d / 2.0,
                     (1.0 - m) ** 2 / (2.0 * d)))))
    return base + lam * float(weights @ np.abs(beta))


def _active_newton_polish(A, e, beta, sigma, lam, weights, kind,
                          max_iter=25):
    """Damped Newton on (active coordinates, sigma) with fixed signs.

    Escapes the slow coordinate-descent tail near the hinge elbows. Line
    search on the true penalized objective keeps every accepted step a
    strict non-increase; zero coordinates are untouched.
    """
    act = np.flatnonzero(beta)
    n = A.shape[0]
    Z = np.hstack([A[:, act], e[:, None]])
    q = act.size + 1
    signs = np.sign(beta[act])
    pen_grad = np.append(lam * weights[act] * signs, 0.0)
    theta = np.append(beta[act], sigma)
    delta = HINGE_SMOOTHING

    def full(th):
        b = beta.copy()
        b[act] = th[:-1]
        return b, th[-1]

    obj = _penalized_objective(A, e, beta, sigma, lam, weights, kind)
    for _ in range(max_iter):
        m = Z @ theta
        if kind == LOSS_LOGISTIC:
            sgm = 1.0 / (1.0 + np.exp(-np.clip(m, -700, 700)))
            d1 = sgm - 1.0
            d2 = sgm * (1.0 - sgm)
        else:
            d1 = np.where(m >= 1.0, 0.0,
                          np.where(m <= 1.0 - delta, -1.0,
                                   -(1.0 - m) / delta))
            d2 = np.where((m < 1.0) & (m > 1.0 - delta), 1.0 / delta, 0.0)
        grad = Z.T @ d1 + pen_grad
        H = (Z.T * d2) @ Z
        H[np.diag_indices_from(H)] += 1e-8 * n + 1e-12
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        accepted = False
        for _ in range(40):
            cand = theta - t * step
            # keep active signs so the penalty stays differentiable
            if np.all(np.sign(cand[:-1]) * signs > 0):
                b_c, s_c = full(cand)
                val = _penalized_objective(A, e, b_c, s_c, lam, weights, kind)
                if val <= obj - 1e-14 * (1.0 + abs(obj)):
                    theta, obj, accepted = cand, val, True
                    break
            t *= 0.5
        if not accepted:
            break
    b, s = full(theta)
    return b, s, obj


def fit_adaptive_l1(data, eps_star, loss: SurrogateLoss, lam: float,
                    weights: np.ndarray, *, beta0=None, sigma0=0.0,
                    max_sweeps: int = 5000, tol: float = 1e-7,
                    check_monotone: bool = True) -> AugmentedFit:
    """Adaptive-L1 fit on the noise-augmented design at a fixed lambda.

    Minimizes sum_i L((2y_i-1)(x_i' beta + sigma eps*_i)) + lam sum_k w_k|beta_k|
    by cyclic proximal coordinate descent; sigma is updated without penalty
    each sweep. Convergence is max coefficient change < tol within
    ``max_sweeps`` total sweeps; a stalled descent tail is accelerated by
    an active-set Newton polish between sweep chunks.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if np.any(weights <= 0) or np.any(weights > WEIGHT_CAP * (1 + 1e-12)):
        raise ValueError(f"weights must lie in (0, {WEIGHT_CAP:g}]")
    A, s = _signed_design(data.X, data.y)
    e = np.ascontiguousarray(s * np.asarray(eps_star, dtype=np.float64))
    beta = np.zeros(data.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    sigma = float(sigma0)
    traces = []
    total = 0
    converged = False
    while total < max_sweeps:
        chunk = min(200, max_sweeps - total)
        beta, sigma, sweeps, converged, trace = _cd_augmented(
            A, e, beta, sigma, float(lam), weights,
            loss.code, HINGE_SMOOTHING, True, chunk, tol)
        traces.append(trace)
        total += sweeps
        if converged:
            break
        beta, sigma, _ = _active_newton_polish(A, e, beta, sigma, float(lam),
                                               weights, loss.code)
    trace = np.concatenate(traces) if traces else np.empty(0)
    if check_monotone and trace.size > 1:
        rises = np.diff(trace) > 1e-8 * (1.0 + np.abs(trace[:-1]))
        if np.any(rises):
            raise SolverError("objective increased across sweeps",
                              AugmentedFit.from_beta(beta, sigma, lam))
    if not converged:
        raise SolverError(f"no convergence in {max_sweeps} sweeps",
                          AugmentedFit.from_beta(beta, sigma, lam))
    return AugmentedFit.from_beta(beta, sigma, lam)


def augmented_objective(data, eps_star, loss: SurrogateLoss, fit: AugmentedFit,
                        weights: np.ndarray) -> float:
    """Penalized objective value at a fit (smoothed loss, sum scale)."""
    margins = (2.0 * data.y - 1.0) * (data.X @ fit.beta + fit.sigma * np.asarray(eps_star))
    pen = fit.lam * float(np.sum(np.asarray(weights) * np.abs(fit.beta)))
    return float(np.sum(loss.smoothed_value(margins))) + pen


def adaptive_weights(beta_tilde: np.ndarray, floor: float = 1.0 / WEIGHT_CAP) -> np.ndarray:
    """Adaptive-lasso weights 1/|beta_tilde| with magnitudes floored."""
    return 1.0 / np.maximum(np.abs(np.asarray(beta_tilde, dtype=float)), floor)


def _ridge_newton(A, e, lam, kind, *, max_iter=50, tol=1e-6):
    """Newton with step halving for sum-loss + lam ||beta||_2^2 (sigma free)."""
    n, p = A.shape
    Z = np.hstack([A, e[:, None]])
    pen = np.full(p + 1, 2.0 * lam)
    pen[p] = 0.0
    theta = np.zeros(p + 1)
    delta = HINGE_SMOOTHING

    def value(th):
        m = Z @ th
        if kind == LOSS_LOGISTIC:
            base = float(np.sum(np.logaddexp(0.0, -m)))
        else:
            base = float(np.sum(np.where(
                m >= 1.0, 0.0,
                np.where(m <= 1.0 - delta, 1.0 - m - delta / 2.0,
                         (1.0 - m) ** 2 / (2.0 * delta)))))
        return base + lam * float(th[:p] @ th[:p])

    obj = value(theta)
    for _ in range(max_iter):
        m = Z @ theta
        if kind == LOSS_LOGISTIC:
            sgm = 1.0 / (1.0 + np.exp(-np.clip(m, -700, 700)))
            d1 = sgm - 1.0
            d2 = sgm * (1.0 - sgm)
        else:
            d1 = np.where(m >= 1.0, 0.0,
                          np.where(m <= 1.0 - delta, -1.0, -(1.0 - m) / delta))
            d2 = np.where((m < 1.0) & (m > 1.0 - delta), 1.0 / delta, 0.0)
        grad = Z.T @ d1 + pen * theta
        if np.max(np.abs(grad)) <= tol * n:
            break
        H = (Z.T * d2) @ Z + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-8 * n
        step = np.linalg.solve(H, grad)
        t = 1.0
        improved = False
        for _ in range(40):
            cand = theta - t * step
            cv = value(cand)
            if cv <= obj - 1e-12 * (1.0 + abs(obj)):
                theta, obj, improved = cand, cv, True
                break
            t *= 0.5
        if not improved:
            break
    return theta[:p], float(theta[p])


def fit_ridge_cv(data, eps_star, loss: SurrogateLoss, folds: int = 3,
                 lam_grid=None):
    """Ridge fit on the augmented design, penalty level chosen by K-fold CV.

    Only the covariate coefficients are penalized; sigma stays free. Used to
    form adaptive-lasso weights.
    """
    if folds < 2:
        raise ValueError("need folds >= 2")
    y = data.y
    if y.min() == y.max():
        raise ValueError("degenerate response: a single class")
    A, s = _signed_design(data.X, data.y)
    e = s * np.asarray(eps_star, dtype=np.float64)
    n = data.n
    if lam_grid is None:
        lam_grid = np.logspace(-2, 2, 5) * n / 100.0
    idx = np.arange(n)
    fold_of = idx % folds
    cv_loss = np.zeros(len(lam_grid))
    for f in range(folds):
        tr = fold_of != f
        va = ~tr
        for li, lam in enumerate(lam_grid):
            bt, st = _ridge_newton(A[tr], e[tr], lam, loss.code)
            mv = A[va] @ bt + st * e[va]
            cv_loss[li] += float(np.sum(loss.smoothed_value(mv)))
    best = int(np.argmin(cv_loss))
    beta, sigma = _ridge_newton(A, e, float(lam_grid[best]), loss.code)
    return beta, sigma


def profile_sigma_zero(data, eps_star, loss: SurrogateLoss) -> float:
    """Unpenalized noise scale fitted at beta = 0."""
    A, s = _signed_design(data.X, data.y)
    e = np.ascontiguousarray(s * np.asarray(eps_star, dtype=np.float64))
    beta = np.zeros(data.p)
    _, sigma, _, _, _ = _cd_augmented(
        A, e, beta, 0.0, 1e300, np.ones(data.p),
        loss.code, HINGE_SMOOTHING, True, 500, 1e-10)
    return float(sigma)


def adaptive_lambda_max(data, eps_star, loss: SurrogateLoss,
                        weights: np.ndarray) -> float:
    """Smallest lambda at which the adaptive-L1 solution is all-zero.

    KKT bound at beta = 0 with sigma fitted unpenalized; (0, sigma_hat) is
    a coordinate-descent fixed point for any lambda at or above the bound.
    """
    A, s = _signed_design(data.X, data.y)
    e = np.ascontiguousarray(s * np.asarray(eps_star, dtype=np.float64))
    sigma = profile_sigma_zero(data, eps_star, loss)
    m = sigma * e
    d1 = np.array([_loss_d1(mi, loss.code, HINGE_SMOOTHING) for mi in m])
    score = np.abs(A.T @ d1) / np.asarray(weights, dtype=float)
    return float(np.max(score))


def l1_logistic_path(data, grid_size: int = 50, *, lam_min_ratio: float = 1e-3,
                     max_sweeps: int = 1000, tol: float = 1e-7,
                     stop_support: int | None = None) -> L1Path:
    """Plain L1 logistic solution path (mean loss, no noise column).

    The grid is log-spaced from the all-zero KKT bound lambda_max down to
    ``lam_min_ratio * lambda_max``. ``stop_support`` truncates the path once
    the support grows past that size (used by the path selector).
    """
    if grid_size < 2:
        raise ValueError("need grid_size >= 2")
    A, _ = _signed_design(data.X, data.y)
    # score bound at beta = 0: eta = 1/2 everywhere
    lam_max = float(np.max(np.abs((data.y - 0.5) @ data.X))) / data.n
    lam_max = max(lam_max, 1e-12) * (1 + 1e-10)
    lambdas = np.logspace(np.log10(lam_max), np.log10(lam_max * lam_min_ratio),
                          grid_size)
    cap = data.p + 1 if stop_support is None else int(stop_support)
    betas, sizes, n_done = _cd_l1_path(A, lambdas, max_sweeps, tol, cap)
    betas = betas[:n_done]
    sizes = sizes[:n_done]
    supports = [tuple(int(k + 1) for k in np.flatnonzero(b)) for b in betas]
    return L1Path(lambdas[:n_done], betas, supports, sizes)


def path_model_selector(path: L1Path, size_cap: int) -> tuple[int, ...]:
    """Largest support of size <= size_cap on the path; ties prefer the
    smallest lambda among maximizers. Empty if nothing qualifies."""
    if size_cap < 0:
        raise ValueError("size_cap must be nonnegative")
    best: tuple[int, ...] = ()
    best_size = -1
    for g in range(len(path.lambdas)):
        sz = int(path.sizes[g])
        if sz <= size_cap and sz >= best_size:
            # >= keeps the last (smallest-lambda) support among equal sizes
            best = path.supports[g]
            best_size = sz
    return best
