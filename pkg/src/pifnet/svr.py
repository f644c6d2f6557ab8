"""Epsilon-tube support vector regression with an RBF kernel, trained by
sequential minimal optimization on the dual.

The dual is expressed in the net coefficients beta_i = alpha_i - alpha_i*
(one bounded variable per training point):

    maximize  W(beta) = -1/2 beta' K beta + y' beta - eps * sum|beta_i|
    subject to  sum beta_i = 0,  -C <= beta_i <= C

Each iteration picks the maximal-violating pair: the point whose objective
slope for increasing beta is largest against the point whose slope bound
for decreasing beta is smallest, then moves mass between them with an
exact line search over the piecewise-quadratic objective. Selection uses
first-index tie breaking and no randomness, so training is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConvergenceError, DataQualityError, ParameterError

_BOUND_ATOL = 1e-9
_SV_ATOL = 1e-10


@dataclass(frozen=True)
class SvrParams:
    C: float = 10.0
    epsilon_tube: float = 0.1
    gamma: Optional[float] = None  # None -> 1/F
    tol: float = 1e-3
    max_iter: int = 200_000

    def __post_init__(self):
        if self.C <= 0 or self.epsilon_tube < 0 or self.tol <= 0:
            raise ParameterError("C and tol must be positive, epsilon_tube nonnegative")
        if self.gamma is not None and self.gamma <= 0:
            raise ParameterError("gamma must be positive")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be at least 1")


@dataclass
class SvrModel:
    """Trained regressor: kernel expansion over kept support vectors.

    ``objective_path`` records the dual objective after each accepted
    optimization step (exact recomputation when requested at training
    time, analytic increments otherwise).
    """

    support_vectors: np.ndarray  # (S, F)
    dual_coeffs: np.ndarray      # (S,)
    bias: float
    kernel_gamma: float
    C: float
    epsilon_tube: float
    objective_path: np.ndarray = field(default_factory=lambda: np.empty(0))


def _rbf(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _dual_objective(beta: np.ndarray, kernel: np.ndarray, y: np.ndarray,
                    eps_tube: float) -> float:
    return float(-0.5 * beta @ kernel @ beta + y @ beta - eps_tube * np.sum(np.abs(beta)))


def _pair_step(beta_i: float, beta_j: float, yi: float, yj: float,
               gi: float, gj: float, eta: float, eps_tube: float,
               c_box: float) -> Tuple[float, float]:
    """Exact line search for transferring mass delta from j to i.

    Returns (delta, objective_gain). The objective along delta is concave
    and piecewise quadratic with possible kinks where beta_i or beta_j
    crosses zero.
    """
    delta_max = min(c_box - beta_i, beta_j + c_box)
    if delta_max <= 0.0:
        return 0.0, 0.0
    boundaries: List[float] = []
    if beta_i < 0.0 and -beta_i < delta_max:
        boundaries.append(-beta_i)
    if beta_j > 0.0 and beta_j < delta_max:
        boundaries.append(beta_j)
    boundaries = sorted(set(boundaries)) + [delta_max]

    sigma_i = 1.0 if beta_i >= 0.0 else -1.0
    sigma_j = 1.0 if beta_j > 0.0 else -1.0
    delta = 0.0
    gain = 0.0
    lo = 0.0
    for hi in boundaries:
        slope_lo = (yi - gi - eps_tube * sigma_i) - (yj - gj - eps_tube * sigma_j) - eta * lo
        if slope_lo <= 0.0:
            break
        if eta > 0.0:
            end = min(hi, lo + slope_lo / eta)
        else:
            end = hi
        seg = end - lo
        gain += slope_lo * seg - 0.5 * eta * seg * seg
        delta = end
        if end < hi:
            break
        # crossing a kink at hi flips the sign of whichever variable hits 0
        if beta_i < 0.0 and hi == -beta_i:
            sigma_i = 1.0
        if beta_j > 0.0 and hi == beta_j:
            sigma_j = -1.0
        lo = hi
    return delta, gain


def train_svr(X: np.ndarray, y: np.ndarray, params: SvrParams = SvrParams(),
              record_objective: bool = False) -> SvrModel:
    """Fit the epsilon-SVR dual to KKT tolerance ``params.tol``.

    Raises :class:`ConvergenceError` carrying the final KKT violation if
    the iteration budget runs out. With ``record_objective`` the dual
    objective is recomputed exactly after every accepted step (quadratic
    cost; meant for diagnostics on small problems).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ParameterError(f"{X.shape[0]} rows of X but {y.shape[0]} targets")
    if X.shape[0] < 1:
        raise ParameterError("need at least one training point")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataQualityError("training data contains non-finite values")

    n, n_features = X.shape
    gamma = params.gamma if params.gamma is not None else 1.0 / max(n_features, 1)
    c_box = params.C
    eps_tube = params.epsilon_tube

    kernel = _rbf(X, X, gamma)
    beta = np.zeros(n)
    g = np.zeros(n)  # g_i = sum_j beta_j K_ij (raw output without bias)
    objective = 0.0
    path: List[float] = [0.0]

    bound = _BOUND_ATOL * max(1.0, c_box)
    gap = 0.0
    converged = False
    for _ in range(params.max_iter):
        margin = y - g
        up_vals = np.where(beta >= 0.0, margin - eps_tube, margin + eps_tube)
        dn_vals = np.where(beta <= 0.0, margin + eps_tube, margin - eps_tube)
        up_vals = np.where(beta < c_box - bound, up_vals, -np.inf)
        dn_vals = np.where(beta > -c_box + bound, dn_vals, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(dn_vals))
        gap = up_vals[i] - dn_vals[j]
        if not np.isfinite(gap) or gap <= 2.0 * params.tol or i == j:
            converged = True
            break
        eta = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        delta, gain = _pair_step(beta[i], beta[j], y[i], y[j], g[i], g[j],
                                 eta, eps_tube, c_box)
        if delta <= 0.0 or gain <= 0.0:
            break  # numerically stuck; report the remaining violation below
        beta[i] += delta
        beta[j] -= delta
        g += delta * (kernel[:, i] - kernel[:, j])
        if record_objective:
            objective = _dual_objective(beta, kernel, y, eps_tube)
        else:
            objective += gain
        path.append(objective)

    violation = max(0.0, gap / 2.0) if np.isfinite(gap) else 0.0
    if not converged and violation > params.tol:
        raise ConvergenceError(
            f"SMO did not reach KKT tolerance {params.tol} "
            f"(final violation {violation:.3e})", kkt_violation=violation)

    m_up = up_vals[i] if np.isfinite(up_vals[i]) else None
    m_dn = dn_vals[j] if np.isfinite(dn_vals[j]) else None
    if m_up is not None and m_dn is not None:
        bias = 0.5 * (m_up + m_dn)
    elif m_up is not None:
        bias = m_up
    elif m_dn is not None:
        bias = m_dn
    else:
        bias = float(np.mean(y - g))

    keep = np.abs(beta) > _SV_ATOL * max(1.0, c_box)
    return SvrModel(support_vectors=X[keep].copy(),
                    dual_coeffs=beta[keep].copy(),
                    bias=float(bias),
                    kernel_gamma=gamma,
                    C=c_box,
                    epsilon_tube=eps_tube,
                    objective_path=np.asarray(path))


def svr_predict(model: SvrModel, x: np.ndarray):
    """Kernel expansion value(s) at ``x``: one vector (F,) or a matrix (M, F)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if not np.all(np.isfinite(pts)):
        raise ParameterError("query points contain non-finite values")
    if len(model.dual_coeffs) == 0:
        out = np.full(pts.shape[0], model.bias)
    else:
        k = _rbf(pts, model.support_vectors, model.kernel_gamma)
        out = k @ model.dual_coeffs + model.bias
    return float(out[0]) if single else out
