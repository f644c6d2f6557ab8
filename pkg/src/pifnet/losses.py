"""Training losses: the error-weighted adaptive loss plus MSE/MAE baselines.

The adaptive loss blends a bounded rational-quadratic penalty with a
logarithmic penalty per element:

    e_t     = y_t - yhat_t
    rq(e)   = e^2 / (1 + (e/c)^2)          (saturates at c^2)
    log(e)  = log(1 + |e|/c)
    omega_t = exp(-|e_t| / (sigma + eps))  sigma = batch error spread
    value   = mean(omega * rq + (1 - omega) * log)

``omega`` and ``sigma`` are treated as constants of the batch when
differentiating, so the reported gradient is the frozen-weight gradient:
    d value / d yhat_t = -(1/n) * [omega_t rq'(e_t) + (1 - omega_t) log'(e_t)]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParameterError

SIGMA_MODES = ("population_std", "rms")


@dataclass(frozen=True)
class EwalConfig:
    """Penalty scale ``c`` and division guard ``eps``.

    ``sigma_mode`` picks how the batch error spread is measured:
    ``population_std`` (centered, ddof=0) or ``rms`` (uncentered).
    """

    c: float = 1.0
    eps: float = 1e-8
    sigma_mode: str = "population_std"

    def __post_init__(self):
        if self.c <= 0:
            raise ParameterError("c must be positive")
        if self.eps <= 0:
            raise ParameterError("eps must be positive")
        if self.sigma_mode not in SIGMA_MODES:
            raise ParameterError(f"sigma_mode must be one of {SIGMA_MODES}")


@dataclass
class LossResult:
    value: float
    grad_wrt_pred: np.ndarray
    batch_sigma: float = 0.0
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))


def rq_loss(e, c: float):
    """Rational-quadratic penalty, even in e and bounded above by c^2."""
    if c <= 0:
        raise ParameterError("c must be positive")
    e = np.asarray(e, dtype=float)
    return e * e / (1.0 + (e / c) ** 2)


def rq_grad(e, c: float):
    e = np.asarray(e, dtype=float)
    return 2.0 * e / (1.0 + (e / c) ** 2) ** 2


def log_loss(e, c: float):
    """Logarithmic penalty log(1 + |e|/c), monotone in |e|."""
    if c <= 0:
        raise ParameterError("c must be positive")
    e = np.asarray(e, dtype=float)
    return np.log1p(np.abs(e) / c)


def log_grad(e, c: float):
    e = np.asarray(e, dtype=float)
    return np.sign(e) / (c + np.abs(e))


def _check_pair(y, y_hat):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ContractError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ContractError("empty batch")
    return y, y_hat


def ewal(y, y_hat, cfg: EwalConfig = EwalConfig()) -> LossResult:
    """Error-weighted adaptive loss over one flattened batch."""
    y, y_hat = _check_pair(y, y_hat)
    e = y - y_hat
    if cfg.sigma_mode == "rms":
        sigma = float(np.sqrt(np.mean(e * e)))
    else:
        sigma = float(np.std(e))
    weights = np.exp(-np.abs(e) / (sigma + cfg.eps))
    value = float(np.mean(weights * rq_loss(e, cfg.c) + (1.0 - weights) * log_loss(e, cfg.c)))
    n = e.size
    grad = -(weights * rq_grad(e, cfg.c) + (1.0 - weights) * log_grad(e, cfg.c)) / n
    return LossResult(value=value, grad_wrt_pred=grad, batch_sigma=sigma, weights=weights)


def mse_loss(y, y_hat) -> LossResult:
    y, y_hat = _check_pair(y, y_hat)
    e = y - y_hat
    value = float(np.mean(e * e))
    grad = -2.0 * e / e.size
    return LossResult(value=value, grad_wrt_pred=grad,
                      batch_sigma=float(np.std(e)), weights=np.ones_like(e))


def mae_loss(y, y_hat) -> LossResult:
    """Mean absolute error; the subgradient at e=0 is taken as 0."""
    y, y_hat = _check_pair(y, y_hat)
    e = y - y_hat
    value = float(np.mean(np.abs(e)))
    grad = -np.sign(e) / e.size
    return LossResult(value=value, grad_wrt_pred=grad,
                      batch_sigma=float(np.std(e)), weights=np.ones_like(e))


LOSS_KINDS = ("ewal", "mse", "mae")


def loss_by_name(kind: str, y, y_hat, cfg: EwalConfig) -> LossResult:
    if kind == "ewal":
        return ewal(y, y_hat, cfg)
    if kind == "mse":
        return mse_loss(y, y_hat)
    if kind == "mae":
        return mae_loss(y, y_hat)
    raise ParameterError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
