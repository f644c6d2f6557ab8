"""Exact Shapley attribution of SVR predictions plus feature selection.

The value of a coalition S for a query sample x is the marginal
expectation over a background set B: features inside S are pinned to the
sample's values and the rest come from each background row,

    v(S) = mean_{b in B} model(x_S combined with b_notS)

Per-feature attributions use the exact combinatorial average over all
2^(F-1) coalitions, so the efficiency identity
sum_i phi_i = model(x) - v(empty) holds to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from .errors import ParameterError, TractabilityError
from .svr import SvrModel, svr_predict

MAX_EXACT_FEATURES = 20


@dataclass
class ShapleyAttribution:
    """Per-sample attributions with the shared baseline and global scores."""

    phi: np.ndarray                # (N, F)
    baseline: float                # mean model output over the background
    global_importance: np.ndarray  # (F,)


def _coalition_values(predict: Callable[[np.ndarray], np.ndarray],
                      sample: np.ndarray, background: np.ndarray) -> np.ndarray:
    """v[mask] for every coalition bitmask, via one batched prediction."""
    n_features = sample.shape[0]
    n_masks = 1 << n_features
    n_background = background.shape[0]
    hybrids = np.tile(background, (n_masks, 1))
    for mask in range(n_masks):
        rows = slice(mask * n_background, (mask + 1) * n_background)
        for feat in range(n_features):
            if mask >> feat & 1:
                hybrids[rows, feat] = sample[feat]
    outputs = np.asarray(predict(hybrids), dtype=float)
    return outputs.reshape(n_masks, n_background).mean(axis=1)


def shapley_values(model: SvrModel, sample: np.ndarray,
                   background: np.ndarray) -> np.ndarray:
    """Exact Shapley attribution of one prediction, one value per feature."""
    sample = np.asarray(sample, dtype=float).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=float))
    n_features = sample.shape[0]
    if background.shape[1] != n_features:
        raise ParameterError(
            f"background has {background.shape[1]} columns, sample has {n_features}")
    if background.shape[0] < 1:
        raise ParameterError("background must contain at least one row")
    if n_features > MAX_EXACT_FEATURES:
        raise TractabilityError(
            f"{n_features} features exceed the exact-enumeration limit "
            f"({MAX_EXACT_FEATURES}); a sampling estimator is out of scope")

    values = _coalition_values(lambda pts: svr_predict(model, pts), sample, background)
    total_fact = math.factorial(n_features)
    weights = np.array([math.factorial(s) * math.factorial(n_features - s - 1) / total_fact
                        for s in range(n_features)])
    phi = np.zeros(n_features)
    for mask in range(1 << n_features):
        size = int(mask).bit_count()
        for feat in range(n_features):
            bit = 1 << feat
            if mask & bit:
                continue
            phi[feat] += weights[size] * (values[mask | bit] - values[mask])
    return phi


def attribute_samples(model: SvrModel, samples: np.ndarray,
                      background: np.ndarray) -> ShapleyAttribution:
    """Shapley matrix for many samples against one fixed background."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    baseline = float(np.mean(svr_predict(model, np.atleast_2d(background))))
    phi = np.vstack([shapley_values(model, row, background) for row in samples])
    return ShapleyAttribution(phi=phi, baseline=baseline,
                              global_importance=global_importance(phi))


def global_importance(phi: np.ndarray) -> np.ndarray:
    """Mean absolute attribution per feature across samples."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if not np.all(np.isfinite(phi)):
        raise ParameterError("attributions contain non-finite values")
    return np.mean(np.abs(phi), axis=0)


def select_features(importance: np.ndarray, names: Sequence[str], *,
                    rule: str = "cumulative", tau: float = 0.90,
                    m: int | None = None) -> List[str]:
    """Keep the most important features, returned in original column order.

    ``top_m`` keeps the m largest scores. ``cumulative`` keeps the smallest
    descending-importance prefix whose share of the total reaches tau.
    Ties rank the earlier column first. If every importance is zero the
    full list is returned (there is nothing to discriminate on).
    """
    importance = np.asarray(importance, dtype=float).ravel()
    names = list(names)
    if len(importance) != len(names):
        raise ParameterError(f"{len(importance)} scores for {len(names)} names")
    if np.any(importance < 0):
        raise ParameterError("importance scores must be nonnegative")
    order = np.argsort(-importance, kind="stable")
    if rule == "top_m":
        if m is None or not 1 <= m <= len(names):
            raise ParameterError(f"top_m needs 1 <= m <= {len(names)}, got {m}")
        chosen = set(order[:m])
    elif rule == "cumulative":
        if not 0.0 < tau <= 1.0:
            raise ParameterError(f"tau must be in (0, 1], got {tau}")
        total = float(importance.sum())
        if total == 0.0:
            chosen = set(range(len(names)))
        else:
            running = 0.0
            chosen = set()
            for idx in order:
                chosen.add(idx)
                running += importance[idx]
                if running / total >= tau:
                    break
    else:
        raise ParameterError(f"unknown selection rule {rule!r}")
    return [name for i, name in enumerate(names) if i in chosen]
