"""Local outlier factor scoring plus neighbor-average repair.

Scores follow the classic density-ratio construction: reachability distance
reach_k(p, o) = max(kdist(o), d(p, o)), local reachability density
lrd(p) = |N_k(p)| / sum_o reach_k(p, o), and score(p) = mean of
lrd(o)/lrd(p) over the neighbor set. Neighbor sets include every point
tied with the k-th distance, so |N_k(p)| can exceed k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import CorrectionImpossibleError, ParameterError

# lrd substitute when reachability sums collapse to zero (ties of exact
# duplicates); keeps scores finite and gives duplicate cliques score 1.
DUPLICATE_LRD = 1e12

_CHUNK = 1024


@dataclass
class LofResult:
    """Scores for every point plus the flagged index list."""

    scores: np.ndarray
    k: int
    flagged: np.ndarray


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise ParameterError(f"points must be a vector or matrix, got ndim={pts.ndim}")
    if not np.all(np.isfinite(pts)):
        raise ParameterError("points contain non-finite values")
    return pts


def _chunk_distances(pts: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Euclidean distances from rows [start, stop) to all rows; the
    self-distance is set to +inf so a point never neighbors itself."""
    diff = pts[start:stop, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    idx = np.arange(start, stop)
    dist[idx - start, idx] = np.inf
    return dist


def lof_scores(points, k: int) -> np.ndarray:
    """Density-ratio anomaly score per point; roughly 1 for inliers.

    Runs in three chunked passes (k-distances, local reachability
    densities, score ratios) so memory stays O(chunk * N).
    """
    pts = _as_points(points)
    n = len(pts)
    if k < 1:
        raise ParameterError("k must be at least 1")
    if n <= k:
        raise ParameterError(f"need more than k={k} points, have {n}")

    kdist = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dist = _chunk_distances(pts, start, stop)
        kdist[start:stop] = np.partition(dist, k - 1, axis=1)[:, k - 1]

    lrd = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dist = _chunk_distances(pts, start, stop)
        member = dist <= kdist[start:stop, None]
        reach = np.where(member, np.maximum(kdist[None, :], dist), 0.0)
        sums = reach.sum(axis=1)
        counts = member.sum(axis=1)
        lrd[start:stop] = np.where(sums > 0.0, counts / np.where(sums > 0.0, sums, 1.0),
                                   DUPLICATE_LRD)

    scores = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dist = _chunk_distances(pts, start, stop)
        member = dist <= kdist[start:stop, None]
        neighbor_lrd_sum = member.astype(float) @ lrd
        counts = member.sum(axis=1)
        scores[start:stop] = neighbor_lrd_sum / counts / lrd[start:stop]
    return scores


def detect_outliers(scores, contamination: float) -> np.ndarray:
    """Indices of the ceil(contamination * N) largest scores.

    Ties at the threshold keep the smaller index; the result is sorted
    ascending.
    """
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ParameterError("scores contain non-finite values")
    if not 0.0 < contamination < 1.0:
        raise ParameterError(f"contamination must be in (0, 1), got {contamination}")
    n_flag = math.ceil(contamination * len(s))
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:n_flag])


def correct_outliers(series, flagged: Sequence[int]) -> np.ndarray:
    """Replace flagged points with the mean of their immediate neighbors.

    Flags are processed ascending using already-corrected neighbors, then a
    second descending pass resolves runs of consecutive flags. Index 0
    copies index 1 and index N-1 copies index N-2. Unflagged points come
    back bit-identical.
    """
    values = np.asarray(series, dtype=float).copy()
    n = len(values)
    flags: List[int] = sorted(set(int(i) for i in flagged))
    if any(i < 0 or i >= n for i in flags):
        raise ParameterError("flagged index out of range")
    if len(flags) >= n:
        raise CorrectionImpossibleError("every point is flagged; nothing to average from")

    def repair(i: int) -> float:
        if i == 0:
            return values[1]
        if i == n - 1:
            return values[n - 2]
        return 0.5 * (values[i - 1] + values[i + 1])

    for i in flags:
        values[i] = repair(i)
    for i in reversed(flags):
        values[i] = repair(i)
    return values


def score_and_flag(points, k: int, contamination: float) -> LofResult:
    """Score points and flag the top contamination quantile."""
    scores = lof_scores(points, k)
    flagged = detect_outliers(scores, contamination)
    return LofResult(scores=scores, k=k, flagged=flagged)
