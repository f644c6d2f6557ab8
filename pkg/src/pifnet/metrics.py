"""Point-forecast evaluation metrics and the sensitivity spread statistic.

Reports carry the seven scores in the fixed order MAE, MSE, RMSE, MAPE,
R2, IA, U1. MAPE is in percent and skips zero targets, counting the
exclusions; IA is Willmott's index of agreement; U1 is Theil's inequality
statistic in [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import InsufficientDataError, UndefinedMetricError

METRIC_COLUMNS = ("mae", "mse", "rmse", "mape_percent", "r2", "ia", "u1")
METRIC_LABELS = ("MAE", "MSE", "RMSE", "MAPE(%)", "R2", "IA", "U1")


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    rmse: float
    mape_percent: float
    r2: float
    ia: float
    u1: float
    n: int
    mape_excluded: int = 0

    def values(self) -> Tuple[float, ...]:
        return (self.mae, self.mse, self.rmse, self.mape_percent, self.r2, self.ia, self.u1)


def evaluate(y, y_hat) -> MetricsReport:
    """All seven scores for one prediction run.

    Requires n >= 2 and at least one nonzero target (MAPE is undefined
    otherwise). Zero targets are excluded from the MAPE sum only and the
    count is reported.
    """
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise InsufficientDataError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    n = y.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, have {n}")
    err = y - y_hat
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err * err))
    rmse = float(np.sqrt(mse))

    nonzero = y != 0.0
    excluded = int(n - nonzero.sum())
    if excluded == n:
        raise UndefinedMetricError("MAPE undefined: every target is zero")
    mape = float(np.mean(np.abs(err[nonzero] / y[nonzero])) * 100.0)

    y_bar = float(np.mean(y))
    sse = float(np.sum(err * err))
    sst = float(np.sum((y - y_bar) ** 2))
    if sst == 0.0:
        # constant targets: perfect prediction scores 1, anything else is
        # unexplainable variance
        r2 = 1.0 if sse == 0.0 else float("-inf")
    else:
        r2 = 1.0 - sse / sst

    ia_den = float(np.sum((np.abs(y_hat - y_bar) + np.abs(y - y_bar)) ** 2))
    ia = 1.0 if ia_den == 0.0 else 1.0 - sse / ia_den

    u1_den = float(np.sqrt(np.mean(y * y)) + np.sqrt(np.mean(y_hat * y_hat)))
    u1 = 0.0 if u1_den == 0.0 else rmse / u1_den

    return MetricsReport(mae=mae, mse=mse, rmse=rmse, mape_percent=mape,
                         r2=r2, ia=ia, u1=u1, n=n, mape_excluded=excluded)


def sensitivity_std(values) -> float:
    """Population standard deviation of a metric across a hyperparameter
    sweep."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InsufficientDataError("no values")
    return float(np.std(v))


def write_metrics_csv(path, rows: Iterable[Tuple[str, MetricsReport]]) -> None:
    """CSV with one labelled report per row, columns in table order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + list(METRIC_COLUMNS) + ["n", "mape_excluded"])
        for name, report in rows:
            writer.writerow([name] + [repr(v) for v in report.values()]
                            + [report.n, report.mape_excluded])


def format_metrics_table(rows: Sequence[Tuple[str, MetricsReport]]) -> str:
    """Aligned text table, one row per report."""
    name_width = max([len(name) for name, _ in rows] + [len("model")])
    header = "model".ljust(name_width) + "".join(f"{label:>12}" for label in METRIC_LABELS)
    lines: List[str] = [header]
    for name, report in rows:
        cells = "".join(f"{value:>12.4f}" for value in report.values())
        lines.append(name.ljust(name_width) + cells)
    return "\n".join(lines)
