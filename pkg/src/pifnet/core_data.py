"""Ingestion, validation, scaling, windowing, and synthesis of hourly
multivariate load series.

A :class:`SeriesFrame` holds one load column (kW) plus zero or more
covariate columns on a strictly increasing, equally spaced timestamp grid.
CSV inputs carry a header row, ISO-8601 or integer epoch-second timestamps,
and plain decimal numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DataQualityError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    SchemaError,
)
from .numerics import seeded_rng

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass
class SeriesFrame:
    """Timestamped multivariate series: load plus weather-style covariates.

    Invariants enforced at construction: timestamps strictly increasing and
    equally spaced, row counts equal across columns, every value finite.
    ``fill_counts`` records how many cells per column were repaired by
    interpolation during ingestion.
    """

    timestamps: np.ndarray
    load: np.ndarray
    features: np.ndarray
    feature_names: List[str]
    fill_counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.load = np.asarray(self.load, dtype=float)
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features.reshape(len(self.features), -1)
        if self.features.size == 0:
            self.features = self.features.reshape(len(self.load), 0)
        n = len(self.timestamps)
        if self.load.shape != (n,):
            raise FormatError(f"load has {self.load.shape[0]} rows, timestamps have {n}")
        if self.features.shape[0] != n:
            raise FormatError(f"features have {self.features.shape[0]} rows, timestamps have {n}")
        if self.features.shape[1] != len(self.feature_names):
            raise FormatError(
                f"{self.features.shape[1]} feature columns but {len(self.feature_names)} names")
        if n >= 2:
            steps = np.diff(self.timestamps)
            if np.any(steps <= 0):
                raise FormatError("timestamps are not strictly increasing")
            if np.any(steps != steps[0]):
                raise FormatError("timestamps are not equally spaced (gap or irregular step)")
        if not np.all(np.isfinite(self.load)) or not np.all(np.isfinite(self.features)):
            raise FormatError("non-finite values present after ingestion")
        # frames are shared freely across stages; freeze the array views
        for arr in (self.timestamps, self.load, self.features):
            arr.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)

    @property
    def n_columns(self) -> int:
        """Total value columns: load plus features."""
        return 1 + self.features.shape[1]

    @property
    def data_matrix(self) -> np.ndarray:
        """(N, D) matrix with load in column 0 and features after it."""
        return np.column_stack([self.load, self.features])

    def with_load(self, new_load: np.ndarray) -> "SeriesFrame":
        return replace(self, load=np.asarray(new_load, dtype=float).copy())

    def select_features(self, names: Sequence[str]) -> "SeriesFrame":
        """Frame restricted to the named feature columns (original order kept)."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise SchemaError(f"unknown feature columns: {missing}")
        keep = [i for i, n in enumerate(self.feature_names) if n in set(names)]
        return replace(self,
                       features=self.features[:, keep].copy(),
                       feature_names=[self.feature_names[i] for i in keep])


@dataclass
class WindowSet:
    """Supervised pairs cut from a frame by a stride-1 sliding window."""

    inputs: np.ndarray   # (W, L, D)
    targets: np.ndarray  # (W, T)
    lookback: int
    horizon: int

    def __post_init__(self):
        w, l, _ = self.inputs.shape
        if self.targets.shape != (w, self.horizon) or l != self.lookback:
            raise FormatError("window tensor shapes are inconsistent")

    @property
    def count(self) -> int:
        return self.inputs.shape[0]


@dataclass
class CsvSchema:
    """Column-name mapping for :func:`load_csv`.

    ``features=None`` takes every column that is neither the timestamp nor
    the load, in file order.
    """

    timestamp: str = "timestamp"
    load: str = "load"
    features: Optional[Sequence[str]] = None


def _parse_timestamp(text: str, line_no: int) -> int:
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        value = None
    if value is not None:
        if value != int(value):
            raise FormatError(f"line {line_no}: fractional epoch timestamp {text!r}")
        return int(value)
    try:
        stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise FormatError(f"line {line_no}: unreadable timestamp {text!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return int(stamp.timestamp())


def _parse_cell(text: str, column: str, line_no: int) -> float:
    text = text.strip()
    if text.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError as exc:
        raise FormatError(f"line {line_no}: bad number {text!r} in column {column!r}") from exc


def _interpolate_column(values: np.ndarray) -> Tuple[np.ndarray, int]:
    """Fill NaN cells by linear interpolation over row index.

    Interior gaps are linear between the nearest present neighbors; leading
    and trailing gaps copy the nearest present value.
    """
    missing = ~np.isfinite(values)
    count = int(missing.sum())
    if count == 0:
        return values, 0
    idx = np.arange(len(values), dtype=float)
    filled = values.copy()
    filled[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return filled, count


def load_csv(path, schema: CsvSchema, max_missing_fraction: float = 0.05) -> SeriesFrame:
    """Read one CSV file into a validated :class:`SeriesFrame`.

    Rows are sorted by timestamp before validation, so shuffled files and
    pre-sorted files ingest identically. Duplicate timestamps and grid gaps
    are rejected. Isolated missing values are repaired by linear
    interpolation and counted per column in ``fill_counts``; a column with
    more than ``max_missing_fraction`` missing cells is rejected.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if schema.timestamp not in header:
            raise SchemaError(f"{path}: missing timestamp column {schema.timestamp!r}")
        if schema.load not in header:
            raise SchemaError(f"{path}: missing load column {schema.load!r}")
        if schema.features is None:
            feature_names = [h for h in header if h not in (schema.timestamp, schema.load)]
        else:
            feature_names = list(schema.features)
            missing = [f for f in feature_names if f not in header]
            if missing:
                raise SchemaError(f"{path}: missing feature columns {missing}")
        ts_col = header.index(schema.timestamp)
        load_col = header.index(schema.load)
        feat_cols = [header.index(f) for f in feature_names]

        stamps: List[int] = []
        loads: List[float] = []
        feats: List[List[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: line {line_no} has {len(row)} cells, header has {len(header)}")
            stamps.append(_parse_timestamp(row[ts_col], line_no))
            loads.append(_parse_cell(row[load_col], schema.load, line_no))
            feats.append([_parse_cell(row[c], feature_names[j], line_no)
                          for j, c in enumerate(feat_cols)])

    if not stamps:
        raise FormatError(f"{path}: no data rows")
    ts = np.asarray(stamps, dtype=np.int64)
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    load = np.asarray(loads, dtype=float)[order]
    features = np.asarray(feats, dtype=float).reshape(len(loads), len(feature_names))[order]

    if len(ts) >= 2:
        steps = np.diff(ts)
        if np.any(steps == 0):
            raise FormatError(f"{path}: duplicate timestamps")
        if np.any(steps != steps[0]):
            raise FormatError(f"{path}: timestamp gaps or irregular spacing")

    fill_counts: Dict[str, int] = {}
    columns = [(schema.load, load)] + [(feature_names[j], features[:, j])
                                       for j in range(len(feature_names))]
    for name, col in columns:
        frac = float(np.mean(~np.isfinite(col)))
        if frac > max_missing_fraction:
            raise DataQualityError(
                f"{path}: column {name!r} is {frac:.1%} missing (limit {max_missing_fraction:.0%})")
    load, n_fill = _interpolate_column(load)
    if n_fill:
        fill_counts[schema.load] = n_fill
    for j, name in enumerate(feature_names):
        features[:, j], n_fill = _interpolate_column(features[:, j])
        if n_fill:
            fill_counts[name] = n_fill

    return SeriesFrame(timestamps=ts, load=load, features=features,
                       feature_names=feature_names, fill_counts=fill_counts)


def read_feature_csv(path, timestamp_column: str,
                     feature_columns: Optional[Sequence[str]] = None
                     ) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Read a covariate-only CSV (no load column) for timestamp joins."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if timestamp_column not in header:
            raise SchemaError(f"{path}: missing timestamp column {timestamp_column!r}")
        if feature_columns is None:
            names = [h for h in header if h != timestamp_column]
        else:
            names = list(feature_columns)
            missing = [f for f in names if f not in header]
            if missing:
                raise SchemaError(f"{path}: missing feature columns {missing}")
        ts_col = header.index(timestamp_column)
        cols = [header.index(f) for f in names]
        stamps: List[int] = []
        rows: List[List[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            stamps.append(_parse_timestamp(row[ts_col], line_no))
            rows.append([_parse_cell(row[c], names[j], line_no) for j, c in enumerate(cols)])
    ts = np.asarray(stamps, dtype=np.int64)
    matrix = np.asarray(rows, dtype=float).reshape(len(stamps), len(names))
    order = np.argsort(ts, kind="stable")
    return ts[order], matrix[order], names


def join_features(frame: SeriesFrame, timestamps: np.ndarray, matrix: np.ndarray,
                  names: Sequence[str]) -> SeriesFrame:
    """Attach externally sourced covariates to a frame by exact timestamp match.

    Every frame timestamp must be present in the covariate file; missing
    cells in matched rows are interpolated like primary ingestion.
    """
    lookup = {int(t): i for i, t in enumerate(timestamps)}
    picked = np.empty((frame.n_rows, matrix.shape[1]), dtype=float)
    absent = 0
    for i, t in enumerate(frame.timestamps):
        j = lookup.get(int(t))
        if j is None:
            absent += 1
        else:
            picked[i] = matrix[j]
    if absent:
        raise DataQualityError(f"{absent} of {frame.n_rows} timestamps missing from feature file")
    fill_counts = dict(frame.fill_counts)
    for j, name in enumerate(names):
        picked[:, j], n_fill = _interpolate_column(picked[:, j])
        if n_fill:
            fill_counts[name] = fill_counts.get(name, 0) + n_fill
    return SeriesFrame(timestamps=frame.timestamps,
                       load=frame.load,
                       features=np.hstack([frame.features, picked]),
                       feature_names=list(frame.feature_names) + list(names),
                       fill_counts=fill_counts)


def write_series_csv(frame: SeriesFrame, path) -> None:
    """Write a frame back to CSV with ISO-8601 UTC timestamps.

    Floats use ``repr`` so a round trip through :func:`load_csv` is
    bit-exact.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "load"] + list(frame.feature_names))
        for i in range(frame.n_rows):
            stamp = datetime.fromtimestamp(int(frame.timestamps[i]), tz=timezone.utc)
            row = [stamp.strftime("%Y-%m-%dT%H:%M:%S"), repr(float(frame.load[i]))]
            row += [repr(float(v)) for v in frame.features[i]]
            writer.writerow(row)


def make_windows(frame: SeriesFrame, lookback: int, horizon: int) -> WindowSet:
    """Cut supervised pairs: window i covers rows [i, i+L), target rows
    [i+L, i+L+T) of the load column. Stride is 1, so W = N - L - T + 1.
    """
    if lookback < 1 or horizon < 1:
        raise ParameterError("lookback and horizon must be positive")
    n = frame.n_rows
    if n < lookback + horizon:
        raise InsufficientDataError(
            f"need at least {lookback + horizon} rows, have {n}")
    w = n - lookback - horizon + 1
    data = frame.data_matrix
    inputs = np.lib.stride_tricks.sliding_window_view(data, lookback, axis=0)
    inputs = inputs[:w].transpose(0, 2, 1).copy()
    targets = np.lib.stride_tricks.sliding_window_view(frame.load, horizon)
    targets = targets[lookback:lookback + w].copy()
    return WindowSet(inputs=inputs, targets=targets, lookback=lookback, horizon=horizon)


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------


@dataclass
class Scaler:
    """Per-column z-score transform fitted on training rows only.

    Columns whose training slice is constant keep std 1 and are flagged in
    ``constant_mask`` so callers can report them.
    """

    means: np.ndarray
    stds: np.ndarray
    constant_mask: np.ndarray

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=float) - self.means) / self.stds

    def invert(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix, dtype=float) * self.stds + self.means

    def apply_column(self, values: np.ndarray, column: int) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.means[column]) / self.stds[column]

    def invert_column(self, values: np.ndarray, column: int) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.stds[column] + self.means[column]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"columns={len(self.means)}\n")
            for j in range(len(self.means)):
                fh.write(f"mean.{j}={float(self.means[j])!r}\n")
                fh.write(f"std.{j}={float(self.stds[j])!r}\n")
                fh.write(f"constant.{j}={int(self.constant_mask[j])}\n")

    @classmethod
    def load(cls, path) -> "Scaler":
        entries: Dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                key, _, value = line.rstrip("\n").partition("=")
                entries[key] = value
        n = int(entries["columns"])
        means = np.array([float(entries[f"mean.{j}"]) for j in range(n)])
        stds = np.array([float(entries[f"std.{j}"]) for j in range(n)])
        mask = np.array([entries[f"constant.{j}"] == "1" for j in range(n)])
        return cls(means=means, stds=stds, constant_mask=mask)


def fit_apply_scaler(train_rows: np.ndarray, all_rows: np.ndarray) -> Tuple[Scaler, np.ndarray]:
    """Fit a z-score scaler on ``train_rows`` and apply it to ``all_rows``.

    Statistics are population moments (ddof=0) of the training slice only.
    """
    train = np.atleast_2d(np.asarray(train_rows, dtype=float))
    full = np.atleast_2d(np.asarray(all_rows, dtype=float))
    if train.size == 0:
        raise ParameterError("training rows are empty")
    means = train.mean(axis=0)
    stds = train.std(axis=0)
    constant = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    stds = np.where(constant, 1.0, stds)
    scaler = Scaler(means=means, stds=stds, constant_mask=constant)
    return scaler, scaler.apply(full)


# ---------------------------------------------------------------------------
# Synthetic series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a deterministic synthetic hourly load series."""

    n: int
    daily_amplitude: float = 3.0
    noise_std: float = 0.1
    spike_count: int = 0
    spike_magnitude: float = 8.0
    offset: float = 10.0


SYNTH_EPOCH_START = 1483228800  # 2017-01-01T00:00:00Z
SYNTH_STEP_SECONDS = 3600


def synth_series(spec: SynthSpec, seed: int) -> SeriesFrame:
    """Deterministic synthetic frame: offset + daily sinusoid + noise, with
    ``spike_count`` rows multiplied by ``spike_magnitude`` at seeded
    positions.

    Emits two covariates correlated with the load (the daily driver plus a
    damped, phase-lagged copy of it) and one pure-noise covariate.
    """
    if spec.n <= 0:
        raise ParameterError("n must be positive")
    if spec.spike_count < 0 or spec.spike_count > spec.n:
        raise ParameterError("spike_count out of range")
    rng = seeded_rng(seed, 0x5E1E5)
    t = np.arange(spec.n, dtype=float)
    phase = 2.0 * np.pi * t / 24.0
    base = spec.offset + spec.daily_amplitude * np.sin(phase)
    load = base + spec.noise_std * rng.standard_normal(spec.n)
    if spec.spike_count:
        positions = np.sort(rng.choice(spec.n, size=spec.spike_count, replace=False))
        load[positions] *= spec.spike_magnitude
    feat_main = spec.daily_amplitude * np.sin(phase) + 0.1 * rng.standard_normal(spec.n)
    feat_lag = (0.6 * spec.daily_amplitude * np.sin(phase - np.pi / 6.0)
                + 0.1 * rng.standard_normal(spec.n))
    feat_noise = rng.standard_normal(spec.n)
    timestamps = SYNTH_EPOCH_START + SYNTH_STEP_SECONDS * np.arange(spec.n, dtype=np.int64)
    return SeriesFrame(timestamps=timestamps,
                       load=load,
                       features=np.column_stack([feat_main, feat_lag, feat_noise]),
                       feature_names=["drive_main", "drive_lag", "noise_only"])
