"""End-to-end experiment orchestration: preprocess, feature selection,
training, evaluation, ablation, and hyperparameter sensitivity.

Every stage writes into a run directory: the fully resolved config, the
delimited outputs, and the SVG figures. Stages chain through files only
(corrected series, selected feature list, checkpoint), never through
shared state, and never mutate their inputs. All randomness is keyed:
data-side streams by the data seed, training streams by the training
seed, so feature selection is identical across training-seed sweeps.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .anomaly import correct_outliers, score_and_flag
from .attribution import attribute_samples, select_features
from .config import RunConfig
from .core_data import (
    CsvSchema,
    Scaler,
    SeriesFrame,
    SynthSpec,
    fit_apply_scaler,
    join_features,
    load_csv,
    make_windows,
    read_feature_csv,
    synth_series,
    write_series_csv,
)
from .errors import (
    ContractError,
    InsufficientDataError,
    NonFiniteLossError,
    ParameterError,
    PifnetError,
)
from .losses import EwalConfig, loss_by_name
from .metrics import (
    METRIC_COLUMNS,
    MetricsReport,
    evaluate,
    format_metrics_table,
    sensitivity_std,
    write_metrics_csv,
)
from .model import (
    ModelConfig,
    PifNetParams,
    backward_batch,
    forecast_batch,
    init_params,
    load_params,
    save_params,
)
from .numerics import adam_step, init_adam, seeded_rng
from . import plots

RESOLVED_CFG = "resolved.cfg"
RAW_CSV = "raw.csv"
CORRECTED_CSV = "corrected.csv"
ANOMALY_CSV = "anomaly_report.csv"
PREPROCESS_SUMMARY = "preprocess_summary.txt"
SHAPLEY_CSV = "shapley_values.csv"
IMPORTANCE_CSV = "feature_importance.csv"
IMPORTANCE_SVG = "feature_importance.svg"
SELECTED_TXT = "selected_features.txt"
TRAIN_LOG_CSV = "training_log.csv"
LOSS_SVG = "loss_curve.svg"
CHECKPOINT_BIN = "checkpoint.bin"
CHECKPOINT_MANIFEST = "checkpoint.manifest"
SCALER_TXT = "scaler.txt"
PREDICTIONS_CSV = "predictions.csv"
METRICS_CSV = "metrics.csv"
METRICS_TXT = "metrics.txt"
PREDICTION_SVG = "prediction_plot.svg"

ABLATION_VARIANTS = (
    "full",
    "wo_data_correction",
    "wo_feature_selection",
    "wo_patch_processing",
    "wo_gating",
    "wo_loss",
)

# rng stream tags (second Philox key word) per pipeline stage
_STREAM_SVR_ROWS = 0xF5
_STREAM_SHAPLEY = 0x5A
_STREAM_TRAIN_LOOP = 0x7A


def load_frame(cfg: RunConfig) -> SeriesFrame:
    """Materialize the input series from the configured source."""
    if cfg.data.kind == "synth":
        spec = SynthSpec(n=cfg.data.n,
                         daily_amplitude=cfg.data.daily_amplitude,
                         noise_std=cfg.data.noise_std,
                         spike_count=cfg.data.spike_count,
                         spike_magnitude=cfg.data.spike_magnitude,
                         offset=cfg.data.offset)
        return synth_series(spec, cfg.data.seed)
    schema = CsvSchema(timestamp=cfg.data.timestamp_column,
                       load=cfg.data.load_column,
                       features=cfg.data.feature_columns or None)
    frame = load_csv(cfg.data.path, schema)
    if cfg.data.features_path:
        stamps, matrix, names = read_feature_csv(cfg.data.features_path,
                                                 cfg.data.timestamp_column)
        frame = join_features(frame, stamps, matrix, names)
    return frame


def resolve_split(cfg: RunConfig, n_rows: int) -> Tuple[int, int]:
    """(train_rows, test_rows); train_rows=0 in the config means
    everything before the held-out tail."""
    test_rows = cfg.split.test_rows
    train_rows = cfg.split.train_rows if cfg.split.train_rows else n_rows - test_rows
    if train_rows < 1:
        raise ParameterError(f"split leaves {train_rows} training rows")
    if train_rows + test_rows > n_rows:
        raise ParameterError(
            f"split needs {train_rows + test_rows} rows, data has {n_rows}")
    return train_rows, test_rows


def _prepare_dir(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / RESOLVED_CFG)
    return out


def _float_repr(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# Stage 1: anomaly correction
# ---------------------------------------------------------------------------


def run_preprocess(cfg: RunConfig, out_dir) -> Dict[str, object]:
    """Score the training-region load with LOF, repair the flagged points,
    and write the corrected series plus a per-flag report."""
    out = _prepare_dir(cfg, out_dir)
    frame = load_frame(cfg)
    if cfg.data.kind == "synth":
        write_series_csv(frame, out / RAW_CSV)
    train_rows, _ = resolve_split(cfg, frame.n_rows)

    flagged = np.empty(0, dtype=int)
    scores = np.empty(0)
    corrected = frame
    if cfg.ablation.data_correction:
        region = frame.load[:train_rows]
        if cfg.lof.embedding == "value_hour":
            hours = ((frame.timestamps[:train_rows] // 3600) % 24).astype(float)
            points = np.column_stack([region, hours])
        else:
            points = region
        result = score_and_flag(points, cfg.lof.k, cfg.lof.contamination)
        flagged = result.flagged
        scores = result.scores
        repaired = correct_outliers(region, flagged)
        new_load = frame.load.copy()
        new_load[:train_rows] = repaired
        corrected = frame.with_load(new_load)

    write_series_csv(corrected, out / CORRECTED_CSV)
    with open(out / ANOMALY_CSV, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "raw_value", "corrected_value", "score"])
        for idx in flagged:
            writer.writerow([int(idx),
                             _float_repr(frame.load[idx]),
                             _float_repr(corrected.load[idx]),
                             _float_repr(scores[idx])])
    summary = {
        "rows": str(frame.n_rows),
        "train_rows": str(train_rows),
        "correction": "on" if cfg.ablation.data_correction else "off",
        "flagged_count": str(len(flagged)),
    }
    for name, count in sorted(frame.fill_counts.items()):
        summary[f"interpolated.{name}"] = str(count)
    with open(out / PREPROCESS_SUMMARY, "w", encoding="utf-8") as fh:
        for key, value in summary.items():
            fh.write(f"{key}={value}\n")
    print(f"preprocess: {frame.n_rows} rows, {len(flagged)} flagged -> {out / CORRECTED_CSV}")
    return {"out_dir": out, "flagged": flagged, "scores": scores, "frame": corrected}


def _read_corrected(data_dir) -> SeriesFrame:
    path = Path(data_dir) / CORRECTED_CSV
    if not path.exists():
        raise ContractError(f"{path} not found; run preprocess first")
    return load_csv(path, CsvSchema())


# ---------------------------------------------------------------------------
# Stage 2: feature attribution and selection
# ---------------------------------------------------------------------------


def run_select_features(cfg: RunConfig, out_dir, data_dir=None) -> List[str]:
    """Train the kernel regressor on (features -> load), attribute every
    sampled prediction exactly, and keep the dominant feature subset."""
    from .svr import SvrParams, svr_predict, train_svr

    out = _prepare_dir(cfg, out_dir)
    data = Path(data_dir) if data_dir is not None else out
    frame = _read_corrected(data)
    train_rows, _ = resolve_split(cfg, frame.n_rows)
    names = list(frame.feature_names)

    if not cfg.ablation.feature_selection or not names:
        selected = names
        (out / SELECTED_TXT).write_text("".join(n + "\n" for n in selected), encoding="utf-8")
        print(f"select-features: pass-through, kept {len(selected)} feature(s)")
        return selected

    features = frame.features[:train_rows]
    target = frame.load[:train_rows]
    _, features_z = fit_apply_scaler(features, features)
    _, target_col = fit_apply_scaler(target.reshape(-1, 1), target.reshape(-1, 1))
    target_z = target_col.ravel()

    rng_rows = seeded_rng(cfg.data.seed, _STREAM_SVR_ROWS)
    if train_rows > cfg.svr.max_rows:
        fit_idx = np.sort(rng_rows.choice(train_rows, size=cfg.svr.max_rows, replace=False))
    else:
        fit_idx = np.arange(train_rows)
    params = SvrParams(C=cfg.svr.c, epsilon_tube=cfg.svr.epsilon,
                       gamma=cfg.svr.gamma or None,
                       tol=cfg.svr.tol, max_iter=cfg.svr.max_iter)
    model = train_svr(features_z[fit_idx], target_z[fit_idx], params)

    rng_shap = seeded_rng(cfg.data.seed, _STREAM_SHAPLEY)
    n_background = min(cfg.shapley.background_rows, train_rows)
    bg_idx = np.sort(rng_shap.choice(train_rows, size=n_background, replace=False))
    n_samples = min(cfg.shapley.max_samples, train_rows)
    sample_idx = np.sort(rng_shap.choice(train_rows, size=n_samples, replace=False))

    attribution = attribute_samples(model, features_z[sample_idx], features_z[bg_idx])
    own_pred = svr_predict(model, features_z[sample_idx])
    efficiency_gap = np.abs(attribution.phi.sum(axis=1) - (own_pred - attribution.baseline))

    with open(out / SHAPLEY_CSV, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row"] + names + ["efficiency_gap"])
        for k, row in enumerate(sample_idx):
            writer.writerow([int(row)]
                            + [_float_repr(v) for v in attribution.phi[k]]
                            + [_float_repr(efficiency_gap[k])])

    importance = attribution.global_importance
    order = np.argsort(-importance, kind="stable")
    with open(out / IMPORTANCE_CSV, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "importance"])
        for idx in order:
            writer.writerow([names[idx], _float_repr(importance[idx])])
    plots.save_bar_plot([names[i] for i in order], importance[order],
                        out / IMPORTANCE_SVG)

    if cfg.shapley.rule == "top_m":
        selected = select_features(importance, names, rule="top_m", m=cfg.shapley.top_m)
    else:
        selected = select_features(importance, names, rule="cumulative", tau=cfg.shapley.tau)
    (out / SELECTED_TXT).write_text("".join(n + "\n" for n in selected), encoding="utf-8")
    print(f"select-features: kept {selected} "
          f"(max efficiency gap {efficiency_gap.max():.2e})")
    return selected


def _read_selected(cfg: RunConfig, data_dir, frame: SeriesFrame) -> List[str]:
    if not cfg.ablation.feature_selection:
        return list(frame.feature_names)
    path = Path(data_dir) / SELECTED_TXT
    if not path.exists():
        raise ContractError(f"{path} not found; run select-features first")
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line]


# ---------------------------------------------------------------------------
# Stage 3: training
# ---------------------------------------------------------------------------


def model_config_from(cfg: RunConfig, input_dim: int) -> ModelConfig:
    """Model geometry after applying the ablation toggles."""
    lookback = cfg.model.lookback
    patch_length = cfg.model.patch_length
    stride = cfg.model.stride
    if not cfg.ablation.patching:
        # a single patch spanning the window: plain recurrent encoder
        patch_length = lookback
        stride = lookback
    return ModelConfig(lookback=lookback,
                       horizon=cfg.model.horizon,
                       input_dim=input_dim,
                       patch_length=patch_length,
                       stride=stride,
                       hidden=cfg.model.hidden,
                       layers=cfg.model.layers,
                       dropout=cfg.model.dropout,
                       head=cfg.model.head,
                       gating=cfg.ablation.gating)


def effective_loss_kind(cfg: RunConfig) -> str:
    return cfg.loss.kind if cfg.ablation.ewal else "mse"


def _scaled_frame(frame: SeriesFrame, scaled: np.ndarray, rows: int) -> SeriesFrame:
    return SeriesFrame(timestamps=frame.timestamps[:rows],
                       load=scaled[:rows, 0],
                       features=scaled[:rows, 1:],
                       feature_names=list(frame.feature_names))


def run_train(cfg: RunConfig, out_dir, data_dir=None) -> Dict[str, object]:
    """Adam training on the corrected, selected, z-scored training region."""
    out = _prepare_dir(cfg, out_dir)
    data = Path(data_dir) if data_dir is not None else out
    corrected = _read_corrected(data)
    selected = _read_selected(cfg, data, corrected)
    frame = corrected.select_features(selected)
    train_rows, _ = resolve_split(cfg, frame.n_rows)

    matrix = frame.data_matrix
    scaler, scaled = fit_apply_scaler(matrix[:train_rows], matrix)
    model_cfg = model_config_from(cfg, input_dim=matrix.shape[1])
    windows = make_windows(_scaled_frame(frame, scaled, train_rows),
                           model_cfg.lookback, model_cfg.horizon)

    loss_kind = effective_loss_kind(cfg)
    ewal_cfg = EwalConfig(c=cfg.loss.c, eps=cfg.loss.eps, sigma_mode=cfg.loss.sigma_mode)
    params = init_params(model_cfg, seed=cfg.training.seed)
    adam = init_adam(params.arrays, lr=cfg.training.lr)
    loop_rng = seeded_rng(cfg.training.seed, _STREAM_TRAIN_LOOP)

    print(f"train: {windows.count} windows, patch_count={model_cfg.patch_count} "
          f"derived from lookback={model_cfg.lookback}, "
          f"patch_length={model_cfg.patch_length}, stride={model_cfg.stride}; "
          f"loss={loss_kind}")

    batch_size = cfg.training.batch_size
    epoch_losses: List[float] = []
    last_good = params.copy()
    best_loss = math.inf
    stale = 0

    def _finish(trained: PifNetParams) -> None:
        extra = {
            "feature_names": ",".join(frame.feature_names),
            "loss_kind": loss_kind,
            "loss_c": _float_repr(cfg.loss.c),
            "train_rows": str(train_rows),
        }
        save_params(trained, out / CHECKPOINT_BIN, out / CHECKPOINT_MANIFEST, extra)
        scaler.save(out / SCALER_TXT)
        with open(out / TRAIN_LOG_CSV, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for epoch_idx, value in enumerate(epoch_losses, start=1):
                writer.writerow([epoch_idx, _float_repr(value)])
        if epoch_losses:
            plots.save_loss_curve(epoch_losses, out / LOSS_SVG)

    for epoch in range(1, cfg.training.max_epoch + 1):
        order = loop_rng.permutation(windows.count)
        total = 0.0
        for start in range(0, windows.count, batch_size):
            batch = order[start:start + batch_size]
            x_batch = windows.inputs[batch]
            y_batch = windows.targets[batch]
            preds, trace = forecast_batch(params, x_batch, training=True, rng=loop_rng)
            loss = loss_by_name(loss_kind, y_batch.ravel(), preds.ravel(), ewal_cfg)
            if not np.isfinite(loss.value):
                _finish(last_good)
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}; last good checkpoint saved")
            grads = backward_batch(params, trace, loss.grad_wrt_pred.reshape(preds.shape))
            adam_step(params.arrays, grads, adam)
            total += loss.value * len(batch)
        epoch_loss = total / windows.count
        epoch_losses.append(epoch_loss)
        last_good = params.copy()
        if cfg.training.early_stop_patience:
            if epoch_loss < best_loss - 1e-12:
                best_loss = epoch_loss
                stale = 0
            else:
                stale += 1
                if stale >= cfg.training.early_stop_patience:
                    print(f"train: early stop at epoch {epoch}")
                    break
        if epoch == 1 or epoch % max(1, cfg.training.max_epoch // 10) == 0:
            print(f"train: epoch {epoch} loss {epoch_loss:.6f}")

    _finish(params)
    return {"out_dir": out, "epoch_losses": epoch_losses, "params": params,
            "scaler": scaler, "selected": list(frame.feature_names)}


# ---------------------------------------------------------------------------
# Stage 4: evaluation
# ---------------------------------------------------------------------------


def persistence_predictions(load: np.ndarray, window_ends: Sequence[int],
                            horizon: int) -> np.ndarray:
    """Naive baseline: repeat the last observed value across the horizon."""
    return np.stack([np.full(horizon, load[t - 1]) for t in window_ends])


def run_evaluate(cfg: RunConfig, out_dir, data_dir=None, train_dir=None
                 ) -> MetricsReport:
    """One-step-ahead predictions over the held-out tail, scored in kW."""
    out = _prepare_dir(cfg, out_dir)
    data = Path(data_dir) if data_dir is not None else out
    train = Path(train_dir) if train_dir is not None else out
    checkpoint = train / CHECKPOINT_BIN
    if not checkpoint.exists():
        raise ContractError(f"{checkpoint} not found; run train first")
    params, extra = load_params(checkpoint, train / CHECKPOINT_MANIFEST)
    corrected = _read_corrected(data)
    selected = [name for name in extra.get("feature_names", "").split(",") if name]
    frame = corrected.select_features(selected)
    scaler = Scaler.load(train / SCALER_TXT)

    expected_cfg = model_config_from(cfg, input_dim=frame.n_columns)
    if expected_cfg != params.config:
        raise ContractError(
            f"checkpoint geometry {params.config} does not match config {expected_cfg}")

    n_rows = frame.n_rows
    train_rows, test_rows = resolve_split(cfg, n_rows)
    if test_rows < 1:
        raise ParameterError("evaluation needs at least one test row")
    lookback = params.config.lookback
    horizon = params.config.horizon
    test_start = n_rows - test_rows
    if test_start < lookback:
        raise InsufficientDataError(
            f"test region starts at row {test_start}, before one look-back window")

    scaled = scaler.apply(frame.data_matrix)
    window_ends = list(range(test_start, n_rows - horizon + 1))
    x_batch = np.stack([scaled[t - lookback:t] for t in window_ends])
    preds_scaled, _ = forecast_batch(params, x_batch, training=False)
    preds_kw = scaler.invert_column(preds_scaled, 0)
    actual_kw = np.stack([frame.load[t:t + horizon] for t in window_ends])
    naive_kw = persistence_predictions(frame.load, window_ends, horizon)

    report = evaluate(actual_kw.ravel(), preds_kw.ravel())
    naive_report = evaluate(actual_kw.ravel(), naive_kw.ravel())

    with open(out / PREDICTIONS_CSV, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "horizon", "actual_kw", "predicted_kw",
                         "persistence_kw"])
        for row, t in enumerate(window_ends):
            for h in range(horizon):
                writer.writerow([int(frame.timestamps[t + h]), h + 1,
                                 _float_repr(actual_kw[row, h]),
                                 _float_repr(preds_kw[row, h]),
                                 _float_repr(naive_kw[row, h])])
    rows = [("pifnet", report), ("persistence", naive_report)]
    write_metrics_csv(out / METRICS_CSV, rows)
    table = format_metrics_table(rows)
    (out / METRICS_TXT).write_text(table + "\n", encoding="utf-8")
    plots.save_prediction_plot(actual_kw[:, 0], preds_kw[:, 0], out / PREDICTION_SVG,
                               baseline=naive_kw[:, 0])
    print(table)
    return report


def run_chain(cfg: RunConfig, run_dir) -> MetricsReport:
    """preprocess -> select-features -> train -> evaluate in one directory."""
    run_preprocess(cfg, run_dir)
    run_select_features(cfg, run_dir)
    run_train(cfg, run_dir)
    return run_evaluate(cfg, run_dir)


# ---------------------------------------------------------------------------
# Stage 5: ablation
# ---------------------------------------------------------------------------


def variant_config(cfg: RunConfig, variant: str) -> RunConfig:
    out = cfg.copy()
    if variant == "full":
        pass
    elif variant == "wo_data_correction":
        out.ablation.data_correction = False
    elif variant == "wo_feature_selection":
        out.ablation.feature_selection = False
    elif variant == "wo_patch_processing":
        out.ablation.patching = False
    elif variant == "wo_gating":
        out.ablation.gating = False
    elif variant == "wo_loss":
        out.ablation.ewal = False
    else:
        raise ParameterError(f"unknown ablation variant {variant!r}")
    return out


def run_ablation(cfg: RunConfig, out_dir) -> Dict[str, object]:
    """All six configurations over the configured seeds, with per-variant
    failure isolation and a median comparison table."""
    out = _prepare_dir(cfg, out_dir)
    per_seed: List[Tuple[str, int, MetricsReport]] = []
    failures: List[Tuple[str, int, str]] = []
    for variant in ABLATION_VARIANTS:
        vcfg = variant_config(cfg, variant)
        variant_dir = out / variant
        data_dir = variant_dir / "data"
        try:
            run_preprocess(vcfg, data_dir)
            run_select_features(vcfg, data_dir, data_dir)
        except PifnetError as exc:
            failures.append((variant, -1, f"{type(exc).__name__}: {exc}"))
            continue
        for seed in cfg.ablation.seeds:
            scfg = vcfg.copy()
            scfg.training.seed = seed
            seed_dir = variant_dir / f"seed{seed}"
            try:
                run_train(scfg, seed_dir, data_dir=data_dir)
                report = run_evaluate(scfg, seed_dir, data_dir=data_dir,
                                      train_dir=seed_dir)
                per_seed.append((variant, seed, report))
            except PifnetError as exc:
                failures.append((variant, seed, f"{type(exc).__name__}: {exc}"))

    with open(out / "ablation_per_seed.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed"] + list(METRIC_COLUMNS))
        for variant, seed, report in per_seed:
            writer.writerow([variant, seed] + [_float_repr(v) for v in report.values()])

    medians: Dict[str, Dict[str, float]] = {}
    for variant in ABLATION_VARIANTS:
        reports = [r for v, _, r in per_seed if v == variant]
        if reports:
            medians[variant] = {
                column: float(np.median([getattr(r, column) for r in reports]))
                for column in METRIC_COLUMNS}
    with open(out / "ablation_summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant"] + [f"median_{c}" for c in METRIC_COLUMNS])
        for variant in ABLATION_VARIANTS:
            if variant in medians:
                writer.writerow([variant]
                                + [_float_repr(medians[variant][c]) for c in METRIC_COLUMNS])
    if failures:
        with open(out / "ablation_failures.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variant", "seed", "error"])
            writer.writerows(failures)
    for variant in ABLATION_VARIANTS:
        if variant in medians:
            print(f"ablation: {variant:22s} median_mse={medians[variant]['mse']:.4f}")
    return {"out_dir": out, "medians": medians, "per_seed": per_seed,
            "failures": failures}


# ---------------------------------------------------------------------------
# Stage 6: sensitivity
# ---------------------------------------------------------------------------


def _sweep_config(cfg: RunConfig, sweep: str, value: int) -> RunConfig:
    out = cfg.copy()
    if sweep == "max_epoch":
        out.training.max_epoch = value
    elif sweep == "lookback":
        out.model.lookback = value
    elif sweep == "batch_size":
        out.training.batch_size = value
    else:
        raise ParameterError(f"unknown sweep {sweep!r}")
    return out


def run_sensitivity(cfg: RunConfig, out_dir) -> Dict[str, object]:
    """Vary one hyperparameter at a time over its candidate grid and report
    the per-metric spread of the resulting scores."""
    out = _prepare_dir(cfg, out_dir)
    data_dir = out / "data"
    run_preprocess(cfg, data_dir)
    run_select_features(cfg, data_dir, data_dir)

    sweeps = (("max_epoch", cfg.sensitivity.max_epoch_grid),
              ("lookback", cfg.sensitivity.lookback_grid),
              ("batch_size", cfg.sensitivity.batch_size_grid))
    cells: List[Tuple[str, int, MetricsReport]] = []
    failures: List[Tuple[str, int, str]] = []
    for sweep, grid in sweeps:
        for value in grid:
            scfg = _sweep_config(cfg, sweep, int(value))
            cell_dir = out / sweep / str(value)
            try:
                run_train(scfg, cell_dir, data_dir=data_dir)
                report = run_evaluate(scfg, cell_dir, data_dir=data_dir,
                                      train_dir=cell_dir)
                cells.append((sweep, int(value), report))
            except PifnetError as exc:
                failures.append((sweep, int(value), f"{type(exc).__name__}: {exc}"))

    with open(out / "sensitivity_cells.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep", "value"] + list(METRIC_COLUMNS))
        for sweep, value, report in cells:
            writer.writerow([sweep, value] + [_float_repr(v) for v in report.values()])

    spreads: Dict[str, Dict[str, float]] = {}
    for sweep, _ in sweeps:
        reports = [r for s, _, r in cells if s == sweep]
        if reports:
            spreads[sweep] = {
                column: sensitivity_std([getattr(r, column) for r in reports])
                for column in METRIC_COLUMNS}
    with open(out / "sensitivity_report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + [s for s, _ in sweeps])
        for column in METRIC_COLUMNS:
            writer.writerow([column] + [
                _float_repr(spreads[s][column]) if s in spreads else ""
                for s, _ in sweeps])
    if failures:
        with open(out / "sensitivity_failures.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sweep", "value", "error"])
            writer.writerows(failures)
    print(f"sensitivity: {len(cells)} cells, report -> {out / 'sensitivity_report.csv'}")
    return {"out_dir": out, "spreads": spreads, "cells": cells, "failures": failures}
