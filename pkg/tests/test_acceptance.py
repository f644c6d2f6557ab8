"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete. Criteria 6 and 7 share one module-scoped fixture
that performs ten full training runs at desk scale, so this file takes
several minutes.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from test_anomaly import oracle_lof
from pifnet import pipeline
from pifnet.anomaly import lof_scores
from pifnet.attribution import shapley_values
from pifnet.config import RunConfig
from pifnet.core_data import CsvSchema, load_csv
from pifnet.errors import PifnetError
from pifnet.losses import EwalConfig, ewal, log_loss, mae_loss, mse_loss, rq_loss
from pifnet.metrics import evaluate
from pifnet.model import ModelConfig, backward_batch, forecast_batch, init_params
from pifnet.numerics import grad_check, seeded_rng
from pifnet.svr import SvrParams, svr_predict, train_svr

# data seed chosen so all ten injected spikes land inside the training
# region (the held-out tail stays spike-free and predictable)
DESK_DATA_SEED = 1

# Flag budget for the desk experiment: ceil(0.004 * 1900) = 8 flags against
# 10 injected spikes, so two anomalies survive correction into the training
# targets. With a budget covering every spike the loss comparison of
# criterion 7 degenerates to seed noise (both variants train on clean
# targets); leaving residual anomalies is what makes the robust-loss
# ablation measure its mechanism. Criterion 6's thresholds hold either way.
DESK_CONTAMINATION = 0.004


def report(num: int, description: str, passed: bool) -> None:
    print(f"\n[criterion {num}] {'PASS' if passed else 'FAIL'}: {description}")
    assert passed, f"criterion {num} failed: {description}"


def desk_config(seed: int = 0, ewal_on: bool = True) -> RunConfig:
    cfg = RunConfig.defaults()
    cfg.data.n = 2000
    cfg.data.daily_amplitude = 3.0
    cfg.data.noise_std = 0.1
    cfg.data.spike_count = 10
    cfg.data.spike_magnitude = 8.0
    cfg.data.seed = DESK_DATA_SEED
    cfg.split.test_rows = 100
    cfg.lof.contamination = DESK_CONTAMINATION
    cfg.training.max_epoch = 50
    cfg.training.seed = seed
    cfg.ablation.ewal = ewal_on
    return cfg


def persistence_mse(run_dir: Path) -> float:
    with open(run_dir / "metrics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["name"] == "persistence":
                return float(row["mse"])
    raise AssertionError("persistence row missing from metrics.csv")


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    """Ten desk-scale trainings: the full pipeline and its MSE-trained
    twin, five seeds each, sharing one preprocessed data directory per
    variant."""
    base = tmp_path_factory.mktemp("desk")
    out = {}
    for label, ewal_on in (("full", True), ("wo_loss", False)):
        started = time.monotonic()
        data_dir = base / label / "data"
        cfg0 = desk_config(0, ewal_on)
        pipeline.run_preprocess(cfg0, data_dir)
        pipeline.run_select_features(cfg0, data_dir, data_dir)
        reports = []
        naive = None
        for seed in range(5):
            cfg = desk_config(seed, ewal_on)
            run_dir = base / label / f"seed{seed}"
            pipeline.run_train(cfg, run_dir, data_dir=data_dir)
            reports.append(pipeline.run_evaluate(cfg, run_dir, data_dir=data_dir,
                                                 train_dir=run_dir))
            if naive is None:
                naive = persistence_mse(run_dir)
        out[label] = {"reports": reports, "persistence_mse": naive,
                      "elapsed": time.monotonic() - started}
    return out


def test_criterion_1_lof_oracle_equivalence():
    started = time.monotonic()
    gen = seeded_rng(2024, 1)
    k_choices = (2, 5, 10, 20)
    worst = 0.0
    for case in range(50):
        k = k_choices[case % 4]
        n = int(gen.integers(k + 5, 301))
        d = int(gen.integers(1, 4))
        points = gen.standard_normal((n, d)) * float(gen.uniform(0.5, 20.0))
        gap = float(np.max(np.abs(lof_scores(points, k) - oracle_lof(points, k))))
        worst = max(worst, gap)
    elapsed = time.monotonic() - started
    report(1, f"LOF matches the direct oracle on 50 instances "
              f"(worst gap {worst:.2e}, {elapsed:.1f}s)",
           worst < 1e-9 and elapsed < 30.0)


def test_criterion_2_shapley_axioms():
    started = time.monotonic()
    gen = seeded_rng(2024, 2)

    # five-feature model, 64 background rows: efficiency per sample
    x5 = gen.standard_normal((120, 5))
    y5 = (2.0 * x5[:, 0] + np.sin(x5[:, 1]) + 0.5 * x5[:, 2] * x5[:, 3]
          + 0.05 * gen.standard_normal(120))
    model5 = train_svr(x5, y5, SvrParams(C=20.0, epsilon_tube=0.05, gamma=0.2))
    background = x5[:64]
    baseline = float(np.mean(svr_predict(model5, background)))
    eff_gap = 0.0
    for sample in x5[70:90]:
        phi = shapley_values(model5, sample, background)
        eff_gap = max(eff_gap, abs(phi.sum() - (svr_predict(model5, sample) - baseline)))

    # six features where the last never varies: dummy axiom
    x6 = np.hstack([x5[:, :5], np.full((120, 1), 0.25)])
    model6 = train_svr(x6, y5, SvrParams(C=20.0, epsilon_tube=0.05, gamma=0.2))
    dummy_phi = max(abs(shapley_values(model6, sample, x6[:64])[5])
                    for sample in x6[70:80])

    # duplicated feature: symmetry axiom
    base_col = gen.standard_normal(80)
    x_twin = np.column_stack([base_col, base_col, gen.standard_normal(80)])
    y_twin = np.sin(base_col)
    model_twin = train_svr(x_twin, y_twin, SvrParams(C=10.0, epsilon_tube=0.05, gamma=0.4))
    twin_gap = max(abs(np.subtract(*shapley_values(model_twin, sample, x_twin[:64])[:2]))
                   for sample in x_twin[60:70])

    elapsed = time.monotonic() - started
    report(2, f"Shapley axioms: efficiency {eff_gap:.2e}, dummy {dummy_phi:.2e}, "
              f"twin gap {twin_gap:.2e} ({elapsed:.1f}s)",
           eff_gap < 1e-9 and dummy_phi < 1e-9 and twin_gap < 1e-6 and elapsed < 60.0)


def test_criterion_3_gradient_suite():
    started = time.monotonic()
    gen = seeded_rng(2024, 3)
    cfg = ModelConfig(lookback=12, horizon=1, input_dim=3, patch_length=4,
                      stride=4, hidden=8, layers=2)
    params = init_params(cfg, seed=0)
    x_batch = gen.standard_normal((8, 12, 3))
    y_batch = gen.standard_normal((8, 1))

    preds, trace = forecast_batch(params, x_batch)
    base_ewal = ewal(y_batch.ravel(), preds.ravel())
    frozen_w = base_ewal.weights
    loss_defs = {
        "mse": lambda p: mse_loss(y_batch.ravel(), p).value,
        "mae": lambda p: mae_loss(y_batch.ravel(), p).value,
        "ewal_frozen": lambda p: float(np.mean(
            frozen_w * rq_loss(y_batch.ravel() - p, 1.0)
            + (1.0 - frozen_w) * log_loss(y_batch.ravel() - p, 1.0))),
    }
    grad_defs = {
        "mse": lambda p: mse_loss(y_batch.ravel(), p).grad_wrt_pred,
        "mae": lambda p: mae_loss(y_batch.ravel(), p).grad_wrt_pred,
        "ewal_frozen": lambda p: ewal(y_batch.ravel(), p).grad_wrt_pred,
    }

    worst = {}
    for loss_name in loss_defs:
        value_fn, grad_fn = loss_defs[loss_name], grad_defs[loss_name]

        def objective(name, flat):
            saved = params.arrays[name]
            params.arrays[name] = flat.reshape(saved.shape)
            p, _ = forecast_batch(params, x_batch)
            value = value_fn(p.ravel())
            params.arrays[name] = saved
            return value

        p, tr = forecast_batch(params, x_batch)
        grads = backward_batch(params, tr, grad_fn(p.ravel()).reshape(p.shape))
        for name in sorted(params.arrays):
            err = grad_check(lambda v, n=name: objective(n, v),
                             params.arrays[name], grads[name], h=1e-5)
            worst[f"{loss_name}/{name}"] = err

    # loss gradients with respect to predictions directly; errors are kept
    # clear of the MAE kink, and the EWAL check freezes the weights at the
    # probe point (the stop-gradient convention)
    pred_point = y_batch.ravel() - np.where(np.arange(8) % 2 == 0, 0.8, -1.3)
    point_w = ewal(y_batch.ravel(), pred_point).weights
    point_checks = {
        "mse": (lambda p: mse_loss(y_batch.ravel(), p).value,
                mse_loss(y_batch.ravel(), pred_point).grad_wrt_pred),
        "mae": (lambda p: mae_loss(y_batch.ravel(), p).value,
                mae_loss(y_batch.ravel(), pred_point).grad_wrt_pred),
        "ewal_frozen": (lambda p: float(np.mean(
            point_w * rq_loss(y_batch.ravel() - p, 1.0)
            + (1.0 - point_w) * log_loss(y_batch.ravel() - p, 1.0))),
            ewal(y_batch.ravel(), pred_point).grad_wrt_pred),
    }
    for loss_name, (value_fn, analytic) in point_checks.items():
        worst[f"{loss_name}/predictions"] = grad_check(value_fn, pred_point,
                                                       analytic, h=1e-5)

    elapsed = time.monotonic() - started
    peak = max(worst.values())
    report(3, f"gradient suite: {len(worst)} checks, worst {peak:.2e} ({elapsed:.1f}s)",
           peak < 1e-4 and elapsed < 60.0)


def test_criterion_4_metric_correctness():
    hand = evaluate([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
    hand_ok = (abs(hand.mae - 2.0 / 3.0) < 1e-3
               and abs(hand.mse - 2.0 / 3.0) < 1e-3
               and abs(hand.rmse - 0.8165) < 1e-3
               and abs(hand.mape_percent - 44.444) < 1e-3
               and abs(hand.r2 - 0.0) < 1e-3
               and abs(hand.ia - 0.0) < 1e-3
               and abs(hand.u1 - 0.1963) < 1e-3)
    y = np.array([4.0, 7.0, 1.0, 9.0, 4.0])
    perfect = evaluate(y, y)
    perfect_ok = (perfect.mae == 0.0 and perfect.mse == 0.0 and perfect.rmse == 0.0
                  and perfect.mape_percent == 0.0 and perfect.u1 == 0.0
                  and perfect.r2 == 1.0 and perfect.ia == 1.0)
    mean_pred = evaluate(y, np.full(5, y.mean()))
    report(4, "metric hand case within 1e-3 and identity cases exact",
           hand_ok and perfect_ok and mean_pred.r2 == 0.0)


def test_criterion_5_ewal_analytics():
    scale_ok = all(abs(rq_loss(c, c) - c * c / 2.0) < 1e-12
                   and abs(log_loss(c, c) - math.log(2.0)) < 1e-12
                   for c in (0.5, 1.0, 2.5))

    # two-element batch [c, -c] at c=1: sigma=1, omega=exp(-1/(1+eps)),
    # value = omega/2 + (1-omega) ln 2 = 0.6220922... (hand substitution)
    cfg = EwalConfig(c=1.0, eps=1e-8)
    omega = math.exp(-1.0 / (1.0 + cfg.eps))
    expected = omega * 0.5 + (1.0 - omega) * math.log(2.0)
    got = ewal(np.array([1.0, -1.0]), np.zeros(2), cfg)
    batch_ok = abs(got.value - expected) < 1e-6 and abs(expected - 0.6220922) < 1e-6

    # batches of size >= 2 with unit-scale errors keep the weight exponent
    # out of underflow territory, so omega stays strictly positive; the
    # single-element sigma=0 case is covered separately (omega -> 0)
    gen = seeded_rng(2024, 5)
    bound_ok = True
    rq_grad_peak = 9.0 / (8.0 * math.sqrt(3.0))
    for _ in range(1000):
        n = int(gen.integers(2, 33))
        y = gen.standard_normal(n) * 50
        y_hat = y - gen.standard_normal(n)
        res = ewal(y, y_hat, cfg)
        if not (np.all(res.weights > 0.0) and np.all(res.weights <= 1.0)):
            bound_ok = False
            break
        limit = (rq_grad_peak * cfg.c + 1.0 / cfg.c) / n + 1e-12
        if np.max(np.abs(res.grad_wrt_pred)) > limit:
            bound_ok = False
            break
    lone = ewal(np.array([7.0]), np.array([0.0]), cfg)
    bound_ok = bound_ok and lone.weights[0] == 0.0 \
        and abs(lone.value - log_loss(7.0, 1.0)) < 1e-12
    report(5, f"EWAL analytics: scale identities, batch case {got.value:.6f}, "
              f"weights and gradient bounds on 1000 batches",
           scale_ok and batch_ok and bound_ok)


def test_criterion_6_desk_scale_learning(desk_runs):
    full = desk_runs["full"]
    r2s = [r.r2 for r in full["reports"]]
    mses = [r.mse for r in full["reports"]]
    median_r2 = float(np.median(r2s))
    median_mse = float(np.median(mses))
    naive = full["persistence_mse"]
    elapsed = full["elapsed"]
    report(6, f"desk-scale learning: median R2 {median_r2:.4f} (>=0.90), "
              f"median MSE {median_mse:.4f} < persistence {naive:.4f}, "
              f"{elapsed:.0f}s (<600s)",
           median_r2 >= 0.90 and median_mse < naive and elapsed < 600.0)


def test_criterion_7_ablation_ordering(desk_runs):
    # Soft, statistical criterion. Decision rule (documented tolerance):
    # pass when the medians are ordered; if they are not, still pass when
    # at most one seed inverts the per-seed pairing.
    full = [r.mse for r in desk_runs["full"]["reports"]]
    wo_loss = [r.mse for r in desk_runs["wo_loss"]["reports"]]
    median_full = float(np.median(full))
    median_wo = float(np.median(wo_loss))
    inversions = sum(f > w for f, w in zip(full, wo_loss))
    ordered = median_full <= median_wo
    report(7, f"ablation ordering: median MSE full {median_full:.4f} vs "
              f"mse-trained {median_wo:.4f}, per-seed inversions {inversions}/5",
           ordered or inversions <= 1)


def _write_building_year_csv(path: Path) -> None:
    """8760 hourly rows with five weather-style covariates, one year."""
    gen = seeded_rng(2024, 8)
    n = 8760
    t = np.arange(n, dtype=float)
    daily = np.sin(2.0 * np.pi * t / 24.0)
    weekly = 0.4 * np.sin(2.0 * np.pi * t / (24.0 * 7.0))
    seasonal = 3.0 * np.sin(2.0 * np.pi * t / n)
    load = 31.0 + 8.0 * daily + 4.0 * weekly + seasonal + 0.8 * gen.standard_normal(n)
    air = 15.0 + 10.0 * np.sin(2.0 * np.pi * t / n - 0.5) + 4.0 * daily \
        + gen.standard_normal(n)
    dew = air - 3.0 + gen.standard_normal(n)
    pressure = 1013.0 + 5.0 * gen.standard_normal(n)
    direction = gen.uniform(0.0, 360.0, n)
    speed = np.abs(3.0 + gen.standard_normal(n))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "load", "air_temperature", "dew_temperature",
                         "sea_level_pressure", "wind_direction", "wind_speed"])
        start = 1483228800
        for i in range(n):
            writer.writerow([start + 3600 * i, repr(float(load[i])),
                             repr(float(air[i])), repr(float(dew[i])),
                             repr(float(pressure[i])), repr(float(direction[i])),
                             repr(float(speed[i]))])


def test_criterion_8_no_reference_numbers_and_ingestion_smoke(tmp_path):
    # The reference experiments' absolute scores (for example MAE 1.7444 and
    # MSE 6.2633 on their first building) are NOT reproduction targets: the
    # exact weather-station joins and split seeds behind them are
    # unpublished. The artifact substitutes the property suites above plus
    # this ingestion and end-to-end smoke test at the published data scale.
    csv_path = tmp_path / "building_year.csv"
    _write_building_year_csv(csv_path)
    frame = load_csv(csv_path, CsvSchema())
    parse_ok = frame.n_rows == 8760 and frame.n_columns == 6

    cfg = RunConfig.defaults()
    cfg.data.kind = "csv"
    cfg.data.path = str(csv_path)
    cfg.split.test_rows = 100
    cfg.svr.max_rows = 256
    cfg.shapley.max_samples = 64
    cfg.training.max_epoch = 2
    run_dir = tmp_path / "run"
    try:
        metrics = pipeline.run_chain(cfg, run_dir)
        chain_ok = np.isfinite(metrics.mse)
    except PifnetError as exc:  # pragma: no cover - failure path
        chain_ok = False
        print(f"pipeline failed: {exc}")

    flags = sum(1 for _ in open(run_dir / "anomaly_report.csv")) - 1
    expected_flags = math.ceil(0.05 * 8660)
    report(8, f"published absolute scores are out of reach by construction; "
              f"8760-row ingestion and end-to-end run completed "
              f"({flags} flags = ceil(0.05*8660))",
           parse_ok and chain_ok and flags == expected_flags)


def test_criterion_9_determinism(tmp_path):
    cfg = RunConfig.defaults()
    cfg.data.n = 300
    cfg.data.spike_count = 4
    cfg.data.seed = 3
    cfg.split.test_rows = 40
    cfg.lof.k = 5
    cfg.svr.max_rows = 64
    cfg.shapley.max_samples = 12
    cfg.shapley.background_rows = 16
    cfg.model.lookback = 12
    cfg.model.hidden = 8
    cfg.training.max_epoch = 4
    cfg.training.batch_size = 16

    digests = []
    for run in ("a", "b"):
        run_dir = tmp_path / run
        pipeline.run_chain(cfg, run_dir)
        digests.append(tuple((run_dir / name).read_bytes()
                             for name in ("training_log.csv", "checkpoint.bin",
                                          "checkpoint.manifest", "metrics.csv",
                                          "predictions.csv", "corrected.csv")))
    report(9, "two identically configured runs emit bit-identical logs, "
              "checkpoints, and reports",
           digests[0] == digests[1])
