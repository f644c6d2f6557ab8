"""Building-load forecasting: anomaly repair, exact feature attribution,
a patch-based gated recurrent forecaster, and a robust adaptive loss."""

from .anomaly import LofResult, correct_outliers, detect_outliers, lof_scores, score_and_flag
from .attribution import (
    ShapleyAttribution,
    attribute_samples,
    global_importance,
    select_features,
    shapley_values,
)
from .config import RunConfig
from .core_data import (
    CsvSchema,
    Scaler,
    SeriesFrame,
    SynthSpec,
    WindowSet,
    fit_apply_scaler,
    load_csv,
    make_windows,
    synth_series,
)
from .losses import EwalConfig, LossResult, ewal, log_loss, mae_loss, mse_loss, rq_loss
from .metrics import MetricsReport, evaluate, sensitivity_std
from .model import (
    ForwardTrace,
    ModelConfig,
    PatchSet,
    PifNetParams,
    backward,
    backward_batch,
    forecast,
    forecast_batch,
    gate_fuse,
    gru_forward,
    init_params,
    patchify,
    residual_encode,
)
from .numerics import AdamState, adam_step, grad_check, init_adam, seeded_rng, softmax
from .svr import SvrModel, SvrParams, svr_predict, train_svr

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "CsvSchema",
    "EwalConfig",
    "ForwardTrace",
    "LofResult",
    "LossResult",
    "MetricsReport",
    "ModelConfig",
    "PatchSet",
    "PifNetParams",
    "RunConfig",
    "Scaler",
    "SeriesFrame",
    "ShapleyAttribution",
    "SvrModel",
    "SvrParams",
    "SynthSpec",
    "WindowSet",
    "adam_step",
    "attribute_samples",
    "backward",
    "backward_batch",
    "correct_outliers",
    "detect_outliers",
    "evaluate",
    "ewal",
    "fit_apply_scaler",
    "forecast",
    "forecast_batch",
    "gate_fuse",
    "global_importance",
    "grad_check",
    "gru_forward",
    "init_adam",
    "init_params",
    "load_csv",
    "lof_scores",
    "log_loss",
    "mae_loss",
    "make_windows",
    "mse_loss",
    "patchify",
    "residual_encode",
    "rq_loss",
    "score_and_flag",
    "seeded_rng",
    "select_features",
    "sensitivity_std",
    "shapley_values",
    "softmax",
    "svr_predict",
    "synth_series",
    "train_svr",
]
