"""Patch-based gated recurrent forecaster with hand-derived gradients.

One look-back window X (L rows, D columns) flows through:

  patches      p_i = X[(i-1)S : (i-1)S + P_L, :],  P = floor((L-P_L)/S) + 1
  shared GRU   h_i = final top-layer state of a stacked GRU over p_i
  residual     u_i = h_i + W_res @ flatten(p_i) + b_res
  gating       alpha = softmax(w_g . u_i), fused = sum_i alpha_i u_i
  head         y = W_head @ fused + b_head, or a second GRU over the
               sequence [u_i | fused] whose final state feeds the same
               linear map

The GRU cell, gates stacked in the order update/reset/candidate:

  z_t = sigmoid(x_t W_xz + h_{t-1} W_hz + b_z)
  r_t = sigmoid(x_t W_xr + h_{t-1} W_hr + b_r)
  n_t = tanh  (x_t W_xn + r_t * (h_{t-1} W_hn) + b_n)
  h_t = (1 - z_t) * n_t + z_t * h_{t-1}

Batched entry points flatten the batch and patch axes into one, so the
recurrence runs on (B*P, hidden) blocks; per-window wrappers expose the
same math one sample at a time. Inverted dropout sits between stacked
layers and only in training mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, ParameterError
from .numerics import (
    Arrays,
    load_arrays,
    read_manifest,
    save_arrays,
    seeded_rng,
    sigmoid,
    softmax,
    uniform_init,
    write_manifest,
)

HEADS = ("linear", "decoder_gru")


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 24
    horizon: int = 1
    input_dim: int = 1
    patch_length: int = 4
    stride: int = 2
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.2
    head: str = "linear"
    gating: bool = True

    def __post_init__(self):
        if min(self.lookback, self.horizon, self.input_dim, self.hidden, self.layers) < 1:
            raise ParameterError("model dimensions must be positive")
        if not 1 <= self.patch_length <= self.lookback:
            raise ParameterError(
                f"patch_length {self.patch_length} must lie in [1, lookback={self.lookback}]")
        if self.stride < 1:
            raise ParameterError("stride must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must lie in [0, 1)")
        if self.head not in HEADS:
            raise ParameterError(f"head must be one of {HEADS}")

    @property
    def patch_count(self) -> int:
        return (self.lookback - self.patch_length) // self.stride + 1

    @property
    def flat_patch(self) -> int:
        return self.patch_length * self.input_dim


@dataclass
class PatchSet:
    """Patches cut from one window; patch i equals the source slice
    [(i-1)S, (i-1)S + P_L) bit-exactly (1-indexed)."""

    patches: np.ndarray  # (P, P_L, D)
    patch_length: int
    stride: int

    @property
    def count(self) -> int:
        return self.patches.shape[0]


@dataclass
class PifNetParams:
    """All trainable arrays, keyed by role.

    Keys: ``gru<l>.W_x`` (in, 3H), ``gru<l>.W_h`` (H, 3H), ``gru<l>.b``
    (3H,) per shared layer; ``res.W`` (H, P_L*D) and ``res.b`` (H,);
    ``gate.w`` (H,) and ``gate.b`` (1,); ``head.W`` (T, H) and ``head.b``
    (T,); plus ``dec.*`` mirrors of one GRU layer when the decoder head is
    configured.
    """

    config: ModelConfig
    arrays: Arrays

    def copy(self) -> "PifNetParams":
        return PifNetParams(config=self.config,
                            arrays={k: v.copy() for k, v in self.arrays.items()})


def _array_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    h = config.hidden
    shapes: Dict[str, Tuple[int, ...]] = {}
    in_dim = config.input_dim
    for layer in range(config.layers):
        shapes[f"gru{layer}.W_x"] = (in_dim, 3 * h)
        shapes[f"gru{layer}.W_h"] = (h, 3 * h)
        shapes[f"gru{layer}.b"] = (3 * h,)
        in_dim = h
    shapes["res.W"] = (h, config.flat_patch)
    shapes["res.b"] = (h,)
    shapes["gate.w"] = (h,)
    shapes["gate.b"] = (1,)
    if config.head == "decoder_gru":
        shapes["dec.W_x"] = (2 * h, 3 * h)
        shapes["dec.W_h"] = (h, 3 * h)
        shapes["dec.b"] = (3 * h,)
    shapes["head.W"] = (config.horizon, h)
    shapes["head.b"] = (config.horizon,)
    return shapes


def init_params(config: ModelConfig, seed: int = 0) -> PifNetParams:
    """Seed-reproducible uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.

    fan_in is the array's input width: the flattened patch length for the
    residual branch, the feeding width for input projections, and the
    hidden width everywhere else (recurrent matrices, biases, gate, head).
    """
    rng = seeded_rng(seed, 0xA11)
    arrays: Arrays = {}
    for name, shape in _array_shapes(config).items():
        if name in ("res.W", "res.b"):
            fan_in = config.flat_patch
        elif name.endswith(".W_x"):
            fan_in = shape[0]
        else:
            fan_in = config.hidden
        arrays[name] = uniform_init(rng, shape, fan_in)
    return PifNetParams(config=config, arrays=arrays)


# ---------------------------------------------------------------------------
# Patching
# ---------------------------------------------------------------------------


def patchify(x: np.ndarray, patch_length: int, stride: int) -> PatchSet:
    """Cut one window (L, D) into P = floor((L-P_L)/S)+1 patches; rows past
    the last full patch are dropped."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lookback = x.shape[0]
    if not 1 <= patch_length <= lookback:
        raise ParameterError(f"patch_length {patch_length} out of range for {lookback} rows")
    if stride < 1:
        raise ParameterError("stride must be at least 1")
    count = (lookback - patch_length) // stride + 1
    patches = np.stack([x[i * stride: i * stride + patch_length] for i in range(count)])
    return PatchSet(patches=patches, patch_length=patch_length, stride=stride)


def _extract_patches(x_batch: np.ndarray, config: ModelConfig) -> np.ndarray:
    """(B, L, D) -> (B, P, P_L, D) by strided slicing, identical content to
    :func:`patchify` per window."""
    view = np.lib.stride_tricks.sliding_window_view(x_batch, config.patch_length, axis=1)
    strided = view[:, ::config.stride][:, :config.patch_count]
    return np.ascontiguousarray(strided.transpose(0, 1, 3, 2))


# ---------------------------------------------------------------------------
# GRU layer forward/backward
# ---------------------------------------------------------------------------


@dataclass
class _GruLayerCache:
    """Per-layer forward cache; every array is time-major (T, M, width)."""

    seq: np.ndarray      # layer input (T, M, in)
    z: np.ndarray        # (T, M, H)
    r: np.ndarray
    n: np.ndarray
    h_prev: np.ndarray
    gh_n: np.ndarray     # candidate recurrent pre-gate term h_prev @ W_hn
    h_out: np.ndarray


def _gru_layer_forward(seq: np.ndarray, w_x: np.ndarray, w_h: np.ndarray,
                       b: np.ndarray) -> Tuple[np.ndarray, _GruLayerCache]:
    steps, m, _ = seq.shape
    hidden = w_h.shape[0]
    gx = (seq.reshape(steps * m, -1) @ w_x + b).reshape(steps, m, 3 * hidden)
    h = np.zeros((m, hidden))
    z_all = np.empty((steps, m, hidden))
    r_all = np.empty((steps, m, hidden))
    n_all = np.empty((steps, m, hidden))
    hp_all = np.empty((steps, m, hidden))
    ghn_all = np.empty((steps, m, hidden))
    out_all = np.empty((steps, m, hidden))
    for t in range(steps):
        gh = h @ w_h
        zr = sigmoid(gx[t, :, :2 * hidden] + gh[:, :2 * hidden])
        z = zr[:, :hidden]
        r = zr[:, hidden:]
        gh_n = gh[:, 2 * hidden:]
        n = np.tanh(gx[t, :, 2 * hidden:] + r * gh_n)
        z_all[t] = z
        r_all[t] = r
        n_all[t] = n
        hp_all[t] = h
        ghn_all[t] = gh_n
        h = (1.0 - z) * n + z * h
        out_all[t] = h
    cache = _GruLayerCache(seq=seq, z=z_all, r=r_all, n=n_all,
                           h_prev=hp_all, gh_n=ghn_all, h_out=out_all)
    return h, cache


def _gru_layer_backward(cache: _GruLayerCache, w_x: np.ndarray, w_h: np.ndarray,
                        d_final: Optional[np.ndarray],
                        d_out_seq: Optional[np.ndarray]):
    steps, m, _ = cache.seq.shape
    hidden = w_h.shape[0]
    d_gx = np.empty((steps, m, 3 * hidden))
    d_gh = np.empty((steps, m, 3 * hidden))
    dh = d_final.copy() if d_final is not None else np.zeros((m, hidden))
    for t in reversed(range(steps)):
        if d_out_seq is not None:
            dh = dh + d_out_seq[t]
        z = cache.z[t]
        r = cache.r[t]
        n = cache.n[t]
        hp = cache.h_prev[t]
        dn = dh * (1.0 - z)
        dz = dh * (hp - n)
        dpre_n = dn * (1.0 - n * n)
        dr = dpre_n * cache.gh_n[t]
        d_gx[t, :, :hidden] = d_gh[t, :, :hidden] = dz * (z * (1.0 - z))
        d_gx[t, :, hidden:2 * hidden] = d_gh[t, :, hidden:2 * hidden] = dr * (r * (1.0 - r))
        d_gx[t, :, 2 * hidden:] = dpre_n
        d_gh[t, :, 2 * hidden:] = dpre_n * r
        dh = dh * z + d_gh[t] @ w_h.T
    seq_flat = cache.seq.reshape(steps * m, -1)
    d_gx_flat = d_gx.reshape(steps * m, 3 * hidden)
    d_w_x = seq_flat.T @ d_gx_flat
    d_wh = cache.h_prev.reshape(steps * m, hidden).T @ d_gh.reshape(steps * m, 3 * hidden)
    d_b = d_gx_flat.sum(axis=0)
    d_seq = (d_gx_flat @ w_x.T).reshape(steps, m, -1)
    return d_w_x, d_wh, d_b, d_seq


# ---------------------------------------------------------------------------
# Full model forward/backward, batched
# ---------------------------------------------------------------------------


@dataclass
class BatchTrace:
    """Cached intermediates of one batched forward pass."""

    training: bool
    patches_flat: np.ndarray          # (B*P, P_L*D)
    layer_caches: List[_GruLayerCache]
    drop_masks: List[Optional[np.ndarray]]
    u_mat: np.ndarray                 # (B, P, H)
    gate_scores: np.ndarray           # (B, P), bias excluded
    alpha: np.ndarray                 # (B, P)
    fused: np.ndarray                 # (B, H)
    predictions: np.ndarray           # (B, T)
    decoder_cache: Optional[_GruLayerCache] = None
    decoder_final: Optional[np.ndarray] = None


@dataclass
class ForwardTrace:
    """Per-window view of a forward pass, plus the cached batch trace."""

    hidden_states: np.ndarray  # (P, H)
    enhanced: np.ndarray       # (P, H)
    gate_scores: np.ndarray    # (P,) scores including the gate bias
    alpha: np.ndarray          # (P,)
    fused: np.ndarray          # (H,)
    prediction: np.ndarray     # (T,)
    batch: BatchTrace | None = None


def forecast_batch(params: PifNetParams, x_batch: np.ndarray,
                   training: bool = False,
                   rng: Optional[np.random.Generator] = None
                   ) -> Tuple[np.ndarray, BatchTrace]:
    """Forward pass over a batch of windows (B, L, D)."""
    cfg = params.config
    arr = params.arrays
    x_batch = np.asarray(x_batch, dtype=float)
    if x_batch.ndim != 3 or x_batch.shape[1:] != (cfg.lookback, cfg.input_dim):
        raise ContractError(
            f"expected batch shape (B, {cfg.lookback}, {cfg.input_dim}), got {x_batch.shape}")
    n_batch = x_batch.shape[0]
    n_patches = cfg.patch_count
    hidden = cfg.hidden

    patches = _extract_patches(x_batch, cfg)
    seq = np.ascontiguousarray(
        patches.reshape(n_batch * n_patches, cfg.patch_length, cfg.input_dim)
        .transpose(1, 0, 2))
    layer_caches: List[_GruLayerCache] = []
    drop_masks: List[Optional[np.ndarray]] = []
    h_final = np.zeros((n_batch * n_patches, hidden))
    for layer in range(cfg.layers):
        h_final, cache = _gru_layer_forward(
            seq, arr[f"gru{layer}.W_x"], arr[f"gru{layer}.W_h"], arr[f"gru{layer}.b"])
        layer_caches.append(cache)
        if layer < cfg.layers - 1:
            out = cache.h_out
            if training and cfg.dropout > 0.0:
                if rng is None:
                    raise ContractError("training-mode forward requires an rng for dropout")
                keep = 1.0 - cfg.dropout
                mask = (rng.random(out.shape) < keep) / keep
                drop_masks.append(mask)
                seq = out * mask
            else:
                drop_masks.append(None)
                seq = out

    patches_flat = patches.reshape(n_batch * n_patches, cfg.flat_patch)
    u = h_final + patches_flat @ arr["res.W"].T + arr["res.b"]
    u_mat = u.reshape(n_batch, n_patches, hidden)

    if cfg.gating:
        # the constant gate bias cancels inside the softmax, so it is left
        # out of the numeric path; shifting it is exactly output-neutral
        scores = u_mat @ arr["gate.w"]
        alpha = softmax(scores)
    else:
        scores = np.zeros((n_batch, n_patches))
        alpha = np.full((n_batch, n_patches), 1.0 / n_patches)
    fused = np.einsum("bp,bph->bh", alpha, u_mat)

    decoder_cache = None
    decoder_final = None
    if cfg.head == "linear":
        predictions = fused @ arr["head.W"].T + arr["head.b"]
    else:
        # decoder sequence runs over the patch axis: step i sees [u_i | fused]
        dec_in = np.concatenate(
            [u_mat.transpose(1, 0, 2),
             np.broadcast_to(fused[None, :, :], (n_patches, n_batch, hidden))], axis=2)
        decoder_final, decoder_cache = _gru_layer_forward(
            dec_in, arr["dec.W_x"], arr["dec.W_h"], arr["dec.b"])
        predictions = decoder_final @ arr["head.W"].T + arr["head.b"]

    trace = BatchTrace(training=training, patches_flat=patches_flat,
                       layer_caches=layer_caches, drop_masks=drop_masks,
                       u_mat=u_mat, gate_scores=scores, alpha=alpha,
                       fused=fused, predictions=predictions,
                       decoder_cache=decoder_cache, decoder_final=decoder_final)
    return predictions, trace


def backward_batch(params: PifNetParams, trace: BatchTrace,
                   d_predictions: np.ndarray) -> Arrays:
    """Gradients of a scalar loss for every parameter array, given the
    loss gradient with respect to the batch predictions (B, T)."""
    cfg = params.config
    arr = params.arrays
    if not trace.layer_caches:
        raise ContractError("trace carries no cached intermediates")
    d_y = np.asarray(d_predictions, dtype=float)
    if d_y.shape != trace.predictions.shape:
        raise ContractError(
            f"gradient shape {d_y.shape} does not match predictions {trace.predictions.shape}")
    grads: Arrays = {name: np.zeros_like(a) for name, a in arr.items()}
    n_batch, n_patches = trace.alpha.shape
    hidden = cfg.hidden

    if cfg.head == "linear":
        grads["head.W"] = d_y.T @ trace.fused
        grads["head.b"] = d_y.sum(axis=0)
        d_fused = d_y @ arr["head.W"]
        d_u = np.zeros((n_batch, n_patches, hidden))
    else:
        grads["head.W"] = d_y.T @ trace.decoder_final
        grads["head.b"] = d_y.sum(axis=0)
        d_dec_final = d_y @ arr["head.W"]
        dwx, dwh, db, d_dec_in = _gru_layer_backward(
            trace.decoder_cache, arr["dec.W_x"], arr["dec.W_h"], d_dec_final, None)
        grads["dec.W_x"], grads["dec.W_h"], grads["dec.b"] = dwx, dwh, db
        d_u = np.ascontiguousarray(d_dec_in[:, :, :hidden].transpose(1, 0, 2))
        d_fused = d_dec_in[:, :, hidden:].sum(axis=0)

    alpha = trace.alpha
    u_mat = trace.u_mat
    d_u += alpha[:, :, None] * d_fused[:, None, :]
    if cfg.gating:
        d_alpha = np.einsum("bh,bph->bp", d_fused, u_mat)
        inner = (alpha * d_alpha).sum(axis=1, keepdims=True)
        d_scores = alpha * (d_alpha - inner)
        grads["gate.w"] = np.einsum("bp,bph->h", d_scores, u_mat)
        d_u += d_scores[:, :, None] * arr["gate.w"][None, None, :]
    # gate.b cancels in the softmax: its gradient is identically zero

    d_u_flat = d_u.reshape(n_batch * n_patches, hidden)
    grads["res.W"] = d_u_flat.T @ trace.patches_flat
    grads["res.b"] = d_u_flat.sum(axis=0)

    d_final: Optional[np.ndarray] = d_u_flat
    d_out_seq: Optional[np.ndarray] = None
    for layer in reversed(range(cfg.layers)):
        cache = trace.layer_caches[layer]
        dwx, dwh, db, d_seq = _gru_layer_backward(
            cache, arr[f"gru{layer}.W_x"], arr[f"gru{layer}.W_h"], d_final, d_out_seq)
        grads[f"gru{layer}.W_x"] = dwx
        grads[f"gru{layer}.W_h"] = dwh
        grads[f"gru{layer}.b"] = db
        if layer > 0:
            mask = trace.drop_masks[layer - 1]
            d_out_seq = d_seq * mask if mask is not None else d_seq
            d_final = None
    return grads


# ---------------------------------------------------------------------------
# Per-window wrappers
# ---------------------------------------------------------------------------


def gru_forward(patch: np.ndarray, params: PifNetParams, *, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Final top-layer state (H,) of the shared stacked GRU over one patch."""
    cfg = params.config
    seq = np.atleast_2d(np.asarray(patch, dtype=float))[:, None, :]  # (T, 1, D)
    h = np.zeros((1, cfg.hidden))
    for layer in range(cfg.layers):
        h, cache = _gru_layer_forward(seq,
                                      params.arrays[f"gru{layer}.W_x"],
                                      params.arrays[f"gru{layer}.W_h"],
                                      params.arrays[f"gru{layer}.b"])
        if layer < cfg.layers - 1:
            seq = cache.h_out
            if training and cfg.dropout > 0.0:
                if rng is None:
                    raise ContractError("training-mode forward requires an rng for dropout")
                keep = 1.0 - cfg.dropout
                seq = seq * ((rng.random(seq.shape) < keep) / keep)
    return h[0]


def residual_encode(patch: np.ndarray, h: np.ndarray, params: PifNetParams) -> np.ndarray:
    """u = h + W_res @ flatten(patch) + b_res, row-major (time-major) flatten."""
    flat = np.asarray(patch, dtype=float).ravel()
    w_res = params.arrays["res.W"]
    if flat.shape[0] != w_res.shape[1]:
        raise ContractError(
            f"flattened patch has {flat.shape[0]} entries, res.W expects {w_res.shape[1]}")
    return np.asarray(h, dtype=float) + w_res @ flat + params.arrays["res.b"]


def gate_fuse(u_vectors: Sequence[np.ndarray], params: PifNetParams
              ) -> Tuple[np.ndarray, np.ndarray]:
    """Softmax-weighted fusion of patch representations."""
    u_mat = np.atleast_2d(np.asarray(u_vectors, dtype=float))
    if u_mat.shape[0] < 1:
        raise ParameterError("need at least one patch representation")
    if params.config.gating:
        alpha = softmax(u_mat @ params.arrays["gate.w"])
    else:
        alpha = np.full(u_mat.shape[0], 1.0 / u_mat.shape[0])
    return alpha, alpha @ u_mat


def forecast(params: PifNetParams, x: np.ndarray, mode: str = "eval",
             rng: Optional[np.random.Generator] = None
             ) -> Tuple[np.ndarray, ForwardTrace]:
    """Full pipeline over one window (L, D); deterministic in eval mode."""
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    predictions, batch = forecast_batch(params, x[None], training=(mode == "train"), rng=rng)
    hidden_states = batch.layer_caches[-1].h_out[-1]
    trace = ForwardTrace(
        hidden_states=hidden_states,
        enhanced=batch.u_mat[0],
        gate_scores=batch.gate_scores[0] + params.arrays["gate.b"][0],
        alpha=batch.alpha[0],
        fused=batch.fused[0],
        prediction=predictions[0],
        batch=batch,
    )
    return predictions[0], trace


def backward(params: PifNetParams, trace: ForwardTrace,
             d_loss_d_pred: np.ndarray) -> Arrays:
    """Parameter gradients for one window's forward trace."""
    if trace.batch is None:
        raise ContractError("trace carries no cached intermediates")
    d_y = np.asarray(d_loss_d_pred, dtype=float).reshape(1, -1)
    return backward_batch(params, trace.batch, d_y)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CONFIG_KEYS = ("lookback", "horizon", "input_dim", "patch_length", "stride",
                "hidden", "layers", "dropout", "head", "gating")


def save_params(params: PifNetParams, snapshot_path, manifest_path,
                extra: Optional[Dict[str, str]] = None) -> None:
    """Binary snapshot plus a text manifest describing the geometry."""
    save_arrays(snapshot_path, params.arrays)
    cfg = params.config
    entries = {
        "lookback": str(cfg.lookback),
        "horizon": str(cfg.horizon),
        "input_dim": str(cfg.input_dim),
        "patch_length": str(cfg.patch_length),
        "stride": str(cfg.stride),
        "hidden": str(cfg.hidden),
        "layers": str(cfg.layers),
        "dropout": repr(cfg.dropout),
        "head": cfg.head,
        "gating": "1" if cfg.gating else "0",
    }
    if extra:
        entries.update(extra)
    write_manifest(manifest_path, entries)


def load_params(snapshot_path, manifest_path) -> Tuple[PifNetParams, Dict[str, str]]:
    """Rebuild a parameter set; raises on any shape disagreement."""
    entries = read_manifest(manifest_path)
    missing = [k for k in _CONFIG_KEYS if k not in entries]
    if missing:
        raise ContractError(f"manifest missing keys: {missing}")
    config = ModelConfig(
        lookback=int(entries["lookback"]),
        horizon=int(entries["horizon"]),
        input_dim=int(entries["input_dim"]),
        patch_length=int(entries["patch_length"]),
        stride=int(entries["stride"]),
        hidden=int(entries["hidden"]),
        layers=int(entries["layers"]),
        dropout=float(entries["dropout"]),
        head=entries["head"],
        gating=entries["gating"] == "1",
    )
    arrays = load_arrays(snapshot_path)
    expected = _array_shapes(config)
    if set(arrays) != set(expected):
        raise ContractError(
            f"snapshot arrays {sorted(arrays)} do not match manifest geometry {sorted(expected)}")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ContractError(
                f"array {name!r} has shape {arrays[name].shape}, manifest implies {shape}")
    extra = {k: v for k, v in entries.items() if k not in _CONFIG_KEYS}
    return PifNetParams(config=config, arrays=arrays), extra
