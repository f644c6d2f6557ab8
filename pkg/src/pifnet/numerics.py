"""Shared numeric plumbing: seeded randomness, softmax, Adam, gradient
checking, and the flat binary snapshot format for parameter sets.

All arrays are float64. Randomness comes exclusively from numpy's Philox
bit generator (a counter-based 4x64 algorithm), so a fixed integer key
reproduces the identical stream on every platform and run.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Dict, Mapping

import numpy as np

from .errors import ContractError, ProbeError

Arrays = Dict[str, np.ndarray]

SNAPSHOT_MAGIC = b"PIFNET01"


def seeded_rng(*key: int) -> np.random.Generator:
    """Philox generator keyed by one or more integers.

    Distinct key tuples give statistically independent streams; the same
    tuple always gives the same stream.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) sample, float64."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp may overflow for very negative inputs; the result still saturates
    # to exactly 0, so the overflow is benign
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def softmax(scores: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis.

    Output entries lie in (0, 1) and sum to 1 along the last axis.
    """
    s = np.asarray(scores, dtype=float)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters.

    ``m`` and ``v`` mirror the parameter set key-for-key and shape-for-shape;
    ``step_count`` increments by exactly one per :func:`adam_step`.
    """

    m: Arrays
    v: Arrays
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    lr: float = 0.001
    eps_adam: float = 1e-8


def init_adam(params: Mapping[str, np.ndarray], lr: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999,
              eps_adam: float = 1e-8) -> AdamState:
    m = {name: np.zeros_like(a) for name, a in params.items()}
    v = {name: np.zeros_like(a) for name, a in params.items()}
    return AdamState(m=m, v=v, beta1=beta1, beta2=beta2, lr=lr, eps_adam=eps_adam)


def adam_step(params: Arrays, grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """One Adam update with bias correction, applied in place.

    Parameters are visited in sorted-key order so accumulation is
    reproducible regardless of dict construction order.
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ContractError("parameter, gradient and state key sets differ")
    for name in sorted(params):
        if params[name].shape != grads[name].shape:
            raise ContractError(
                f"shape mismatch for '{name}': {params[name].shape} vs {grads[name].shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name in sorted(params):
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1 ** t)
        v_hat = state.v[name] / (1.0 - b2 ** t)
        params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_adam)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def grad_check(f: Callable[[np.ndarray], float], x: np.ndarray,
               analytic_grad: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between central differences of ``f`` and
    ``analytic_grad``, probing one coordinate at a time.

    Relative error per coordinate is |fd - an| / max(1, |fd|, |an|).
    """
    x = np.asarray(x, dtype=float)
    an = np.asarray(analytic_grad, dtype=float)
    if x.shape != an.shape:
        raise ContractError(f"gradient shape {an.shape} does not match input {x.shape}")
    flat = x.ravel().copy()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(flat.reshape(x.shape))
        flat[i] = orig - h
        f_minus = f(flat.reshape(x.shape))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ProbeError(f"objective non-finite at probe coordinate {i}")
        fd = (f_plus - f_minus) / (2.0 * h)
        a = an.ravel()[i]
        err = abs(fd - a) / max(1.0, abs(fd), abs(a))
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Binary snapshots
# ---------------------------------------------------------------------------
#
# Layout (little-endian):
#   8 bytes   magic "PIFNET01"
#   uint32    number of arrays
#   per array:
#     uint16    name length, then UTF-8 name bytes
#     uint8     ndim
#     uint32[]  dimensions
#     float64[] row-major data


def save_arrays(path, arrays: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            original = np.asarray(arrays[name])
            data = np.ascontiguousarray(original, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", original.ndim))
            for dim in original.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes())


def load_arrays(path) -> Arrays:
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ContractError(f"bad snapshot magic in {path!s}")
        (count,) = struct.unpack("<I", fh.read(4))
        arrays: Arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8").astype(float)
            arrays[name] = data.reshape(shape)
        return arrays


def write_manifest(path, entries: Mapping[str, str]) -> None:
    """Plain-text key=value manifest, one entry per line, sorted by key."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(entries):
            fh.write(f"{key}={entries[key]}\n")


def read_manifest(path) -> Dict[str, str]:
    entries: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("=")
            entries[key] = value
    return entries
