"""Embedding tables and dense ReLU layers on numpy arrays, with
hand-written gradients.

Parameters live in a plain dict keyed by name, in a canonical order:
one embedding table per categorical feature (feature order), then the
hidden dense layers, then the output layer. Everything downstream
(SGD updates, gradient checks, checkpoints) walks that dict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_dense(rng, fan_in, fan_out, dtype):
    """Glorot-uniform weight matrix and zero bias."""
    lim = glorot_limit(fan_in, fan_out)
    w = rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)
    b = np.zeros(fan_out, dtype=dtype)
    return w, b


def init_embedding(rng, n_rows, dim, dtype):
    """Glorot-uniform table; the row count plays the fan-in role."""
    lim = glorot_limit(n_rows, dim)
    return rng.uniform(-lim, lim, size=(n_rows, dim)).astype(dtype)


def ensure_finite(name: str, arr, log=None):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}", log=log)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, shift-stabilized."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow for large x."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class TrunkSpec:
    """Shapes of the shared feature trunk.

    emb_names orders the embedding tables; emb_rows gives each table's
    row count (vocabulary size including the unknown row).
    """

    emb_names: tuple[str, ...]
    emb_rows: tuple[int, ...]
    emb_dim: int
    n_continuous: int
    hidden: tuple[int, ...]

    def __post_init__(self):
        if len(self.emb_names) != len(self.emb_rows):
            raise ConfigError("emb_names and emb_rows length mismatch")
        if not self.emb_names and self.n_continuous == 0:
            raise ConfigError("trunk has no inputs")
        if self.emb_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError("embedding dim and hidden widths must be >= 1")
        if not self.hidden:
            raise ConfigError("trunk needs at least one hidden layer")

    @property
    def input_dim(self) -> int:
        return len(self.emb_names) * self.emb_dim + self.n_continuous

    @property
    def output_dim(self) -> int:
        return self.hidden[-1]

    def param_names(self) -> list[str]:
        names = [f"emb_{n}" for n in self.emb_names]
        for i in range(1, len(self.hidden) + 1):
            names += [f"w{i}", f"b{i}"]
        return names


def init_trunk(rng, spec: TrunkSpec, dtype) -> dict:
    """Parameter dict in canonical order: embeddings, then dense layers."""
    params: dict[str, np.ndarray] = {}
    for name, rows in zip(spec.emb_names, spec.emb_rows):
        params[f"emb_{name}"] = init_embedding(rng, rows, spec.emb_dim, dtype)
    fan_in = spec.input_dim
    for i, width in enumerate(spec.hidden, start=1):
        params[f"w{i}"], params[f"b{i}"] = init_dense(rng, fan_in, width, dtype)
        fan_in = width
    return params


@dataclass
class TrunkCache:
    """Forward-pass intermediates needed by trunk_backward."""

    categorical: np.ndarray
    layer_inputs: list  # h_0 (the concatenated input) .. h_{L-1}
    pre_acts: list  # z_1 .. z_L


def trunk_forward(params, spec: TrunkSpec, categorical, continuous):
    """Embed, concatenate, and run the ReLU stack.

    categorical is (N, m) int indices, continuous (N, c) float. Returns
    (h, cache) where h is the last hidden activation (N, hidden[-1]).
    """
    dtype = params["w1"].dtype
    cols = [
        params[f"emb_{name}"][categorical[:, j]]
        for j, name in enumerate(spec.emb_names)
    ]
    if spec.n_continuous:
        cols.append(np.asarray(continuous, dtype=dtype))
    x = np.concatenate(cols, axis=1) if len(cols) > 1 else cols[0]
    layer_inputs = [x]
    pre_acts = []
    h = x
    for i in range(1, len(spec.hidden) + 1):
        z = h @ params[f"w{i}"] + params[f"b{i}"]
        h = np.maximum(z, 0.0)
        pre_acts.append(z)
        if i < len(spec.hidden):
            layer_inputs.append(h)
    return h, TrunkCache(categorical, layer_inputs, pre_acts)


def trunk_backward(params, spec: TrunkSpec, cache: TrunkCache, dh, grads):
    """Backprop dh (gradient at the trunk output) into grads, in place."""
    n_layers = len(spec.hidden)
    for i in range(n_layers, 0, -1):
        dz = dh * (cache.pre_acts[i - 1] > 0)
        grads[f"w{i}"] = cache.layer_inputs[i - 1].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        dh = dz @ params[f"w{i}"].T
    offset = 0
    for j, name in enumerate(spec.emb_names):
        table = params[f"emb_{name}"]
        g = np.zeros_like(table)
        np.add.at(g, cache.categorical[:, j], dh[:, offset : offset + spec.emb_dim])
        grads[f"emb_{name}"] = g
        offset += spec.emb_dim
    # The continuous tail of dh has no parameters behind it.


def sgd_update(params: dict, grads: dict, learning_rate: float):
    for name, g in grads.items():
        params[name] -= learning_rate * g


def clone_params(params: dict) -> dict:
    return {name: arr.copy() for name, arr in params.items()}


def numerical_gradient(loss_fn, params: dict, eps: float = 1e-5) -> dict:
    """Central finite differences of loss_fn() w.r.t. every param element.

    loss_fn reads params by reference, so elements are perturbed in
    place and restored. Meant for small float64 models in tests.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            hi = loss_fn()
            flat[k] = orig - eps
            lo = loss_fn()
            flat[k] = orig
            gflat[k] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def gradient_rel_errors(analytic: dict, numeric: dict) -> dict:
    """Per-parameter worst relative error, with a unit floor on the scale."""
    out = {}
    for name in analytic:
        a = analytic[name]
        n = numeric[name]
        scale = np.maximum(1.0, np.abs(a) + np.abs(n))
        out[name] = float(np.max(np.abs(a - n) / scale))
    return out
