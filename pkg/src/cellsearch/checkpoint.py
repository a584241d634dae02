"""Checkpoint file format and model persistence.

A checkpoint is a UTF-8 text header followed by a binary payload:

    cellsearch-checkpoint 1
    kind cell_classifier
    config {"batch_size": 512, ...}
    tensor emb_dest_type float32 9 16
    tensor w1 float32 147 64
    ...
    end
    <little-endian float32 tensor data, C order, in header order>

The config line is one JSON object with sorted keys, echoing every
hyperparameter plus the trained flag, so a file is self-describing.
Payloads are always float32 regardless of the in-memory dtype.
"""

from __future__ import annotations

import json

import numpy as np

from .baseline import BoundsConfig, BoundsModel
from .errors import ConfigError, DataError
from .features import SHARDS
from .model import DTYPES, ShardModel, TrainConfig
from .nn import TrunkSpec

MAGIC = "cellsearch-checkpoint"
FORMAT_VERSION = 1
KINDS = ("cell_classifier", "bounds_regressor")


def save_checkpoint(path, kind: str, config: dict, tensors: dict):
    """Write tensors (an ordered name -> array dict) under a text header."""
    if kind not in KINDS:
        raise ConfigError(f"unknown checkpoint kind {kind!r}")
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"kind {kind}"]
    lines.append("config " + json.dumps(config, sort_keys=True))
    payload = []
    for name, arr in tensors.items():
        if " " in name or "\n" in name:
            raise ConfigError(f"tensor name {name!r} contains whitespace")
        a = np.ascontiguousarray(arr, dtype="<f4")
        shape = " ".join(str(d) for d in a.shape)
        lines.append(f"tensor {name} float32 {shape}")
        payload.append(a.tobytes())
    lines.append("end")
    header = "\n".join(lines) + "\n"
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        for chunk in payload:
            f.write(chunk)


def load_checkpoint(path):
    """Read a checkpoint; returns (kind, config, tensors) with tensors an
    ordered dict of float32 arrays in header order."""
    raw = open(path, "rb").read()
    lines = []
    pos = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise DataError("checkpoint header has no end marker")
        line = raw[pos : nl].decode("utf-8", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0].split() != [MAGIC, str(FORMAT_VERSION)]:
        raise DataError("not a recognized checkpoint file")
    if len(lines) < 3 or not lines[1].startswith("kind "):
        raise DataError("checkpoint header is missing the kind line")
    kind = lines[1][len("kind ") :]
    if kind not in KINDS:
        raise DataError(f"unknown checkpoint kind {kind!r}")
    if not lines[2].startswith("config "):
        raise DataError("checkpoint header is missing the config line")
    try:
        config = json.loads(lines[2][len("config ") :])
    except json.JSONDecodeError as e:
        raise DataError(f"bad checkpoint config JSON: {e}") from None

    specs = []
    for line in lines[3:]:
        parts = line.split()
        if len(parts) < 4 or parts[0] != "tensor":
            raise DataError(f"bad checkpoint tensor line: {line!r}")
        name, dtype = parts[1], parts[2]
        if dtype != "float32":
            raise DataError(f"unsupported tensor dtype {dtype!r}")
        try:
            shape = tuple(int(d) for d in parts[3:])
        except ValueError:
            raise DataError(f"bad tensor shape in line: {line!r}") from None
        if any(d < 0 for d in shape):
            raise DataError(f"negative tensor dimension in line: {line!r}")
        specs.append((name, shape))

    tensors = {}
    offset = pos
    for name, shape in specs:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise DataError("checkpoint payload is truncated")
        tensors[name] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(raw):
        raise DataError("checkpoint payload has trailing bytes")
    return kind, config, tensors


def model_config_echo(model: ShardModel) -> dict:
    cfg = model.config
    return {
        "shard": model.shard,
        "embed_dim": cfg.embed_dim,
        "hidden": list(cfg.hidden),
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "patience": cfg.patience,
        "batch_size": cfg.batch_size,
        "num_negatives": cfg.num_negatives,
        "seed": cfg.seed,
        "dtype": cfg.dtype,
        "trained": model.trained,
        "n_classes": model.n_classes,
        "categorical_features": list(model.spec.emb_names),
        "emb_rows": list(model.spec.emb_rows),
        "n_continuous": model.spec.n_continuous,
    }


def save_model(path, model: ShardModel):
    save_checkpoint(path, "cell_classifier", model_config_echo(model), model.params)


def load_model(path, vocab) -> ShardModel:
    """Rebuild a classifier from a checkpoint plus its label vocabulary."""
    kind, config, tensors = load_checkpoint(path)
    if kind != "cell_classifier":
        raise DataError(f"expected a cell_classifier checkpoint, got {kind!r}")
    try:
        train_cfg = TrainConfig(
            embed_dim=config["embed_dim"],
            hidden=tuple(config["hidden"]),
            learning_rate=config["learning_rate"],
            epochs=config["epochs"],
            patience=config["patience"],
            batch_size=config["batch_size"],
            num_negatives=config["num_negatives"],
            seed=config["seed"],
            dtype=config["dtype"],
        )
        spec = TrunkSpec(
            emb_names=tuple(config["categorical_features"]),
            emb_rows=tuple(config["emb_rows"]),
            emb_dim=config["embed_dim"],
            n_continuous=config["n_continuous"],
            hidden=tuple(config["hidden"]),
        )
        shard = config["shard"]
        n_classes = config["n_classes"]
        trained = bool(config["trained"])
    except KeyError as e:
        raise DataError(f"checkpoint config is missing {e}") from None
    if vocab.shard != shard:
        raise DataError(
            f"checkpoint is for shard {shard!r}, vocabulary is {vocab.shard!r}"
        )
    if len(vocab) != n_classes:
        raise DataError(
            f"checkpoint has {n_classes} classes, vocabulary has {len(vocab)}"
        )
    expected = spec.param_names() + ["out_w", "out_b"]
    if list(tensors) != expected:
        raise DataError("checkpoint tensors do not match the model layout")
    dtype = DTYPES[train_cfg.dtype]
    params = {name: tensors[name].astype(dtype) for name in tensors}
    shapes_ok = (
        params["out_w"].shape == (spec.output_dim, n_classes)
        and params["out_b"].shape == (n_classes,)
        and params["w1"].shape == (spec.input_dim, spec.hidden[0])
    )
    if not shapes_ok:
        raise DataError("checkpoint tensor shapes do not match the model layout")
    shard_index = SHARDS.index(shard) if shard in SHARDS else 0
    rng = np.random.default_rng((train_cfg.seed, shard_index))
    return ShardModel(train_cfg, spec, vocab, params, rng, trained=trained)


def baseline_config_echo(model: BoundsModel) -> dict:
    cfg = model.config
    return {
        "embed_dim": cfg.embed_dim,
        "hidden": list(cfg.hidden),
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "patience": cfg.patience,
        "batch_size": cfg.batch_size,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "seed": cfg.seed,
        "dtype": cfg.dtype,
        "trained": model.trained,
        "categorical_features": list(model.spec.emb_names),
        "emb_rows": list(model.spec.emb_rows),
        "n_continuous": model.spec.n_continuous,
    }


def save_baseline(path, model: BoundsModel):
    save_checkpoint(path, "bounds_regressor", baseline_config_echo(model), model.params)


def load_baseline(path) -> BoundsModel:
    kind, config, tensors = load_checkpoint(path)
    if kind != "bounds_regressor":
        raise DataError(f"expected a bounds_regressor checkpoint, got {kind!r}")
    try:
        bounds_cfg = BoundsConfig(
            embed_dim=config["embed_dim"],
            hidden=tuple(config["hidden"]),
            learning_rate=config["learning_rate"],
            epochs=config["epochs"],
            patience=config["patience"],
            batch_size=config["batch_size"],
            alpha=config["alpha"],
            beta=config["beta"],
            seed=config["seed"],
            dtype=config["dtype"],
        )
        spec = TrunkSpec(
            emb_names=tuple(config["categorical_features"]),
            emb_rows=tuple(config["emb_rows"]),
            emb_dim=config["embed_dim"],
            n_continuous=config["n_continuous"],
            hidden=tuple(config["hidden"]),
        )
        trained = bool(config["trained"])
    except KeyError as e:
        raise DataError(f"checkpoint config is missing {e}") from None
    expected = spec.param_names() + ["out_w", "out_b"]
    if list(tensors) != expected:
        raise DataError("checkpoint tensors do not match the model layout")
    dtype = DTYPES[bounds_cfg.dtype]
    params = {name: tensors[name].astype(dtype) for name in tensors}
    if params["out_w"].shape != (spec.output_dim, 4) or params["out_b"].shape != (4,):
        raise DataError("checkpoint tensor shapes do not match the model layout")
    rng = np.random.default_rng((bounds_cfg.seed, 3))
    return BoundsModel(bounds_cfg, spec, params, rng, trained=trained)
