"""Run configuration: one JSON document plus dotted-path overrides.

A run is described by a single JSON file with four sections (data, train,
bounds, eval) and two top-level scalars (workdir, full_scale). Every key
has a default, so the file may be partial or absent. Command-line
overrides use dotted paths into the same structure, for example
``--set data.seed=3`` or ``--set train.hidden=[64,32]``; values are
parsed as JSON when possible and fall back to plain strings.

Setting full_scale replaces the network widths and negative-sample count
with the full-scale variants after the section defaults are applied, so
a config file tuned for desk runs switches scale with one flag.
"""

import copy
import json
import os
from dataclasses import dataclass

from .baseline import BoundsConfig, full_scale_bounds_config
from .datagen import GenConfig
from .errors import ConfigError, DataError
from .model import TrainConfig, full_scale_config

DATA_DIR = "data"
PIPELINE_FILE = "pipeline.json"
BASELINE_FILE = "baseline.ckpt"
INDEX_FILE = "postings.idx"
SWEEP_CSV_FILE = "sweep.csv"
REPORT_FILE = "report.txt"
LISTINGS_REF = "data/listings.tsv"


def vocab_file(shard: str) -> str:
    return f"vocab_{shard}.txt"


def model_file(shard: str) -> str:
    return f"model_{shard}.ckpt"


def sweep_svg_file(shard: str) -> str:
    return f"sweep_{shard}.svg"


_TUPLE_KEYS = {("data", "continent_mix"), ("train", "hidden"), ("bounds", "hidden")}


def default_document() -> dict:
    """Nested dict of every config key with its default value."""

    def section(cfg) -> dict:
        doc = {}
        for name, value in cfg.__dict__.items():
            doc[name] = list(value) if isinstance(value, tuple) else value
        return doc

    return {
        "workdir": "run",
        "full_scale": False,
        "data": section(GenConfig()),
        "train": section(TrainConfig()),
        "bounds": section(BoundsConfig()),
        "eval": {"chunk_size": 512},
    }


def _merge(doc: dict, incoming: dict, path: str = "") -> None:
    for key, value in incoming.items():
        where = f"{path}.{key}" if path else key
        if key not in doc:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(doc[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            _merge(doc[key], value, where)
        else:
            doc[key] = value


def parse_override(text: str):
    """Split one KEY=VALUE override into (path tuple, parsed value)."""

    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    parts = tuple(p for p in key.strip().split(".") if p)
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def apply_override(doc: dict, parts, value) -> None:
    node = doc
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config section {'.'.join(parts)!r}")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"unknown config key {'.'.join(parts)!r}")
    if isinstance(node[leaf], dict):
        raise ConfigError(f"config key {'.'.join(parts)!r} is a section, not a value")
    node[leaf] = value


@dataclass(frozen=True)
class RunConfig:
    workdir: str
    full_scale: bool
    data: GenConfig
    train: TrainConfig
    bounds: BoundsConfig
    chunk_size: int

    @property
    def data_dir(self) -> str:
        return os.path.join(self.workdir, DATA_DIR)

    def path(self, name: str) -> str:
        return os.path.join(self.workdir, name)

    def require(self, name: str) -> str:
        full = self.path(name)
        if not os.path.exists(full):
            raise DataError(f"missing artifact {full}; run the earlier pipeline stages first")
        return full

    def require_data(self) -> str:
        manifest = os.path.join(self.data_dir, "manifest.json")
        if not os.path.exists(manifest):
            raise DataError(f"missing dataset under {self.data_dir}; run gen first")
        return self.data_dir


def _build(doc: dict) -> RunConfig:
    for section, key in _TUPLE_KEYS:
        value = doc[section][key]
        if isinstance(value, list):
            doc[section][key] = tuple(value)
    chunk_size = doc["eval"]["chunk_size"]
    if not isinstance(chunk_size, int) or chunk_size < 1:
        raise ConfigError(f"eval.chunk_size must be a positive integer, got {chunk_size!r}")
    if not isinstance(doc["full_scale"], bool):
        raise ConfigError("full_scale must be true or false")
    if not isinstance(doc["workdir"], str) or not doc["workdir"]:
        raise ConfigError("workdir must be a non-empty string")
    try:
        data = GenConfig(**doc["data"])
        train = TrainConfig(**doc["train"])
        bounds = BoundsConfig(**doc["bounds"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if doc["full_scale"]:
        train = full_scale_config(train)
        bounds = full_scale_bounds_config(bounds)
    return RunConfig(
        workdir=doc["workdir"],
        full_scale=doc["full_scale"],
        data=data,
        train=train,
        bounds=bounds,
        chunk_size=chunk_size,
    )


def load_run_config(path=None, overrides=()) -> RunConfig:
    """Build the run config from defaults, an optional file, and overrides."""

    doc = copy.deepcopy(default_document())
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                incoming = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(incoming, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(doc, incoming)
    for text in overrides:
        parts, value = parse_override(text)
        apply_override(doc, parts, value)
    return _build(doc)
