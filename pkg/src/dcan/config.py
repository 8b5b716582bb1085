"""Run configuration: defaults, JSON config files and ``section.key=value`` overrides."""

from __future__ import annotations

import copy
import dataclasses
import json
from pathlib import Path

from .data import SynthSpec
from .model import ModelConfig
from .training import TrainConfig

# vocab_size and num_labels come from the data, not from the config file.
_DERIVED_MODEL_KEYS = {"vocab_size", "num_labels"}

PATH_DEFAULTS = {
    "data_dir": "data",      # directory holding train/dev/test.jsonl
    "prep_dir": "prep",      # output of `preprocess`: vocab, labels, encoded splits
    "checkpoint": "run/checkpoint.bin",
    "resume": None,          # a previous `train` output directory to continue from
    "input": None,           # documents for `predict` (defaults to <data_dir>/test.jsonl)
}

EVAL_DEFAULTS = {
    "split": "test",         # which <data_dir>/<split>.jsonl `evaluate` scores
    "threshold": 0.5,
    "k": 5,
    "batch_size": 32,
    "baseline": None,        # "oracle" or "constant": score without a checkpoint
    "top_k": 5,              # codes listed per document by `predict`
}

PREPROCESS_DEFAULTS = {
    "min_frequency": 1,
    "max_len": 2500,
}


def _dataclass_defaults(cls, skip=()) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:  # pragma: no cover - none today
            out[f.name] = f.default_factory()
    return out


def defaults() -> dict:
    # model.channels = null means 32 channels at every level
    model = _dataclass_defaults(ModelConfig, skip=_DERIVED_MODEL_KEYS)
    # The library keeps float64 (gradient checks need it); command-line runs
    # train in float32 for speed.
    model["dtype"] = "float32"
    return {
        "model": model,
        "train": _dataclass_defaults(TrainConfig),
        "synth": _dataclass_defaults(SynthSpec),
        "preprocess": dict(PREPROCESS_DEFAULTS),
        "eval": dict(EVAL_DEFAULTS),
        "paths": dict(PATH_DEFAULTS),
    }


def _merge(base: dict, update: dict, where: str = "") -> None:
    for key, value in update.items():
        if key not in base:
            raise KeyError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise TypeError(f"config key {where + key!r} must be a section")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def load_config(path=None, overrides=(), seed=None) -> dict:
    """Defaults, then the JSON file at ``path``, then each override in order."""
    cfg = defaults()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise TypeError("config file must hold a JSON object")
        _merge(cfg, user)
    for text in overrides:
        keys, value = parse_override(text)
        update = value
        for key in reversed(keys):
            update = {key: update}
        _merge(cfg, update)
    if seed is not None:
        cfg["train"]["seed"] = seed
        cfg["synth"]["seed"] = seed
    return cfg


def model_config(cfg: dict, vocab_size: int, num_labels: int) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, num_labels=num_labels, **copy.deepcopy(cfg["model"]))


def train_config(cfg: dict) -> TrainConfig:
    tc = TrainConfig(**cfg["train"])
    tc.validate()
    return tc


def synth_spec(cfg: dict) -> SynthSpec:
    d = dict(cfg["synth"])
    for key in ("filler_words", "trigger_words"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    return SynthSpec(**d)


def write_config(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "config.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
