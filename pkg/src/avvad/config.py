"""Run configuration: one YAML/JSON document, command-line flags override it."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import yaml

DEFAULTS = {
    "corpus": {"n_train": 120, "n_val": 20, "n_test": 60, "duration": 8.0, "seed": 0},
    "train": {"lr": 1e-3, "batch_size": 8, "epochs": 15, "dropout": 0.3, "seed": 0, "operator": "hp",
              "loss_weights": [1.0] * 10, "chunk_frames": 96, "threads": 1},
    "decode": {"threshold": 0.5, "median_len": 5, "min_dur": 0.12},
    "score": {"collar": 0.2, "segment_len": 1.0},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, upd: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if k not in out:
            raise ConfigError(f"unknown config key {path}{k}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path}{k} must be a mapping")
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def load_config(path=None) -> dict:
    """Defaults, overlaid with a config file; a run manifest's snapshot also works."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    data = data or {}
    if "config" in data and "command" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key-value document")
    return _merge(cfg, data)


def override(cfg: dict, section: str, **values) -> dict:
    for k, v in values.items():
        if v is not None:
            cfg[section][k] = v
    return cfg
