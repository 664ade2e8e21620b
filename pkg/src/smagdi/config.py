"""INI-style configuration with one section per pipeline stage.

Example::

    [debate]
    max_rounds = 3
    base_temperature = 0.7

    [distill]
    epochs = 7
    learning_rate = 1e-3

Command-line flags override file values.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any

from .errors import ValidationError

DEFAULTS: dict[str, dict[str, Any]] = {
    "data": {"train_fraction": 0.8, "subset_size": None},
    "backend": {"kind": "mock", "url": None, "timeout": 60.0, "retries": 2, "script": None},
    "debate": {
        "max_rounds": 3,
        "base_temperature": 0.7,
        "temperature_increment": 0.1,
        "epsilon": 0.1,
        "calibration_size": 20,
        "max_tokens": 512,
    },
    "graph": {"embedder": "hashing", "embed_dim": 64, "pe_dim": 8},
    "gcn": {"hidden_dim": 256, "num_layers": 2},
    "distill": {
        "learning_rate": 1e-3,
        "epochs": 7,
        "early_stopping_patience": 3,
        "batch_size": 8,
        "val_fraction": 0.1,
        "coefficients": "1.0,1.0,0.1,0.5",
        "d_model": 64,
        "n_layers": 2,
        "n_heads": 4,
        "d_ff": 128,
        "max_len": 256,
        "proj_dim": 128,
    },
    "scot": {"max_depth": 2, "temperature": 0.0, "max_tokens": 128},
}


# keys whose default is None but whose values are not strings
_NULLABLE_TYPES = {"subset_size": 0}


def _coerce(raw: str, default: Any, where: str) -> Any:
    if raw.strip().lower() in ("", "none", "null"):
        return None
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"{where}: cannot parse {raw!r}") from exc
    return raw


def load_config(path: str | Path | None = None) -> dict[str, dict[str, Any]]:
    config = {section: dict(values) for section, values in DEFAULTS.items()}
    if path is None:
        return config
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise ValidationError(f"config file {path} not found")
    for section in parser.sections():
        if section not in config:
            raise ValidationError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in config[section]:
                raise ValidationError(f"{path}: unknown key {key!r} in [{section}]")
            default = DEFAULTS[section][key]
            if default is None:
                default = _NULLABLE_TYPES.get(key)
            config[section][key] = _coerce(raw, default, f"{path} [{section}] {key}")
    return config
