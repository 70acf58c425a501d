"""Run configuration: a JSON document validated against a strict schema."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema

__all__ = ["ConfigError", "SCHEMA", "load_config", "validate_config"]


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}


def _obj(properties: dict, required: tuple[str, ...] = ()) -> dict:
    return {"type": "object", "properties": properties, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "seed": _NONNEG_INT,
    "threads": _POS_INT,
    "simulation": _obj({
        "model": {"enum": ["bs", "volstab", "sigmarket"]},
        "d": _POS_INT,
        "steps": _POS_INT,
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "s0": {"type": "array", "items": _NUM},
        "drift": {"type": "array", "items": _NUM},
        "sigma": _MATRIX,
        "alpha": {"type": "number", "minimum": 0},
        "sig_level": _NONNEG_INT,
        "sig_coeffs": _MATRIX,
        "strong_solution": {"type": "boolean"},
        "max_attempts": _POS_INT,
        "n_paths": _POS_INT,
        "start": _NONNEG_INT,
        "batch_size": _POS_INT,
    }, ("model", "d", "steps")),
    "data": _obj({
        "prices": {"type": "string"},
        "paths_dir": {"type": "string"},
        "windows": _obj({
            "T_ins": _POS_INT,
            "T_cv": _POS_INT,
            "T_test": _POS_INT,
            "t0": _NONNEG_INT,
            "offset": _NONNEG_INT,
        }, ("T_ins", "T_cv", "T_test")),
    }),
    "portfolio": _obj({
        "kind": {"enum": ["I", "II"]},
        "universe": {"type": "array", "items": _NONNEG_INT, "minItems": 1},
        "tau": {"oneOf": [{"enum": ["universe", "equal"]}, {"type": "array", "items": _NUM}]},
        "tau_bound": {"type": "number", "exclusiveMinimum": 0},
    }),
    "features": _obj({
        "family": {"enum": ["signature", "jl", "randomized"]},
        "level": _NONNEG_INT,
        "projection_dim": {"type": ["integer", "null"], "minimum": 1},
        "seed": _NONNEG_INT,
        "activation": {"enum": ["tanh", "sigmoid", "identity"]},
        "bias_scale": {"type": "number", "minimum": 0},
        "underlying": {"enum": ["universe_weights", "ranked_weights", "prices", "log_prices"]},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
    }),
    "training": _obj({
        "objective": {"enum": ["logopt", "mv"]},
        "gamma": {"type": "number", "minimum": 0},
        "gamma_mode": {"enum": ["absolute", "relative"]},
        "gamma_grid": _obj({
            "low": {"type": "number", "minimum": 0},
            "high": {"type": "number", "minimum": 0},
            "points": _POS_INT,
            "spacing": {"enum": ["linear", "log"]},
        }, ("low", "high")),
        "bounds": {"type": ["number", "null"], "minimum": 0},
        "lambdas": {"type": "array", "items": _NUM, "minItems": 1},
        "delta": _POS_INT,
        "mode": {"enum": ["wealth", "relative"]},
        "tc": {"type": "number", "minimum": 0},
        "beta": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "tune"}, {"type": "null"}]},
        "beta0": {"type": "number", "minimum": 0},
        "n_paths": _POS_INT,
        "start": _NONNEG_INT,
        "t0": _NONNEG_INT,
        "sim_batch": _POS_INT,
        "feature_batch": _POS_INT,
    }),
    "backtest": _obj({
        "model": {"type": "string"},
        "tc_levels": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "n_paths": _POS_INT,
        "start": _NONNEG_INT,
        "growth_optimal": {"type": "boolean"},
        "curves": {"type": "boolean"},
    }),
    "provenance": {"type": "object"},
})


def validate_config(config: dict) -> dict:
    """Check ``config`` against :data:`SCHEMA`; unknown keys are rejected."""
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}") from None
    return config


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None
    return validate_config(config)
