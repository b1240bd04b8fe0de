"""JSON run configuration for the command-line tool.

A config is one JSON object with up to six sections::

    {
      "privacy":     {"alpha": 8, "sigma": 1.0, "lam": 0.25, "C": 1.0, "b": 1, "k": 4, "T": 12,
                      "deltas": [1e-5], "pabi_Q": 1.0, "t_star": 1, "epsilon": 1.0, "epochs": 3},
      "curvature":   {"m": 0.0, "M": 2.0, "d_h": "inf"},
      "regularizer": {"kind": "ball", "radius": 2.0},
      "dataset":     {"dim": 2, "seed": 0, "i_star": 1, "x0": 0.0},
      "oracle":      {"suites": ["prox"], "n_pairs": 10000, ...},
      "sweep":       {"axes": {"privacy.sigma": [0.5, 1.0, 2.0]}}
    }

Unknown sections or keys are rejected. Real-valued fields accept the string
``"inf"``.
"""

import copy
import dataclasses
import json
import math

from cyclic_rdp.accountant import CurvatureSpec, PrivacyParams
from cyclic_rdp.oracle.suites import SUITES
from cyclic_rdp.sim import RegularizerSpec


class ConfigError(ValueError):
    """An invalid configuration; the CLI maps it to exit code 2."""


REAL, INT, STR, BOOL, REALS, STRS = "real", "int", "str", "bool", "reals", "strs"

SCHEMA = {
    "privacy": {
        "alpha": REAL,
        "sigma": REAL,
        "lam": REAL,
        "C": REAL,
        "b": INT,
        "k": INT,
        "T": INT,
        "deltas": REALS,
        "pabi_Q": REAL,
        "t_star": INT,
        "epsilon": REAL,
        "epochs": INT,
    },
    "curvature": {"m": REAL, "M": REAL, "d_h": REAL},
    "regularizer": {"kind": STR, "weight": REAL, "radius": REAL},
    "dataset": {"dim": INT, "seed": INT, "i_star": INT, "x0": REALS},
    "oracle": {
        "suites": STRS,
        "n_pairs": INT,
        "n_datasets": INT,
        "lipschitz_scale": REAL,
        "lipschitz_C": REAL,
        "density_configs": INT,
        "grid_cells": INT,
        "enabled": BOOL,
    },
    "sweep": {"axes": "axes"},
}

# Axes a sweep may vary.
SWEEPABLE = tuple(
    f"{section}.{key}"
    for section in ("privacy", "curvature", "regularizer")
    for key, kind in SCHEMA[section].items()
    if kind in (REAL, INT)
)


def _real(where, value):
    if isinstance(value, str) and value in ("inf", "+inf"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if math.isnan(value):
        raise ConfigError(f"{where} must not be NaN")
    return float(value)


def _int(where, value):
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _coerce(where, kind, value):
    if kind == REAL:
        return _real(where, value)
    if kind == INT:
        return _int(where, value)
    if kind == STR:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if kind == BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if kind == REALS:
        if isinstance(value, list):
            return [_real(f"{where}[{i}]", v) for i, v in enumerate(value)]
        return _real(where, value)
    if kind == STRS:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{where} must be a list of strings")
        return list(value)
    return _axes(where, value)


def _axes(where, value):
    if not isinstance(value, dict) or not value:
        raise ConfigError(f"{where} must map parameter names to value lists")
    out = {}
    for name in sorted(value):
        if name not in SWEEPABLE:
            raise ConfigError(f"{where}: cannot sweep {name!r}; choose from {', '.join(SWEEPABLE)}")
        values = value[name]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{where}.{name} must be a nonempty list")
        section, key = name.split(".")
        out[name] = [_coerce(f"{where}.{name}", SCHEMA[section][key], v) for v in values]
    return out


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Parsed config: one plain dict per section, types already checked."""

    privacy: dict = dataclasses.field(default_factory=dict)
    curvature: dict = dataclasses.field(default_factory=dict)
    regularizer: dict = dataclasses.field(default_factory=dict)
    dataset: dict = dataclasses.field(default_factory=dict)
    oracle: dict = dataclasses.field(default_factory=dict)
    sweep: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        sections = {}
        for section, body in raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section {section!r}")
            if not isinstance(body, dict):
                raise ConfigError(f"section {section!r} must be an object")
            parsed = {}
            for key, value in body.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                parsed[key] = _coerce(f"{section}.{key}", SCHEMA[section][key], value)
            sections[section] = parsed
        cfg = cls(**sections)
        cfg.validate()
        return cfg

    def with_values(self, assignments):
        """Copy with ``{"section.key": value}`` overrides (sweep points)."""
        sections = {f.name: copy.deepcopy(getattr(self, f.name)) for f in dataclasses.fields(self)}
        for name, value in assignments.items():
            section, key = name.split(".")
            sections[section][key] = value
        return RunConfig(**sections)

    def validate(self):
        """Re-runs the cross-field checks of every section that is present."""
        if self.privacy and all(k in self.privacy for k in ("alpha", "sigma", "lam", "C", "b", "k", "T")):
            privacy_params(self)
        if self.curvature:
            curvature_spec(self)
        if self.regularizer:
            regularizer_spec(self)
        for delta in deltas(self):
            if not 0 < delta < 1:
                raise ConfigError(f"privacy.deltas entries must lie in (0, 1), got {delta!r}")
        for suite in self.oracle.get("suites", []):
            if suite not in SUITES:
                raise ConfigError(f"oracle.suites: unknown suite {suite!r}; choose from {', '.join(SUITES)}")


def require(cfg, section, keys):
    body = getattr(cfg, section)
    missing = [k for k in keys if k not in body]
    if missing:
        raise ConfigError(f"missing {', '.join(f'{section}.{k}' for k in missing)}")
    return body


def _build(what, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{what}: {err}") from err


def privacy_params(cfg: RunConfig) -> PrivacyParams:
    body = require(cfg, "privacy", ("alpha", "sigma", "lam", "C", "b", "k", "T"))
    return _build(
        "privacy",
        PrivacyParams,
        alpha=body["alpha"],
        sigma=body["sigma"],
        lam=body["lam"],
        C=body["C"],
        b=body["b"],
        k=body["k"],
        T=body["T"],
    )


def regularizer_spec(cfg: RunConfig) -> RegularizerSpec:
    body = dict(cfg.regularizer) or {"kind": "zero"}
    return _build("regularizer", RegularizerSpec, **body)


def curvature_spec(cfg: RunConfig) -> CurvatureSpec:
    """Curvature section; ``d_h`` defaults to the ball diameter when a ball is configured."""
    body = require(cfg, "curvature", ("m", "M"))
    d_h = body.get("d_h")
    if d_h is None:
        d_h = regularizer_spec(cfg).diameter if cfg.regularizer else math.inf
    return _build("curvature", CurvatureSpec, body["m"], body["M"], d_h)


def deltas(cfg: RunConfig) -> list:
    value = cfg.privacy.get("deltas", [])
    return value if isinstance(value, list) else [value]


def load_config(path) -> RunConfig:
    """Reads and validates a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return RunConfig.from_dict(raw)
