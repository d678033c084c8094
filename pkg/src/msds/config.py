"""Experiment configuration.

A config is a TOML file with a fixed set of sections.  It is validated against
``SCHEMA`` (unknown keys are rejected), then environment overrides of the form
``MSDS_<SECTION>__<KEY>=value`` (or ``MSDS_<KEY>`` for top-level keys) and
command-line flags are applied on top.  The resolved config is written into
every output file.
"""

import copy
import json
import os

import jsonschema
import tomli

from .errors import ConfigError
from .mesh import default_layers

_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "msds experiment config",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "workers": _POS_INT,
        "out": {"type": "string"},
        "coefficient": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {
                    "enum": [
                        "example1",
                        "example2",
                        "example3",
                        "single_example1",
                        "single_example2",
                        "localized",
                        "constant",
                    ]
                },
                "seed": {"type": "integer", "minimum": 0},
                "value": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"fine": {"type": "integer", "minimum": 2}, "coarse": {"type": "integer", "minimum": 2}},
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"type": "integer", "minimum": 0},
                "n_xi": {"oneOf": [_POS_INT, {"const": "auto"}]},
                "n_xi_tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "layers": {"oneOf": [{"type": "integer", "minimum": 0}, {"enum": ["auto", "saturated"]}]},
                "truncation": {"enum": ["none", "example3"]},
                "kkt": {"enum": ["auto", "direct", "iterative", "spectral"]},
            },
        },
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["sfem", "collocation", "mc"]},
                "points": _POS_INT,
                "samples": _POS_INT,
            },
        },
        "forcing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["sine", "zero"]},
                "k": {"type": "number"},
                "l": {"type": "number"},
                "phase1": {"type": "number"},
                "phase2": {"type": "number"},
                "count": {"type": "integer", "minimum": 0},
            },
        },
        "study": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "coarse_list": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "order_list": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "dictionary": {"type": "integer", "minimum": 1},
                "probes": _POS_INT,
                "alpha": {"type": "number", "exclusiveMinimum": 1},
                "coverage_trials": {"type": "integer", "minimum": 0},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "out": "msds-out",
    "coefficient": {"name": "example1", "seed": 0, "value": 1.0},
    "mesh": {"fine": 64, "coarse": 8},
    "basis": {"order": 4, "n_xi": 4, "n_xi_tol": 1e-3, "layers": "auto", "truncation": "none", "kkt": "auto"},
    "reference": {"method": "sfem", "points": 10, "samples": 10000},
    "forcing": {"kind": "sine", "k": 2.3, "l": 1.5, "phase1": 0.2, "phase2": -0.3, "count": 20},
    "study": {
        "coarse_list": [4, 8, 16, 32],
        "order_list": [1, 2, 3, 4, 5, 6, 7],
        "dictionary": 20,
        "probes": 5,
        "alpha": 2.0,
        "coverage_trials": 0,
    },
}

# environment variables with this prefix that are not config keys
RESERVED_ENV = {"MSDS_NUMBA"}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _validate(data):
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def _parse_value(text):
    """TOML scalar or array syntax; bare words become strings."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith("MSDS_") or name in RESERVED_ENV:
            continue
        path = name[5:].lower().split("__")
        if len(path) > 2 or not all(path):
            raise ConfigError(f"malformed override {name}")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = _parse_value(raw)
    return out


def _check_consistency(cfg):
    fine = cfg["mesh"]["fine"]
    for n in [cfg["mesh"]["coarse"], *cfg["study"]["coarse_list"]]:
        if fine % n != 0:
            raise ConfigError(f"fine n={fine} is not divisible by coarse n={n}")


def resolve(data=None, environ=None, overrides=None):
    """Defaults <- file data <- environment <- explicit overrides, validated."""
    data = {} if data is None else data
    _validate(data)
    cfg = _merge(DEFAULTS, data)
    env = env_overrides(environ)
    if env:
        _validate(env)
        cfg = _merge(cfg, env)
    if overrides:
        cfg = _merge(cfg, overrides)
    _validate(cfg)
    _check_consistency(cfg)
    return cfg


def load(path=None, environ=None, overrides=None):
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
    return resolve(data, environ, overrides)


def layers_for(cfg, coarse_n=None):
    coarse_n = cfg["mesh"]["coarse"] if coarse_n is None else coarse_n
    layers = cfg["basis"]["layers"]
    if layers == "auto":
        return default_layers(coarse_n)
    if layers == "saturated":
        return coarse_n
    return int(layers)


def dumps(cfg):
    """Canonical JSON form used for provenance headers."""
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))
