"""Run configuration: YAML schema, validation and SimConfig assembly.

Configs are schema-validated before any computation; unknown keys are
rejected and file paths resolve relative to the config file so experiment
definitions stay reviewable under version control.
"""

import hashlib
import json
import os

import jsonschema
import numpy as np
import yaml

from mvsde.coefficients import coefficients_from_config
from mvsde.errors import ConfigError
from mvsde.operators import operator_from_config
from mvsde.paths import TimeGrid
from mvsde.presets import preset_problem
from mvsde.solver import SimConfig

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}

_OPERATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "box", "halfspace", "ball", "subdiff1d", "product"]},
        "dimension": {"type": "integer", "minimum": 1},
        "lo": _VEC, "hi": _VEC,
        "a": _VEC, "c": _NUM,
        "center": _VEC, "radius": _NUM,
        "quad": _NUM, "linear": _NUM,
        "interval": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "factors": {"type": "array", "items": {"type": "object"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_FUNCTIONAL_SCHEMA = {
    "type": "object",
    "properties": {
        "s": {"enum": ["identity", "tanh"]},
        "c0": _NUM, "C1": _NUM, "C2": _NUM, "C3": _NUM,
    },
    "additionalProperties": False,
}

_COEFF_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["example5"]},
        "f": _FUNCTIONAL_SCHEMA,
        "g": _FUNCTIONAL_SCHEMA,
        "phi": {
            "type": "object",
            "properties": {"alpha": _NUM, "beta": _NUM},
            "additionalProperties": False,
        },
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_XI_SCHEMA = {
    "type": "object",
    "properties": {
        "constant": _VEC,
        "ramp": {
            "type": "object",
            "properties": {"start": _VEC, "stop": _VEC},
            "required": ["start", "stop"],
            "additionalProperties": False,
        },
        "nodes": {"type": "array", "items": _VEC},
    },
    "minProperties": 1,
    "maxProperties": 1,
    "additionalProperties": False,
}

_PROBLEM_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {"preset": {"type": "string"}},
            "required": ["preset"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "operator": _OPERATOR_SCHEMA,
                "coefficients": _COEFF_SCHEMA,
                "grid": {
                    "type": "object",
                    "properties": {"h": _NUM, "r0": _NUM, "T": _NUM},
                    "required": ["h", "r0", "T"],
                    "additionalProperties": False,
                },
                "initial_segment": _XI_SCHEMA,
                "m": {"type": "integer", "minimum": 1},
            },
            "required": ["operator", "coefficients", "grid", "initial_segment"],
            "additionalProperties": False,
        },
    ],
}

_TARGET_SCHEMA = {
    "type": "object",
    "properties": {
        "csv": {"type": "string"},
        "x0": {"type": "boolean"},
        "linear_slope": _NUM,
    },
    "minProperties": 1,
    "maxProperties": 1,
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "problem": _PROBLEM_SCHEMA,
        "execution": {
            "type": "object",
            "properties": {
                "particles": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "threads": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {"epsilon": {"type": "number", "minimum": 0}},
            "required": ["epsilon"],
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["lln", "mdp", "clt", "skeleton"]},
                "epsilon_grid": {"type": "array", "items": _NUM, "minItems": 2},
                "replicas": {"type": "integer", "minimum": 8},
                "batches": {"type": "integer", "minimum": 8},
                "p": {"type": "integer", "minimum": 1},
                "a_eps_gamma": {"type": "number", "exclusiveMinimum": 0,
                                "exclusiveMaximum": 0.5},
                "threshold": _NUM,
                "slope_tolerance": _NUM,
                "ratio_bound": _NUM,
                "amplitudes": {"type": "array", "items": _NUM, "minItems": 2},
                "frequency": _NUM,
                "base_control": _VEC,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "rate": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["ldp", "mdp"]},
                "target": _TARGET_SCHEMA,
                "budget": _NUM,
                "penalty_schedule": {"type": "array", "items": _NUM, "minItems": 1},
                "max_iterations": {"type": "integer", "minimum": 1},
                "method": {"enum": ["auto", "inversion", "penalty"]},
                "residual_tolerance": _NUM,
            },
            "required": ["target"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"directory": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["problem"],
    "additionalProperties": False,
}


def load_config(path: str) -> dict:
    """Parse and validate a YAML run config; resolve the problem preset."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: at {where}: {exc.message}") from exc
    cfg = dict(raw)
    if "preset" in cfg["problem"]:
        try:
            cfg["problem"] = preset_problem(cfg["problem"]["preset"])
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    cfg["_config_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(clean, sort_keys=True, default=float).encode()
    return hashlib.sha256(blob).hexdigest()


def _xi_nodes(spec: dict, grid: TimeGrid, d: int) -> np.ndarray:
    W = grid.n_history + 1
    if "constant" in spec:
        v = np.asarray(spec["constant"], dtype=float)
        return np.tile(v, (W, 1))
    if "ramp" in spec:
        a = np.asarray(spec["ramp"]["start"], dtype=float)
        b = np.asarray(spec["ramp"]["stop"], dtype=float)
        w = np.linspace(0.0, 1.0, W)[:, None]
        return a + w * (b - a)
    nodes = np.asarray(spec["nodes"], dtype=float)
    if nodes.shape != (W, d):
        raise ConfigError(f"initial segment nodes must be ({W}, {d}), got {nodes.shape}")
    return nodes


def build_sim_config(cfg: dict, eps: float = 0.0, seed: int = None,
                     a_eps_gamma: float = None) -> SimConfig:
    """SimConfig from a validated run config (problem + execution blocks)."""
    prob = cfg["problem"]
    execu = cfg.get("execution", {})
    try:
        operator = operator_from_config(prob["operator"])
        grid = TimeGrid(**prob["grid"])
        coeffs = coefficients_from_config(prob["coefficients"])
        xi = _xi_nodes(prob["initial_segment"], grid, operator.dimension)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad problem block: {exc}") from exc
    return SimConfig(
        grid=grid,
        operator=operator,
        coefficients=coeffs,
        initial_segment=xi,
        P=int(execu.get("particles", 1)),
        m=int(prob.get("m", 1)),
        eps=float(eps),
        seed=int(execu.get("seed", 0) if seed is None else seed),
        a_eps_gamma=a_eps_gamma,
    )
