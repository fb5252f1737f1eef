"""JSON scenarios: schema, validation, bundled files and object builders."""

import copy
import hashlib
import json
import re
from importlib import resources

import jsonschema
import numpy as np

from ..cross_section import CrossSectionDomain
from ..discretization import LayerGrid
from ..exceptions import SchemaError
from ..geometry import (ImmersedBase, bump_profile, c2_bump, constant_profile,
                        periodic_profile)
from ..weyl import ScanThresholds

EXPERIMENTS = ("threshold", "scan", "counterexample_bend", "counterexample_twist",
               "matrix_harness")

_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}

PROFILE_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["constant", "bump", "periodic"]},
        "value": {"type": "number"},
        "amplitude": {"type": "number"},
        "radius": _pos,
        "center": {"type": "number"},
        "period": _pos,
        "phase": {"type": "number"},
    },
    "allOf": [
        {"if": {"properties": {"type": {"const": "constant"}}},
         "then": {"required": ["value"]}},
        {"if": {"properties": {"type": {"const": "bump"}}},
         "then": {"required": ["amplitude", "radius"]}},
        {"if": {"properties": {"type": {"const": "periodic"}}},
         "then": {"required": ["amplitude", "period"]}},
    ],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "experiment"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "experiment": {"enum": list(EXPERIMENTS)},
        "base": {
            "type": "object",
            "required": ["kind", "length", "cells"],
            "properties": {
                "kind": {"enum": ["curve", "graph"]},
                "length": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
                "cells": {"oneOf": [_posint, {"type": "array", "items": _posint, "minItems": 1}]},
                "curvature": {"type": "array", "items": PROFILE_SCHEMA, "minItems": 1, "maxItems": 2},
                "torsion": PROFILE_SCHEMA,
                "graph": {
                    "type": "object",
                    "required": ["type", "amplitude", "radius"],
                    "properties": {"type": {"enum": ["cap", "paraboloid"]},
                                   "amplitude": {"type": "number"}, "radius": _pos},
                    "additionalProperties": False,
                },
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "curve"}}},
                 "then": {"required": ["curvature"]}},
                {"if": {"properties": {"kind": {"const": "graph"}}},
                 "then": {"required": ["graph"]}},
            ],
            "additionalProperties": False,
        },
        "cross_section": {
            "type": "object",
            "required": ["shape"],
            "properties": {
                "shape": {"enum": ["interval", "rectangle", "disk"]},
                "length": _pos, "width": _pos, "height": _pos, "radius": _pos,
                "h": _pos,
                "cells": {"oneOf": [_posint, {"type": "array", "items": _posint}]},
            },
            "allOf": [
                {"if": {"properties": {"shape": {"const": "interval"}}},
                 "then": {"required": ["length"]}},
                {"if": {"properties": {"shape": {"const": "rectangle"}}},
                 "then": {"required": ["width", "height"]}},
                {"if": {"properties": {"shape": {"const": "disk"}}},
                 "then": {"required": ["radius", "h"]}},
            ],
            "additionalProperties": False,
        },
        "eigenvalues": _posint,
        "modes": _posint,
        "truncations": {"type": "array", "items": _pos, "minItems": 1},
        "scan": {
            "type": "object",
            "properties": {
                "lambdas": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "relative_to_E1": {"type": "boolean"},
                "region": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "dispersion": {"enum": ["continuum", "discrete"]},
            },
            "required": ["lambdas"],
            "additionalProperties": False,
        },
        "thresholds": {
            "type": "object",
            "properties": {"slope_max": {"type": "number"}, "c_disc": _pos, "floor_slack": _pos,
                           "r0": _pos, "n_members": _posint, "gap_ratio": _pos},
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {"eig_tol": _pos, "cg_tol": _pos},
            "additionalProperties": False,
        },
        "counting": {
            "type": "object",
            "properties": {"thresholds": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                           "relative_to_E1": {"type": "boolean"}},
            "required": ["thresholds"],
            "additionalProperties": False,
        },
        "harness": {
            "type": "object",
            "properties": {"matrices": _posint, "max_size": _posint, "samples": _posint,
                           "seed": {"type": "integer", "minimum": 0}},
            "additionalProperties": False,
        },
        "output": {"type": "string"},
    },
    "allOf": [
        {"if": {"properties": {"experiment": {"const": "matrix_harness"}}},
         "then": {"required": ["harness"]},
         "else": {"required": ["base", "cross_section"]}},
        {"if": {"properties": {"experiment": {"const": "scan"}}},
         "then": {"required": ["scan"]}},
        {"if": {"properties": {"experiment": {"enum": ["counterexample_bend", "counterexample_twist"]}}},
         "then": {"required": ["truncations"]}},
    ],
    "additionalProperties": False,
}

_validator = jsonschema.Draft202012Validator(SCHEMA)


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else ""


def validate(data):
    """Raise SchemaError (with a JSON pointer) unless ``data`` is a valid scenario."""
    errors = sorted(_validator.iter_errors(data), key=lambda e: (len(e.path), list(map(str, e.path))))
    if not errors:
        return data
    err = jsonschema.exceptions.best_match(errors)
    pointer = _pointer(err.absolute_path)
    if err.validator == "required":
        m = re.match(r"'([^']+)' is a required property", err.message)
        if m:
            pointer = f"{pointer}/{m.group(1)}"
    raise SchemaError(err.message, pointer)


def load_scenario(source):
    """Parse and validate a scenario from a path, a JSON string or a dict."""
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            raw = text
        else:
            with open(text) as fh:
                raw = fh.read()
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "") from exc
    return validate(data)


def scenario_hash(data):
    """SHA-256 of the canonical JSON form of a scenario."""
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def bundled_names():
    files = resources.files(__name__)
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def bundled_path(name):
    """Filesystem path of a bundled scenario (``name`` with or without ``.json``)."""
    name = name[:-5] if name.endswith(".json") else name
    path = resources.files(__name__) / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario {name!r}; available: {bundled_names()}")
    return str(path)


def resolve(source):
    """Load a scenario from a path, a bundled name or a dict."""
    if isinstance(source, str) and not source.lstrip().startswith("{"):
        import os
        if not os.path.exists(source):
            try:
                source = bundled_path(os.path.basename(source))
            except FileNotFoundError:
                pass
    return load_scenario(source)


# -- builders ------------------------------------------------------------------

def make_profile(spec):
    t = spec["type"]
    if t == "constant":
        return constant_profile(spec["value"])
    if t == "bump":
        return bump_profile(spec["amplitude"], spec["radius"], spec.get("center", 0.0))
    return periodic_profile(spec["amplitude"], spec["period"], spec.get("phase", 0.0))


def _as_list(v, n):
    return [v] * n if np.ndim(v) == 0 else list(v)


def make_domain(spec):
    shape = spec["shape"]
    if shape == "interval":
        cells = spec.get("cells")
        return CrossSectionDomain.interval(spec["length"], spec.get("h"), cells)
    if shape == "rectangle":
        return CrossSectionDomain.rectangle(spec["width"], spec["height"], spec.get("h"), spec.get("cells"))
    return CrossSectionDomain.disk(spec["radius"], spec["h"])


def graph_values(spec, axes):
    """Samples of the graph function on the base grid.

    ``cap``: ``a (1 - r^2/c^2)^3`` for ``r < c`` (a C^2 cap, flat outside);
    ``paraboloid``: ``a r^2 / 2``.
    """
    mesh = np.meshgrid(*axes, indexing="ij")
    r2 = sum(X ** 2 for X in mesh)
    a, c = spec["amplitude"], spec["radius"]
    if spec["type"] == "cap":
        return a * c2_bump(np.sqrt(r2) / c)
    return 0.5 * a * r2


def base_axes(base_spec, length=None):
    kind = base_spec["kind"]
    n = 1 if kind == "curve" else 2
    lengths = _as_list(base_spec["length"] if length is None else length, n)
    cells = _as_list(base_spec["cells"], n)
    if length is not None and kind == "curve":
        # keep the base spacing when the truncation length changes
        h = base_spec["length"] / base_spec["cells"] if np.ndim(base_spec["length"]) == 0 else None
        cells = [int(round(length / h))] if h else cells
    return [np.linspace(-0.5 * L, 0.5 * L, int(c) + 1) for L, c in zip(lengths, cells)]


def make_base(base_spec, axes=None):
    if base_spec["kind"] == "curve":
        curv = [make_profile(p) for p in base_spec["curvature"]]
        tors = make_profile(base_spec["torsion"]) if "torsion" in base_spec else None
        return ImmersedBase.curve(curv, tors)
    axes = axes or base_axes(base_spec)
    vals = graph_values(base_spec["graph"], axes)
    h = tuple(float(a[1] - a[0]) for a in axes)
    return ImmersedBase.graph(vals[None], h, origin=tuple(float(a[0]) for a in axes))


def make_grid(scenario, length=None):
    """Layer grid of a scenario; ``length`` overrides the truncation at fixed spacing."""
    axes = base_axes(scenario["base"], length)
    return LayerGrid.box(axes, make_domain(scenario["cross_section"]))


def make_thresholds(scenario):
    return ScanThresholds(**scenario.get("thresholds", {}))
