"""Experiment configuration: JSON documents validated against a closed schema
(unknown keys are rejected) and turned into models and tensor fields."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from . import metrics, sphere_tensors

COMMANDS = ("scatter", "conjugates", "linearize", "volume", "funk", "rigidity2d")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_POSINT = {"type": "integer", "minimum": 1}

FIELD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "builtin": {"enum": ["round_metric", "x1_squared_weighted", "rotation_killing"]},
        "axes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "terms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["monomials", "covectors"],
                "properties": {
                    "monomials": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["exponents", "coefficient"],
                            "properties": {
                                "exponents": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                                "coefficient": _NUM,
                            },
                        },
                    },
                    "covectors": {"type": "array", "items": _VEC},
                },
            },
        },
        "scale": _NUM,
    },
    "oneOf": [{"required": ["builtin"]}, {"required": ["terms"]}],
}

METRIC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(metrics.KINDS)},
        "dim": {"type": "integer", "minimum": 2, "maximum": 6},
        "m": {"type": "integer", "minimum": 1},
        "amplitude": _NUM,
        "h_m": FIELD_SCHEMA,
        "cutoff": _POS,
        "slope": _POS,
        "tip_radius": _POS,
        "C": {"type": "array", "items": _VEC},
        "L": {"type": "array", "items": {"type": "array", "items": _VEC}},
    },
}

COMMAND_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": list(COMMANDS)},
        # scatter
        "directions": _POSINT,
        "eta_norms": _VEC,
        # conjugates
        "impacts": _VEC,
        "start": _POS,
        "window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        # linearize / funk
        "y0": _VEC,
        "eta0": _VEC,
        "circles": _POSINT,
        "weights": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "range": {"enum": ["half", "full"]},
        "field": FIELD_SCHEMA,
        # volume
        "R_values": _VEC,
        # rigidity2d
        "j_max": {"type": "number", "minimum": 4},
        "samples": _POSINT,
        "T_ladder": _VEC,
    },
}

NUMERIC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "rtol": _POS,
        "atol": _POS,
        "seed": {"type": "integer", "minimum": 0},
        "grid": _POSINT,  # quadrature size (great circles, boundary circles)
        "radial_nodes": _POSINT,
        "angular_nodes": _POSINT,
        "tolerance": _POS,  # pass/fail threshold reported by the command
    },
}

OUTPUT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["metric", "command"],
    "properties": {
        "metric": METRIC_SCHEMA,
        "command": COMMAND_SCHEMA,
        "numeric": NUMERIC_SCHEMA,
        "output": OUTPUT_SCHEMA,
    },
}

NUMERIC_DEFAULTS = {"rtol": 1e-10, "atol": 1e-12, "seed": 0, "grid": 2048, "radial_nodes": 6, "angular_nodes": 1,
                    "tolerance": 1e-6}


class ConfigError(ValueError):
    """Schema violation or inconsistent settings."""


def validate(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    out = json.loads(json.dumps(doc))
    out["numeric"] = {**NUMERIC_DEFAULTS, **out.get("numeric", {})}
    out.setdefault("output", {})
    return out


def load(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return validate(doc)


def canonical_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_field(spec: dict, n: int) -> sphere_tensors.SymTensorField:
    if "builtin" in spec:
        name = spec["builtin"]
        if name == "round_metric":
            f = sphere_tensors.round_metric(n)
        elif name == "x1_squared_weighted":
            f = sphere_tensors.x1_squared_weighted(n)
        else:
            i, j = spec.get("axes", [0, 1])
            if max(i, j) >= n or i == j:
                raise ConfigError("rotation_killing axes must be two distinct indices below dim")
            f = sphere_tensors.rotation_killing(n, i, j)
    else:
        parts = []
        for term in spec["terms"]:
            mons = {}
            for mono in term["monomials"]:
                e = tuple(mono["exponents"])
                if len(e) != n:
                    raise ConfigError("monomial exponents must have length dim")
                mons[e] = mons.get(e, 0.0) + float(mono["coefficient"])
            if any(len(c) != n for c in term["covectors"]):
                raise ConfigError("covectors must have length dim")
            parts.append(sphere_tensors.polynomial_tensor(n, mons, term["covectors"]))
        f = sphere_tensors.sum_fields(parts)
    if "scale" in spec:
        f = sphere_tensors.scale_field(f, float(spec["scale"]))
    return f


def build_model(spec: dict) -> metrics.MetricModel:
    kind = spec["kind"]
    dim = int(spec.get("dim", 2))
    try:
        if kind == "euclidean":
            return metrics.euclidean(dim)
        if kind == "cone2d":
            if dim != 2:
                raise ConfigError("cone2d is two-dimensional")
            return metrics.cone2d(spec.get("slope", 1.0), spec.get("tip_radius", 1.0))
        if "m" not in spec:
            raise ConfigError(f"{kind} needs the decay order m")
        if kind == "normal_form_ae":
            if "h_m" not in spec:
                raise ConfigError("normal_form_ae needs h_m")
            h = build_field(spec["h_m"], dim)
            if h.rank != 2:
                raise ConfigError("h_m must be a rank-2 field")
            ps = metrics.PerturbationSpec(m=spec["m"], h_m=h, amplitude=spec.get("amplitude", 0.0),
                                          taper_radius=spec.get("cutoff", 2.5))
            return metrics.normal_form_ae(ps)
        C = np.asarray(spec.get("C", np.zeros((dim, dim))), dtype=float) * spec.get("amplitude", 1.0)
        L = spec.get("L")
        if C.shape != (dim, dim) or (L is not None and np.shape(L) != (dim, dim, dim)):
            raise ConfigError("C must be dim x dim and L dim x dim x dim")
        L = None if L is None else np.asarray(L, dtype=float) * spec.get("amplitude", 1.0)
        return metrics.cartesian_ae(dim, spec["m"], C=C, L=L, cutoff_radius=spec.get("cutoff", 2.0))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
