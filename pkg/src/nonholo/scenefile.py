"""JSON scene files: schema, validation and loading."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import InputError, SceneSchemaError
from .expr import parse
from .gvf import GuidingField, WeightSpec, weight_spec_from_dict
from .scene import ImplicitLoop, Numerics, PfaffianConstraint, Scene

_EXPR = {"type": "string", "minLength": 1}
_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["constraint", "path"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "constraint": {
            "type": "object",
            "additionalProperties": False,
            "required": ["beta"],
            "properties": {
                "beta": {"type": "array", "items": _EXPR, "minItems": 3, "maxItems": 3},
                "normalized": {"type": "boolean"},
            },
        },
        "path": {
            "type": "object",
            "additionalProperties": False,
            "required": ["f", "g", "seed", "delta"],
            "properties": {
                "f": _EXPR,
                "g": _EXPR,
                "seed": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "delta": _POS,
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mode"],
            "properties": {
                "mode": {"enum": ["default", "custom", "robust"]},
                "a": _EXPR,
                "b": _EXPR,
                "a_lambda": _NUM,
                "eps0": _POS,
                "budget": {"type": "integer", "minimum": 12},
            },
        },
        "chart": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"fiber_angle": _EXPR},
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trace_step": _POS,
                "integrator": {"enum": ["rk45", "rk4"]},
                "abs_tol": _POS,
                "rel_tol": _POS,
                "fixed_step": _POS,
                "max_time": _POS,
                "max_steps": {"type": "integer", "minimum": 1},
                "eps_conv": _POS,
                "theta_every": {"type": "integer", "minimum": 1},
                "tube_samples": {"type": "integer", "minimum": 1},
                "weight_samples": {"type": "integer", "minimum": 1},
                "rng_seed": {"type": "integer", "minimum": 0},
                "transversality_tol": _POS,
                "lambda_tol": _POS,
                "wall_seconds": {"type": ["number", "null"]},
            },
        },
    },
}


@dataclass(frozen=True)
class LoadedScene:
    scene: Scene
    weights: WeightSpec
    raw: dict
    digest: str

    def field(self, weights: WeightSpec | None = None) -> GuidingField:
        return GuidingField(self.scene, weights if weights is not None else self.weights)


def builtin_scenes() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("nonholo.scenes").iterdir()
                  if p.name.endswith(".json"))


def read_scene_text(ref: str | Path) -> str:
    """Text of a scene file; a bare name like ``heisenberg`` selects a bundled scene."""
    path = Path(ref)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if str(ref) in builtin_scenes():
        return resources.files("nonholo.scenes").joinpath(f"{ref}.json").read_text(encoding="utf-8")
    raise InputError(f"scene file {str(ref)!r} not found (bundled scenes: {', '.join(builtin_scenes())})")


def validate(raw) -> None:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SceneSchemaError(f"scene invalid at {where}: {exc.message}") from None


def scene_from_dict(raw: dict, digest: str = "") -> LoadedScene:
    validate(raw)
    try:
        c = raw["constraint"]
        constraint = PfaffianConstraint.from_texts(c["beta"], c.get("normalized", False))
        pth = raw["path"]
        loop = ImplicitLoop.from_texts(pth["f"], pth["g"], pth["seed"], pth["delta"])
        known = {f.name for f in fields(Numerics)}
        numerics = Numerics(**{k: v for k, v in raw.get("numerics", {}).items() if k in known})
        chart = raw.get("chart", {}).get("fiber_angle")
        chart_expr = parse(chart) if chart else None
        weights = weight_spec_from_dict(raw.get("weights", {"mode": "default"}), loop)
    except (InputError, ValueError) as exc:
        raise SceneSchemaError(f"scene invalid: {exc}") from exc
    scene = Scene.build(constraint, loop, numerics, chart_expr, raw.get("weights"),
                        raw.get("name", "scene"))
    return LoadedScene(scene, weights, raw, digest)


def load_scene(ref: str | Path) -> LoadedScene:
    text = read_scene_text(ref)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneSchemaError(f"scene file is not valid JSON: {exc}") from None
    return scene_from_dict(raw, hashlib.sha256(text.encode("utf-8")).hexdigest())
