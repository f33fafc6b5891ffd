"""Run configuration: JSON schema, validation and construction of model objects."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_VEC2 = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_MAT2 = {"type": "array", "items": _VEC2, "minItems": 2, "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_SHAPE = {
    "oneOf": [
        _obj({"shape": {"const": "disk"}, "center": _VEC2, "radius": _POS}, ["shape", "radius"]),
        _obj({"shape": {"const": "annulus"}, "center": _VEC2, "r_inner": _POS, "r_outer": _POS},
             ["shape", "r_inner", "r_outer"]),
        _obj({"shape": {"const": "rectangle"}, "lo": _VEC2, "hi": _VEC2}, ["shape", "lo", "hi"]),
        _obj({"shape": {"const": "convex_polygon"},
              "vertices": {"type": "array", "items": _VEC2, "minItems": 3}}, ["shape", "vertices"]),
        _obj({"shape": {"const": "difference"}, "outer": {"$ref": "#/$defs/shape"},
              "holes": {"type": "array", "items": {"$ref": "#/$defs/shape"}}}, ["shape", "outer"]),
    ]
}

_TRIPLE = _obj({"A": _MAT2, "b": _VEC2, "c": _NONNEG})
_BOUNDS = {"lam": _POS, "Lam": _POS, "K": _NONNEG}

_OPERATOR = {
    "oneOf": [
        _obj({"kind": {"const": "constant"}, "A": _MAT2, "b": _VEC2, "c": _NONNEG, **_BOUNDS}, ["kind"]),
        _obj({"kind": {"const": "checkerboard"}, "first": _TRIPLE, "second": _TRIPLE, "cell": _POS,
              **_BOUNDS}, ["kind", "first", "second", "cell"]),
        _obj({"kind": {"const": "rotating"}, "angle": {"oneOf": [{"const": "polar"}, _NUM]},
              "b": _VEC2, "c": _NONNEG, **_BOUNDS}, ["kind", "lam", "Lam"]),
        _obj({"kind": {"const": "tabulated"}, "x": {"type": "array", "items": _NUM, "minItems": 2},
              "y": {"type": "array", "items": _NUM, "minItems": 2}, "A": {"type": "array"},
              "b": {"type": "array"}, "c": {"type": "array"}, **_BOUNDS},
             ["kind", "x", "y", "A", "b", "c"]),
    ]
}

_NONLINEARITY = {
    "oneOf": [
        _obj({"kind": {"const": "power"}, "p": _NUM}, ["kind", "p"]),
        _obj({"kind": {"const": "exponential"}, "a": _NUM}, ["kind"]),
    ]
}

_BARRIERS = ["keller_osserman_power", "keller_osserman_exp", "singular_lower", "exterior_ball_lower",
             "power_lower_subsolution", "exp_lower_subsolution", "convex_log_lower", "frozen_coeff_lower"]
_RANGE = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"shape": _SHAPE},
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "domain": {"$ref": "#/$defs/shape"},
        "grid": _obj({"h": _POS}, ["h"]),
        "operator": _OPERATOR,
        "nonlinearity": _NONLINEARITY,
        "solver": _obj({
            "ladder": _obj({"M0": _POS, "factor": {"type": "number", "exclusiveMinimum": 1},
                            "cap": {"type": "integer", "minimum": 0}, "stop_tol": _NONNEG,
                            "rho": _POS, "finalize": {"type": "boolean"},
                            "method": {"enum": ["transformed", "direct"]}}),
            "newton": _obj({"tol": _POS, "max_iter": {"type": "integer", "minimum": 1}}),
            "exhaustion": _obj({"offsets": {"type": "array", "items": _POS, "minItems": 1},
                                "factor": {"type": "number", "exclusiveMinimum": 1}}, ["offsets"]),
        }),
        "analysis": _obj({
            "fit_window": _RANGE, "slack": {"type": "number", "minimum": 1}, "rho": _POS,
            "N1": _NONNEG, "N2": _POS,
            "uniqueness": _obj({"paths": {"type": "array", "items": {"enum": ["ladder", "exhaustion", "perturbed"]},
                                          "minItems": 2}, "rho": _POS}),
        }),
        "certify": _obj({
            "barriers": {"type": "array", "items": {"enum": _BARRIERS}, "minItems": 1},
            "draws": {"type": "integer", "minimum": 1},
            "n_samples": {"type": "integer", "minimum": 1},
            "mode": {"enum": ["worst-case", "frozen"]},
            "params": _obj({"n": {"type": "integer", "minimum": 1}, "p": _NUM, "lam": _NUM, "Lam": _NUM,
                            "K": _NUM, "r": _POS, "delta": _NUM, "D": _POS, "omega": _NONNEG}),
            "ranges": _obj({"n": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                            "p": _RANGE, "lam": _RANGE, "Lam": _RANGE, "K": _RANGE}),
            "constant_factor": _POS,
        }, ["barriers"]),
        "proptest": _obj({"operators": {"type": "integer", "minimum": 1},
                          "trials_per_operator": {"type": "integer", "minimum": 1},
                          "mutant": {"type": "boolean"}, "p": {"type": "number"}}),
        "output": _obj({"directory": {"type": "string"}, "emit_svg": {"type": "boolean"}}),
        "seed": {"type": "integer", "minimum": 0},
    },
}


@dataclass
class RunConfig:
    raw: dict
    seed: int = 0
    source: str | None = None
    extras: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    # model objects -----------------------------------------------------
    def domain(self):
        from .geometry import domain_from_dict
        if "domain" not in self.raw:
            raise ConfigError("config has no 'domain' section")
        return domain_from_dict(self.raw["domain"])

    def nonlinearity(self):
        from .nonlinearity import NonlinearitySpec
        if "nonlinearity" not in self.raw:
            raise ConfigError("config has no 'nonlinearity' section")
        nl = self.raw["nonlinearity"]
        if nl["kind"] == "power":
            return NonlinearitySpec.power(nl["p"])
        return NonlinearitySpec.exponential(nl.get("a", 1.0))

    def operator(self, domain=None):
        from .operators import OperatorSpec
        return operator_from_dict(self.raw.get("operator", {"kind": "constant"}), domain, self.seed,
                                  OperatorSpec)

    @property
    def h(self) -> float:
        if "grid" not in self.raw:
            raise ConfigError("config has no 'grid' section")
        return float(self.raw["grid"]["h"])


def operator_from_dict(spec: dict, domain, seed: int, OperatorSpec):
    import numpy as np

    from .errors import InvariantViolation
    from .operators import (CheckerboardField, ConstantField, RotatingField, TabulatedField,
                            ellipticity_bounds, polar_angle)

    def triple(d):
        return ConstantField(tuple(map(tuple, d.get("A", [[1, 0], [0, 1]]))),
                             tuple(d.get("b", [0, 0])), d.get("c", 0.0))

    kind = spec["kind"]
    if kind == "constant":
        fld = triple(spec)
    elif kind == "checkerboard":
        fld = CheckerboardField(triple(spec["first"]), triple(spec["second"]), spec["cell"])
    elif kind == "rotating":
        ang = spec.get("angle", "polar")
        angle = polar_angle if ang == "polar" else (lambda pts, a=float(ang): np.full(len(pts), a))
        fld = RotatingField(spec["lam"], spec["Lam"], angle, tuple(spec.get("b", [0, 0])), spec.get("c", 0.0))
    else:
        fld = TabulatedField(spec["x"], spec["y"], spec["A"], spec["b"], spec["c"])
    region = domain.bbox() if domain is not None else None
    lam_hat, Lam_hat, K_hat = ellipticity_bounds(fld, 20_000, region=region, seed=seed)
    lam = spec.get("lam", lam_hat)
    Lam = spec.get("Lam", Lam_hat)
    K = spec.get("K", K_hat)
    op = OperatorSpec(fld, lam, Lam, K)
    try:
        ellipticity_bounds(fld, 20_000, region=region, seed=seed, declared=op)
    except InvariantViolation as exc:
        raise ConfigError(f"operator coefficients violate the declared bounds: {exc}") from exc
    return op


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    nl = raw.get("nonlinearity")
    if nl is not None:
        if nl["kind"] == "power" and not nl["p"] > 1:
            raise ConfigError(f"nonlinearity: power case requires p > 1, got p={nl['p']}")
        if nl["kind"] == "exponential" and not nl.get("a", 1.0) > 0:
            raise ConfigError(f"nonlinearity: exponential case requires a > 0, got a={nl['a']}")
    op = raw.get("operator")
    if op is not None and "lam" in op and "Lam" in op and not op["lam"] <= op["Lam"]:
        raise ConfigError("operator: need lam <= Lam")
    ex = raw.get("solver", {}).get("exhaustion")
    if ex is not None:
        offs = ex["offsets"]
        if any(b >= a for a, b in zip(offs, offs[1:])):
            raise ConfigError("solver/exhaustion: offsets must be strictly decreasing")
    win = raw.get("analysis", {}).get("fit_window")
    if win is not None and not 0 < win[0] < win[1]:
        raise ConfigError("analysis/fit_window: need 0 < lo < hi")
    cert = raw.get("certify")
    if cert is not None:
        for key, rng in cert.get("ranges", {}).items():
            if key != "n" and not rng[0] <= rng[1]:
                raise ConfigError(f"certify/ranges/{key}: lower end exceeds upper end")


def load_config(path, seed: int | None = None) -> RunConfig:
    """Read, validate and wrap a JSON config; ``seed`` overrides the file's seed."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw, seed, str(path))


def config_from_dict(raw: dict, seed: int | None = None, source: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    validate(raw)
    return RunConfig(raw, int(raw.get("seed", 0) if seed is None else seed), source)
