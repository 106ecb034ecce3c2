"""Run-configuration loading, schema validation, and hashing.

Configs are YAML with fixed sections; every value has a checked type and
unknown keys are rejected with their full path.  A user file overrides the
checked-in defaults key by key.  The resolved config is embedded in every
run artifact together with its hash, so identical hashes mean byte-identical
outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import yaml

from .errors import ConfigError
from .geometry import UnitCell, build_unit_cell

_SHAPE_KEYS = {
    "shape": str,
    "radius": float,
    "half_width": float,
    "half_height": float,
    "exponent": float,
    "angle": float,
}

_SCHEMA = {
    "geometry": {
        **_SHAPE_KEYS,
        "cells_per_period": int,
        "rows_below": int,
        "height_above": float,
    },
    "slip_geometry": dict(_SHAPE_KEYS),
    "parameters": {
        "eta": list,
        "epsilon": list,
        "forcing": list,
        "rate_forcing": float,
        "slip_eta": float,
        "slip_epsilon": (str, float),
        "extra_points": list,
    },
    "resolution": {
        "dns_cells_per_period": int,
    },
    "solver": {
        "picard_tol": float,
        "picard_max_iter": int,
        "damping": float,
    },
    "output": {
        "cache_dir": str,
        "constants_json": str,
        "error_csv": str,
        "slip_csv": str,
        "summary_json": str,
        "report_dir": str,
    },
    "flags": {
        "allow_out_of_hypothesis": bool,
        "skip_dns": bool,
        "refine_check": bool,
        "jobs": int,
    },
}


def parse_epsilon(value) -> int:
    """Epsilon entry ('1/8', 0.125, ...) -> number of periods 1/epsilon."""
    if isinstance(value, str):
        parts = value.split("/")
        try:
            if len(parts) == 2:
                num, den = int(parts[0]), int(parts[1])
                if num != 1 or den < 1:
                    raise ValueError
                return den
            value = float(value)
        except ValueError as exc:
            raise ConfigError(f"epsilon entry {value!r} is not of the form 1/n") from exc
    inv = 1.0 / float(value)
    if abs(inv - round(inv)) > 1e-9 or round(inv) < 1:
        raise ConfigError(f"epsilon entry {value!r}: 1/epsilon is not an integer")
    return int(round(inv))


def _check_types(data: dict, schema: dict, path: str) -> None:
    for key, val in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key {path}{key!r}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}{key} must be a mapping")
            _check_types(val, expected, f"{path}{key}.")
        else:
            types = expected if isinstance(expected, tuple) else (expected,)
            if float in types:
                types = types + (int,)
            if not isinstance(val, types) or isinstance(val, bool) and bool not in types:
                names = "/".join(t.__name__ for t in types)
                raise ConfigError(f"{path}{key} must be {names}, got {type(val).__name__}")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def _default_raw() -> dict:
    text = resources.files("fracslip.data").joinpath("default.yaml").read_text()
    return yaml.safe_load(text)


def _shape_cell(section: dict, where: str) -> UnitCell:
    kind = section.get("shape", "disc")
    try:
        if kind == "disc":
            return build_unit_cell("disc", radius=float(section.get("radius", 0.25)))
        if kind == "superellipse":
            return build_unit_cell(
                "superellipse",
                half_width=float(section["half_width"]),
                half_height=float(section["half_height"]),
                exponent=float(section.get("exponent", 2.0)),
                angle=float(section.get("angle", 0.0)),
            )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing {exc} for superellipse") from exc
    raise ConfigError(f"{where}.shape must be 'disc' or 'superellipse', got {kind!r}")


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    source: str | None

    @classmethod
    def load(cls, path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        raw = _default_raw()
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    user = yaml.safe_load(fh)
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {path}") from exc
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
                raise ConfigError(f"invalid YAML in {path}{loc}: {exc}") from exc
            if user is None:
                user = {}
            if not isinstance(user, dict):
                raise ConfigError(f"{path}: top level must be a mapping")
            raw = _merge(raw, user)
        if overrides:
            raw = _merge(raw, overrides)
        _check_types(raw, _SCHEMA, "")
        cfg = cls(raw=raw, source=path)
        cfg.validate()
        return cfg

    # -- validated accessors -------------------------------------------------

    def validate(self) -> None:
        self.cell()
        self.slip_cell()
        self.epsilon_periods()
        p = self.raw["parameters"]
        if not p["eta"]:
            raise ConfigError("parameters.eta must not be empty")
        for eta in p["eta"]:
            if not (0.0 < float(eta) < 1.5):
                raise ConfigError(f"parameters.eta entry {eta} outside (0, 3/2)")
        if not p["forcing"]:
            raise ConfigError("parameters.forcing must not be empty")
        for pt in p["extra_points"]:
            if not isinstance(pt, dict) or set(pt) != {"delta", "gamma"}:
                raise ConfigError(
                    "parameters.extra_points entries must be {delta: .., gamma: ..}"
                )
        parse_epsilon(p["slip_epsilon"])
        if self.raw["resolution"]["dns_cells_per_period"] < 16:
            raise ConfigError("resolution.dns_cells_per_period must be >= 16")
        if not (0.0 < self.raw["solver"]["damping"] <= 1.0):
            raise ConfigError("solver.damping must be in (0, 1]")

    def cell(self) -> UnitCell:
        return _shape_cell(self.raw["geometry"], "geometry")

    def slip_cell(self) -> UnitCell:
        return _shape_cell(self.raw["slip_geometry"], "slip_geometry")

    def epsilon_periods(self) -> list[int]:
        return [parse_epsilon(e) for e in self.raw["parameters"]["epsilon"]]

    def slip_epsilon_periods(self) -> int:
        return parse_epsilon(self.raw["parameters"]["slip_epsilon"])

    @property
    def geometry(self) -> dict:
        return self.raw["geometry"]

    @property
    def parameters(self) -> dict:
        return self.raw["parameters"]

    @property
    def solver(self) -> dict:
        return self.raw["solver"]

    @property
    def output(self) -> dict:
        return self.raw["output"]

    @property
    def flags(self) -> dict:
        return self.raw["flags"]

    @property
    def dns_cells(self) -> int:
        return int(self.raw["resolution"]["dns_cells_per_period"])

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()
