"""Experiment configuration: a strict, versioned JSON document.

Unknown keys anywhere in the document are errors; silent typos would poison
reproducibility.  The JSON Schema shipped under docs/schemas/ mirrors the
validation done here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ValidationError

SCHEMA_VERSION = 1

STAGES = ("build", "warp", "embed-check", "rlocal", "cnd", "gap", "distort",
          "towers")

_TOP_KEYS = {"schema_version", "name", "instance", "levels", "R", "p",
             "seeds", "limits", "output", "stages", "cache", "gap_family",
             "halo_pair_cap", "distortion"}
_INSTANCE_KEYS = {
    "profinite": {"kind", "tower_base", "tower_depth"},
    "circle": {"kind", "alpha", "epsilon"},
    "su2": {"kind", "generators", "target_size"},
}
_SEED_KEYS = {"model", "spectra", "cnd", "distortion"}
_LIMIT_KEYS = {"point_cap", "ball_cap"}
_GAP_KEYS = {"param", "values"}
_DISTORT_KEYS = {"dim", "seeds", "p"}


@dataclass
class ExperimentConfig:
    name: str
    instance: dict
    levels: list
    radii: list
    p: float
    seeds: dict
    limits: dict
    output: str
    stages: list
    cache: str
    gap_family: dict | None
    halo_pair_cap: int
    distortion: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def kind(self) -> str:
        return self.instance["kind"]

    def hash_payload(self) -> dict:
        payload = dict(self.raw)
        payload.pop("output", None)
        return payload


def _require_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(
            f"unknown key(s) {sorted(unknown)} in {where}; allowed: "
            f"{sorted(allowed)}")


def _parse_level(v):
    if isinstance(v, bool):
        raise ValidationError("levels must be numbers")
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return v
    if isinstance(v, str) and "/" in v:
        return Fraction(v)
    raise ValidationError(f"level {v!r} is not a number")


def validate_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config document must be a JSON object")
    _require_keys(doc, _TOP_KEYS, "config")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"schema_version must be {SCHEMA_VERSION}, got "
            f"{doc.get('schema_version')!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ValidationError("name must be a nonempty string")

    inst = doc.get("instance")
    if not isinstance(inst, dict) or "kind" not in inst:
        raise ValidationError("instance must be an object with a 'kind'")
    kind = inst["kind"]
    if kind not in _INSTANCE_KEYS:
        raise ValidationError(f"unknown instance kind {kind!r}")
    _require_keys(inst, _INSTANCE_KEYS[kind], f"instance ({kind})")
    if kind == "profinite":
        if int(inst.get("tower_base", 0)) < 2:
            raise ValidationError("tower_base must be an integer >= 2")
        if int(inst.get("tower_depth", 0)) < 1:
            raise ValidationError("tower_depth must be >= 1")
    if kind == "su2":
        if int(inst.get("target_size", 0)) < 4:
            raise ValidationError("target_size must be >= 4")
        gens = inst.get("generators")
        if gens is not None and (not isinstance(gens, list) or
                                 any(len(q) != 4 for q in gens)):
            raise ValidationError("generators must be a list of quaternions")
    if kind == "circle" and float(inst.get("epsilon", 0)) <= 0:
        raise ValidationError("epsilon must be positive")

    levels = [_parse_level(v) for v in doc.get("levels", [])]
    if not levels:
        raise ValidationError("levels must be a nonempty list")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValidationError("levels must be strictly increasing")
    if any(l < 1 for l in levels):
        raise ValidationError("levels must be >= 1")

    radii = doc.get("R", [])
    if not isinstance(radii, list) or not radii or \
            any(not isinstance(r, (int, float)) or r <= 0 for r in radii):
        raise ValidationError("R must be a nonempty list of positive numbers")

    p = doc.get("p", 2)
    if not isinstance(p, (int, float)) or p < 1:
        raise ValidationError("p must be a number >= 1")

    seeds = doc.get("seeds", {})
    _require_keys(seeds, _SEED_KEYS, "seeds")
    seeds = {"model": 2024, "spectra": 0, "cnd": 0,
             "distortion": [0, 1, 2, 3], **seeds}

    limits = doc.get("limits", {})
    _require_keys(limits, _LIMIT_KEYS, "limits")
    limits = {"point_cap": 20_000, "ball_cap": 200_000, **limits}
    if any(v <= 0 for v in limits.values()):
        raise ValidationError("limits must be positive")

    stages = doc.get("stages", [])
    if not isinstance(stages, list):
        raise ValidationError("stages must be a list")
    for s in stages:
        if s not in STAGES:
            raise ValidationError(f"unknown stage {s!r}; allowed: {STAGES}")

    cache = doc.get("cache", "on")
    if cache not in ("on", "off", "refresh"):
        raise ValidationError("cache must be one of on/off/refresh")

    gap_family = doc.get("gap_family")
    if gap_family is not None:
        _require_keys(gap_family, _GAP_KEYS, "gap_family")
        if gap_family.get("param") not in ("depth", "target_size", "level"):
            raise ValidationError(
                "gap_family.param must be depth, target_size or level")
        if not gap_family.get("values"):
            raise ValidationError("gap_family.values must be nonempty")

    halo_pair_cap = doc.get("halo_pair_cap", 4000)
    if not isinstance(halo_pair_cap, int) or halo_pair_cap < 1:
        raise ValidationError("halo_pair_cap must be a positive integer")

    distortion = doc.get("distortion", {})
    _require_keys(distortion, _DISTORT_KEYS, "distortion")

    output = doc.get("output", "runs/" + name)
    if not isinstance(output, str):
        raise ValidationError("output must be a string path")

    return ExperimentConfig(name, dict(inst), levels, list(radii), p, seeds,
                            limits, output, list(stages), cache, gap_family,
                            halo_pair_cap, dict(distortion), raw=doc)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    return validate_config(doc)
