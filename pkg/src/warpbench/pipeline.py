"""Batch orchestration: stages, artifacts, caching, run manifest.

Every stage turns the validated config into a dict of artifact files
(deterministic text given the config and seeds), which the runner writes
under the output directory and records in the manifest.  Stage outputs are
cached under a content hash of the producing parameters; a warm rerun of an
identical config writes byte-identical files without recomputation.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cache import Cache, canonical_json, content_hash
from .cocycles import cocycle_for
from .config import ExperimentConfig
from .errors import (
    ContractError,
    PropertyViolationError,
    ValidationError,
    WarpbenchError,
)
from .fibred import (
    ChartRejection,
    build_chart,
    build_partition,
    build_section,
    halo_points,
    verify_distance_control,
    verify_transition,
)
from .rlocal import build_rlocal_action, cnd_kernel, cnd_table_csv
from .spaces import (
    DEFAULT_SU2_GENERATORS,
    GOLDEN_ROTATION,
    build_circle_model,
    build_profinite_model,
    build_su2_model,
)
from .spectra import averaging_operator, gap_trend, spectral_gap
from .distortion import distortion_lower_bound, distortion_upper_bound
from .towers import power_tower
from .warp import (
    free_orbit_law,
    matrix_summary,
    matrix_to_csv,
    warped_chain,
    warped_closed_form,
)


def _fmt_level(level) -> str:
    return str(level).replace("/", "_")


def _dump(obj) -> str:
    return canonical_json(obj) + "\n"


@dataclass
class StageResult:
    name: str
    status: str                      # ok | cached | failed | skipped
    wall_clock_s: float
    artifacts: list[str] = field(default_factory=list)
    reason: str = ""
    property_violation: bool = False

    def to_json(self):
        out = {"name": self.name, "status": self.status,
               "wall_clock_s": round(self.wall_clock_s, 6),
               "artifacts": self.artifacts}
        if self.reason:
            out["reason"] = self.reason
        if self.property_violation:
            out["property_violation"] = True
        return out


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    stages: list[StageResult]
    emitted: list[str]

    def to_json(self):
        return {"config_hash": self.config_hash,
                "tool_version": self.tool_version,
                "stages": [s.to_json() for s in self.stages],
                "emitted": sorted(self.emitted)}


class Runner:
    def __init__(self, config: ExperimentConfig, out_dir=None,
                 cache_root=None):
        self.config = config
        self.out = Path(out_dir or config.output)
        self.cache = Cache(cache_root, enabled=config.cache != "off")
        self.refresh = config.cache == "refresh"
        self.config_hash = content_hash(config.hash_payload())
        self._models = {}
        self._warped = {}
        self._actions = {}

    # -- instance construction ---------------------------------------------
    def tower(self):
        inst = self.config.instance
        return power_tower(int(inst["tower_base"]), int(inst["tower_depth"]))

    def model(self, level):
        m = self._models.get(level)
        if m is not None:
            return m
        inst = self.config.instance
        cap = self.config.limits["point_cap"]
        if inst["kind"] == "profinite":
            m = build_profinite_model(self.tower(), int(inst["tower_depth"]),
                                      level, cap=cap)
        elif inst["kind"] == "circle":
            alpha = inst.get("alpha", "golden")
            alpha = GOLDEN_ROTATION if alpha == "golden" else float(alpha)
            m = build_circle_model(alpha, level, float(inst["epsilon"]),
                                   cap=cap)
        else:
            gens = inst.get("generators") or DEFAULT_SU2_GENERATORS
            m = build_su2_model(gens, level, int(inst["target_size"]),
                                seed=self.config.seeds["model"], cap=cap)
        self._models[level] = m
        return m

    def warped(self, level):
        w = self._warped.get(level)
        if w is None:
            w = warped_chain(self.model(level))
            self._warped[level] = w
        return w

    def cocycle(self, model):
        return cocycle_for(model.group(), self.config.p)

    # -- stages ---------------------------------------------------------------
    def stage_towers(self):
        if self.config.kind != "profinite":
            raise ValidationError("towers stage applies to profinite instances")
        tower = self.tower()
        return {"tower.json": _dump({
            "tower": tower.describe(),
            "scale_constraint": "a[n+1] < a[n]/diam, validated at construction",
            "valid": True})}

    def stage_build(self):
        arts = {}
        for level in self.config.levels:
            m = self.model(level)
            arts[f"model-t{_fmt_level(level)}.json"] = _dump(m.to_json())
        return arts

    def stage_warp(self):
        arts = {}
        for level in self.config.levels:
            m = self.model(level)
            chain = self.warped(level)
            tag = _fmt_level(level)
            arts[f"warp-t{tag}-chain.csv"] = matrix_to_csv(chain)
            summary = matrix_summary(chain)
            if m.isometric:
                closed = warped_closed_form(m)
                arts[f"warp-t{tag}-closed.csv"] = matrix_to_csv(closed)
                if m.exact:
                    agree = closed.values == chain.values
                    dev = 0.0 if agree else float(max(
                        abs(a - b) for ra, rb in zip(closed.values, chain.values)
                        for a, b in zip(ra, rb)))
                else:
                    dev = float(np.max(np.abs(chain.to_float_array() -
                                              closed.to_float_array())))
                    agree = dev <= max(1e-9, 2 * m.snap["max_displacement"])
                summary["engines_agree"] = bool(agree)
                summary["engine_max_deviation"] = dev
                if not agree:
                    raise PropertyViolationError(
                        f"warped engines disagree at level {level}",
                        witness={"deviation": dev})
            arts[f"warp-t{tag}-summary.json"] = _dump(summary)
        return arts

    def _embed_report(self, level, radius):
        m = self.model(level)
        warped = self.warped(level)
        law = free_orbit_law(m, warped, int(np.ceil(radius)))
        report = {"level": str(level), "R": radius,
                  "orbit_law_holds": law.holds,
                  "snap": m.snap}
        try:
            part = build_partition(m, warped, radius)
            charts = [build_chart(m, c, part.centers[i], radius, warped)
                      for i, c in enumerate(part.cells)]
            section = build_section(m, self.cocycle(m))
            ctrl = verify_distance_control(m, warped, charts, section,
                                           self.config.p)
            # transition agreement over the 10R-halo charts (the same frames
            # the local-action assembly uses); exhaustive over intersecting
            # pairs when the partition is small, else over the pairs arising
            # from single generator moves
            transitions = {"checked": 0, "consistent": True, "witnesses": []}
            halos = [halo_points(warped, c, 10 * radius) for c in part.cells]
            halo_sets = [set(h) for h in halos]
            ncells = len(part.cells)
            if ncells <= 24:
                pair_list = [(i, j) for i in range(ncells)
                             for j in range(i + 1, ncells)
                             if halo_sets[i] & halo_sets[j]]
            else:
                pair_set = set()
                grp = m.group()
                for s in grp.gens.symbols:
                    perm = m.actions[s]
                    for x in range(m.n):
                        a, b = part.cell_of[x], part.cell_of[int(perm[x])]
                        if a != b:
                            pair_set.add((min(a, b), max(a, b)))
                pair_list = sorted(pair_set)
            hcharts = {}
            for i, j in pair_list:
                for k in (i, j):
                    if k not in hcharts:
                        hcharts[k] = build_chart(
                            m, halos[k], part.centers[k], 21 * radius, warped)
                rep = verify_transition(m, hcharts[i], hcharts[j])
                transitions["checked"] += 1
                if not rep.consistent:
                    transitions["consistent"] = False
                    transitions["witnesses"].append(
                        [i, j, [str(w) for w in rep.witnesses[:2]]])
            checks = {
                "control_identity":
                    "pass" if ctrl.identity_ok else "fail",
                "decomposition_law":
                    "pass" if ctrl.decomposition_ok else "fail",
                "transition_consistency":
                    "pass" if transitions["consistent"] else "fail",
            }
            report.update({
                "status": "pass" if all(v == "pass" for v in checks.values())
                          else "fail",
                "checks": checks,
                "cells": len(part.cells),
                "pair_count": ctrl.pair_count,
                "max_identity_deviation": float(ctrl.max_identity_deviation),
                "identity_tolerance": ctrl.identity_tolerance,
                "max_decomposition_deviation":
                    float(ctrl.max_decomposition_deviation),
                "decomposition_tolerance": ctrl.decomposition_tolerance,
                "transitions": {"checked": transitions["checked"],
                                "consistent": transitions["consistent"]},
                "envelope": [[b.distance, b.count, b.min_embedded,
                              b.max_embedded] for b in ctrl.envelope],
            })
        except ChartRejection as exc:
            report.update({"status": "rejected", "witness": str(exc)})
        return report

    def stage_embed_check(self):
        arts = {}
        failures = []
        for level in self.config.levels:
            for radius in self.config.radii:
                rep = self._embed_report(level, radius)
                name = f"embed-t{_fmt_level(level)}-R{radius}.json"
                arts[name] = _dump(rep)
                if rep["status"] == "fail":
                    failures.append(name)
        if failures:
            raise PropertyViolationError(
                f"distance-control or transition checks failed: {failures}")
        return arts

    def _action(self, level, radius):
        key = (level, radius)
        if key not in self._actions:
            m = self.model(level)
            self._actions[key] = build_rlocal_action(
                m, self.warped(level), radius, self.cocycle(m), self.config.p,
                halo_pair_cap=self.config.halo_pair_cap)
        return self._actions[key]

    def stage_rlocal(self):
        arts = {}
        failures = []
        for level in self.config.levels:
            for radius in self.config.radii:
                name = f"rlocal-t{_fmt_level(level)}-R{radius}.json"
                try:
                    action = self._action(level, radius)
                    rep = action.validate(seed=self.config.seeds["spectra"])
                    doc = {
                        "level": str(level), "R": radius,
                        "status": "pass" if rep.all_pass() else "fail",
                        "claims": {
                            "representation_identity":
                                "pass" if rep.representation_identity["ok"]
                                else "fail",
                            "cocycle_identity":
                                "pass" if rep.cocycle_identity["ok"] else "fail",
                            "isometry":
                                "pass" if rep.isometry["ok"] else "fail",
                            "transition_cocycle":
                                "pass" if rep.transition_cocycle["ok"]
                                else "fail",
                            "norm_envelope":
                                "pass" if rep.norm_envelope["ok"] else "fail",
                        },
                        "checked": {
                            "representation_identity":
                                rep.representation_identity["checked"],
                            "cocycle_identity": rep.cocycle_identity["checked"],
                            "isometry": rep.isometry["checked"],
                            "transition_cocycle":
                                rep.transition_cocycle["checked"],
                        },
                        "orbit_law_holds": rep.orbit_law_holds,
                        "halo_identity_deviation":
                            float(rep.halo_control.max_identity_deviation),
                        "halo_identity_tolerance":
                            rep.halo_control.identity_tolerance,
                        "cocycle_norms": rep.norm_envelope["rows"],
                    }
                    if doc["status"] == "fail":
                        failures.append(name)
                except ChartRejection as exc:
                    doc = {"level": str(level), "R": radius,
                           "status": "rejected", "witness": str(exc)}
                arts[name] = _dump(doc)
        if failures:
            raise PropertyViolationError(f"local-action checks failed: {failures}")
        return arts

    def stage_cnd(self):
        if self.config.p != 2:
            raise ContractError("the cnd stage requires p = 2")
        arts = {}
        failures = []
        for level in self.config.levels:
            for radius in self.config.radii:
                tag = f"t{_fmt_level(level)}-R{radius}"
                try:
                    action = self._action(level, radius)
                    rep = cnd_kernel(action, draws=100,
                                     seed=self.config.seeds["cnd"],
                                     tuple_radius=min(2, radius))
                    arts[f"cnd-{tag}.csv"] = cnd_table_csv(rep)
                    doc = {"level": str(level), "R": radius,
                           "status": "pass" if rep.ok else "fail",
                           "max_quadratic_form": max(rep.quadratic_forms),
                           "tolerance": rep.tolerance,
                           "h_identity": float(dict(
                               (str(g), v) for g, v in rep.table)["e"])}
                    if not rep.ok:
                        failures.append(tag)
                except ChartRejection as exc:
                    doc = {"level": str(level), "R": radius,
                           "status": "rejected", "witness": str(exc)}
                arts[f"cnd-{tag}.json"] = _dump(doc)
        if failures:
            raise PropertyViolationError(f"kernel checks failed: {failures}")
        return arts

    def _gap_family(self):
        fam = self.config.gap_family
        kind = self.config.kind
        if fam is None:
            if kind == "profinite":
                depth = int(self.config.instance["tower_depth"])
                values, param = list(range(3, max(4, depth + 1))), "depth"
            elif kind == "su2":
                values, param = [self.config.instance["target_size"]], \
                    "target_size"
            else:
                values, param = list(self.config.levels), "level"
        else:
            values, param = fam["values"], fam["param"]
        models = []
        for v in values:
            if param == "depth":
                base = int(self.config.instance["tower_base"])
                tower = power_tower(base, int(v))
                models.append(build_profinite_model(tower, int(v),
                                                    self.config.levels[0]))
            elif param == "target_size":
                gens = self.config.instance.get("generators") or \
                    DEFAULT_SU2_GENERATORS
                models.append(build_su2_model(
                    gens, self.config.levels[0], int(v),
                    seed=self.config.seeds["model"]))
            else:
                models.append(self.model(v))
        return param, values, models

    def stage_gap(self):
        param, values, models = self._gap_family()
        seed = self.config.seeds["spectra"]
        results = [spectral_gap(averaging_operator(m), seed=seed)
                   for m in models]
        lines = [f"{param},n_points,gap,second_eigenvalue,iterations,residual"]
        for v, m, r in zip(values, models, results):
            lines.append(f"{v},{m.n},{r.gap!r},{r.second_eigenvalue!r},"
                         f"{r.iterations},{r.residual!r}")
        trend = None
        if len(values) >= 3:
            t = gap_trend(values, [averaging_operator(m) for m in models],
                          seed=seed)
            trend = {"monotone_decreasing": t.monotone_decreasing,
                     "max_increase": t.max_increase,
                     "ratio_last_first": t.ratio_last_first}
        doc = {"param": param, "values": [str(v) for v in values],
               "gaps": [r.gap for r in results],
               "seed": seed, "trend": trend}
        return {"gap-series.csv": "\n".join(lines) + "\n",
                "gap-trend.json": _dump(doc)}

    def stage_distort(self):
        arts = {}
        cfg = self.config.distortion
        seeds = tuple(cfg.get("seeds", self.config.seeds["distortion"]))
        p = cfg.get("p", 2)
        for level in self.config.levels:
            m = self.model(level)
            warped = self.warped(level)
            D = warped.to_float_array()
            op = averaging_operator(m)
            lower = distortion_lower_bound(D, op, p=2,
                                           seed=self.config.seeds["spectra"])
            upper = distortion_upper_bound(D, p=p, dim=cfg.get("dim"),
                                           seeds=seeds)
            if lower.informative and lower.bound > upper.distortion + 1e-9:
                raise PropertyViolationError(
                    "certified lower bound exceeds found embedding distortion",
                    witness={"level": str(level), "lower": lower.bound,
                             "upper": upper.distortion})
            arts[f"distort-t{_fmt_level(level)}.json"] = _dump({
                "level": str(level), "p": p,
                "lower_bound": lower.bound,
                "lower_informative": lower.informative,
                "gap": lower.gap,
                "upper_bound": upper.distortion,
                "dim": upper.dim,
                "seeds": list(seeds),
                "best_seed": upper.best_seed,
                "certified": (not lower.informative) or
                             lower.bound <= upper.distortion + 1e-9})
        return arts

    # -- orchestration ---------------------------------------------------------
    STAGE_FUNCS = {
        "towers": stage_towers,
        "build": stage_build,
        "warp": stage_warp,
        "embed-check": stage_embed_check,
        "rlocal": stage_rlocal,
        "cnd": stage_cnd,
        "gap": stage_gap,
        "distort": stage_distort,
    }

    def _stage_key(self, stage: str) -> str:
        return content_hash({"config": self.config.hash_payload(),
                             "stage": stage, "version": __version__})

    def run_stage(self, stage: str) -> StageResult:
        start = time.monotonic()
        key = self._stage_key(stage)
        if not self.refresh:
            blob = self.cache.load_json(key, "artifacts.json")
            if blob is not None:
                paths = self._write_artifacts(blob)
                return StageResult(stage, "cached",
                                   time.monotonic() - start, paths)
        arts = self.STAGE_FUNCS[stage](self)
        if self.cache.enabled:
            self.cache.store_json(key, "artifacts.json", arts)
        paths = self._write_artifacts(arts)
        return StageResult(stage, "ok", time.monotonic() - start, paths)

    def _write_artifacts(self, arts: dict) -> list[str]:
        self.out.mkdir(parents=True, exist_ok=True)
        names = []
        for name, text in sorted(arts.items()):
            (self.out / name).write_text(text)
            names.append(name)
        return names

    def run(self) -> RunManifest:
        results = []
        emitted = []
        failed_stage = None
        for stage in self.config.stages:
            if failed_stage is not None:
                results.append(StageResult(
                    stage, "skipped", 0.0,
                    reason=f"upstream stage {failed_stage!r} failed"))
                continue
            start = time.monotonic()
            try:
                res = self.run_stage(stage)
            except PropertyViolationError as exc:
                res = StageResult(stage, "failed", time.monotonic() - start,
                                  reason=str(exc), property_violation=True)
                failed_stage = stage
            except WarpbenchError as exc:
                res = StageResult(stage, "failed", time.monotonic() - start,
                                  reason=str(exc))
                failed_stage = stage
            results.append(res)
            emitted.extend(res.artifacts)
        manifest = RunManifest(self.config_hash, __version__, results,
                               emitted + ["manifest.json"])
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(_dump(manifest.to_json()))
        return manifest
