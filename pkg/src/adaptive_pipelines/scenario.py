"""Seeded eye-tracking batch generator with ground-truth sidecar."""

from __future__ import annotations

import copy
import io
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import _canonical
from .exceptions import SpecError

GAZE = ("ET-GazeLeft-X", "ET-GazeLeft-Y", "ET-GazeRight-X", "ET-GazeRight-Y")
FIXATION = ("Fixation-X", "Fixation-Y")
BASE_COLUMNS = GAZE + FIXATION + ("Group",)
CHANGE_KINDS = ("semantic-shift", "rename", "add-property", "remove-property")


def _default_missing() -> dict[str, float]:
    return {**{g: 0.05 for g in GAZE}, "Group": 0.05}


def _default_violations() -> dict[str, float]:
    return {p: 0.03 for p in GAZE + FIXATION}


@dataclass
class ScenarioSpec:
    rows: int = 5000
    seed: int = 42
    batches: int = 1
    width: float = 1920.0
    height: float = 1080.0
    gaze_noise: float = 15.0
    groups: tuple[str, ...] = ("group1", "group2", "group3")
    missing: dict[str, float] = field(default_factory=_default_missing)
    violations: dict[str, float] = field(default_factory=_default_violations)
    max_excess: float = 300.0
    changes: dict[int, list[dict]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "seed": self.seed, "batches": self.batches, "width": self.width,
                "height": self.height, "gaze_noise": self.gaze_noise, "groups": list(self.groups),
                "missing": self.missing, "violations": self.violations, "max_excess": self.max_excess,
                "changes": {str(k): v for k, v in sorted(self.changes.items())}}

    @classmethod
    def from_dict(cls, d: Mapping) -> ScenarioSpec:
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise SpecError(f"unknown scenario field {k!r}")
        d = dict(d)
        if "groups" in d:
            d["groups"] = tuple(d["groups"])
        if "changes" in d:
            try:
                d["changes"] = {int(k): list(v) for k, v in d["changes"].items()}
            except (TypeError, ValueError, AttributeError):
                raise SpecError("changes must map batch numbers to lists of changes") from None
        spec = cls(**d)
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.rows < 1 or self.batches < 1:
            raise SpecError("rows and batches must be positive")
        if self.width <= 0 or self.height <= 0 or self.gaze_noise < 0 or self.max_excess < 1:
            raise SpecError("screen size, noise and excess must be positive")
        for what, rates in (("missing", self.missing), ("violations", self.violations)):
            for name, r in rates.items():
                if not 0 <= r <= 1:
                    raise SpecError(f"{what} rate for {name!r} must lie in [0, 1]")
        for name in self.violations:
            if name not in GAZE + FIXATION:
                raise SpecError(f"violations can only be injected into numeric base properties, not {name!r}")
        for name, r in self.missing.items():
            if name not in BASE_COLUMNS:
                raise SpecError(f"unknown property {name!r} in missing rates")
            if r + self.violations.get(name, 0.0) > 1:
                raise SpecError(f"missing plus violation rate for {name!r} exceeds 1")
        # walk the change script to check every reference
        names = list(BASE_COLUMNS)
        base_of = {n: n for n in names}
        for b in sorted(self.changes):
            if not 1 <= b <= self.batches:
                raise SpecError(f"change at batch {b} is outside 1..{self.batches}")
            for ch in self.changes[b]:
                kind = ch.get("kind")
                if kind not in CHANGE_KINDS:
                    raise SpecError(f"unknown change kind {kind!r}")
                if kind == "semantic-shift":
                    if ch.get("property") not in names:
                        raise SpecError(f"batch {b}: semantic shift of unknown property {ch.get('property')!r}")
                    if base_of[ch["property"]] not in GAZE + FIXATION:
                        raise SpecError(f"batch {b}: only base numeric properties can shift")
                elif kind == "rename":
                    if ch.get("old") not in names or not ch.get("new") or ch["new"] in names:
                        raise SpecError(f"batch {b}: invalid rename {ch.get('old')!r} -> {ch.get('new')!r}")
                    names[names.index(ch["old"])] = ch["new"]
                    base_of[ch["new"]] = base_of.pop(ch["old"])
                elif kind == "add-property":
                    if not ch.get("name") or ch["name"] in names:
                        raise SpecError(f"batch {b}: invalid added property {ch.get('name')!r}")
                    if ch.get("coupled_to") is not None and ch["coupled_to"] not in names:
                        raise SpecError(f"batch {b}: coupling to unknown property {ch['coupled_to']!r}")
                    names.append(ch["name"])
                    base_of[ch["name"]] = ch["name"]
                else:
                    if ch.get("name") not in names:
                        raise SpecError(f"batch {b}: removal of unknown property {ch.get('name')!r}")
                    names.remove(ch["name"])


@dataclass
class GeneratedBatch:
    batch: int
    csv: str
    truth: dict


def _interval(base: str, spec: ScenarioSpec) -> tuple[float, float]:
    return (0.0, spec.width) if base.endswith("-X") else (0.0, spec.height)


def generate_batches(spec: ScenarioSpec) -> list[GeneratedBatch]:
    spec.validate()
    out = []
    shifts: dict[str, tuple[float, float]] = {}  # base name -> (scale, offset)
    names = {c: c for c in BASE_COLUMNS}  # base name -> current column name
    order = list(BASE_COLUMNS)  # base names in column order
    added: dict[str, dict] = {}
    for b in range(1, spec.batches + 1):
        smos = []
        current = {base: names[base] for base in order}
        for ch in spec.changes.get(b, []):
            kind = ch["kind"]
            base_of = {v: k for k, v in current.items()}
            if kind == "semantic-shift":
                base = base_of[ch["property"]]
                s0, o0 = shifts.get(base, (1.0, 0.0))
                scale, offset = float(ch.get("scale", 1.0)), float(ch.get("offset", 0.0))
                shifts[base] = (s0 * scale, o0 * scale + offset)
            elif kind == "rename":
                base = base_of[ch["old"]]
                names[base] = current[base] = ch["new"]
                smos.append({"op": "rename", "old": ch["old"], "new": ch["new"]})
            elif kind == "add-property":
                added[ch["name"]] = dict(ch)
                names[ch["name"]] = current[ch["name"]] = ch["name"]
                order.append(ch["name"])
                smos.append({"op": "add", "name": ch["name"], "dtype": "numeric"})
            else:
                base = base_of[ch["name"]]
                order.remove(base)
                del current[base]
                smos.append({"op": "remove", "name": ch["name"]})
        out.append(_one_batch(spec, b, order, names, shifts, added, smos, spec.changes.get(b, [])))
    return out


def _one_batch(spec: ScenarioSpec, b: int, order: list[str], names: dict[str, str],
               shifts: dict[str, tuple[float, float]], added: dict[str, dict], smos: list[dict],
               changes: list[dict]) -> GeneratedBatch:
    rng = np.random.default_rng([spec.seed, b])
    n = spec.rows
    fx = rng.uniform(0, spec.width, n)
    fy = rng.uniform(0, spec.height, n)
    values: dict[str, Any] = {"Fixation-X": fx, "Fixation-Y": fy}
    for g in GAZE:
        base, hi = (fx, spec.width) if g.endswith("-X") else (fy, spec.height)
        values[g] = np.clip(base + rng.normal(0, spec.gaze_noise, n), 0, hi)
    values["Group"] = np.array([spec.groups[i] for i in rng.integers(0, len(spec.groups), n)], dtype=object)
    for name in sorted(added):
        ch = added[name]
        coupled = ch.get("coupled_to")
        if coupled is not None:
            src = next(k for k, v in names.items() if v == coupled or k == coupled)
            x = values[src]
            z = (x - x.mean()) / x.std()
            w = float(ch.get("weight", 0.9))
            values[name] = float(ch.get("mean", 3.5)) + float(ch.get("std", 0.5)) * (
                w * z + np.sqrt(max(1 - w * w, 0.0)) * rng.normal(0, 1, n))
        else:
            values[name] = rng.normal(float(ch.get("mean", 3.5)), float(ch.get("std", 0.5)), n)

    intervals = {}
    for base in GAZE + FIXATION:
        lo, hi = _interval(base, spec)
        scale, offset = shifts.get(base, (1.0, 0.0))
        values[base] = values[base] * scale + offset
        intervals[base] = tuple(sorted((lo * scale + offset, hi * scale + offset)))

    truth_missing: dict[str, list[int]] = {}
    truth_viol: dict[str, list[int]] = {}
    for base in order:
        col = names[base]
        taken = np.zeros(n, dtype=bool)
        rate_v = spec.violations.get(base, 0.0)
        if base in intervals and rate_v > 0:
            rows = np.sort(rng.choice(n, int(round(rate_v * n)), replace=False))
            lo, hi = intervals[base]
            excess = rng.uniform(1.0, spec.max_excess, len(rows))
            upper = rng.random(len(rows)) < 0.5
            values[base] = values[base].copy()
            values[base][rows] = np.where(upper, hi + excess, lo - excess)
            taken[rows] = True
            truth_viol[col] = rows.tolist()
        rate_m = added[base].get("missing_rate", 0.0) if base in added else spec.missing.get(base, 0.0)
        if rate_m > 0:
            pool = np.flatnonzero(~taken)
            rows = np.sort(rng.choice(pool, int(round(rate_m * n)), replace=False))
            values[base] = values[base].copy()
            if values[base].dtype == object:
                values[base][rows] = None
            else:
                values[base][rows] = np.nan
            truth_missing[col] = rows.tolist()

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([names[base] for base in order])
    cols = [values[base] for base in order]
    for i in range(n):
        row = []
        for c in cols:
            v = c[i]
            if v is None or (isinstance(v, float) and np.isnan(v)):
                row.append("")
            elif isinstance(v, str):
                row.append(v)
            else:
                row.append(f"{float(v):.4f}")
        writer.writerow(row)
    truth = {"batch": b, "rows": n, "columns": [names[base] for base in order], "missing": truth_missing,
             "violations": truth_viol, "smos": smos, "changes": copy.deepcopy(changes),
             "intervals": {names[base]: list(iv) for base, iv in intervals.items() if base in order}}
    return GeneratedBatch(b, buf.getvalue(), truth)


def project_config(spec: ScenarioSpec) -> dict:
    """Project configuration for the first batch: screen intervals and the group domain."""
    intervals = {p: list(_interval(p, spec)) for p in GAZE + FIXATION}
    return {"constraints": {"intervals": intervals, "domains": {"Group": list(spec.groups)}},
            "type_overrides": {"Group": "categorical"}}


def write_scenario(spec: ScenarioSpec, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    truths = []
    for g in generate_batches(spec):
        p = out / f"batch_{g.batch:03d}.csv"
        p.write_text(g.csv, encoding="utf-8")
        written.append(p)
        truths.append({**g.truth, "file": p.name})
    for name, doc in (("truth.json", {"spec": spec.to_dict(), "batches": truths}),
                      ("config.json", project_config(spec))):
        p = out / name
        p.write_text(_canonical.dumps(doc) + "\n", encoding="utf-8")
        written.append(p)
    return written
