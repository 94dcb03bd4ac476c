"""Shared builders for the test-suite."""

from __future__ import annotations

from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np

from adaptive_pipelines.config import ProjectConfig
from adaptive_pipelines.errors import ConstraintSet, DetectionConfig, ErrorType, detect_errors
from adaptive_pipelines.evolution import SMO
from adaptive_pipelines.model import Batch, Schema, conform, extract_schema, ingest
from adaptive_pipelines.operators import OpClass, OperatorSpec
from adaptive_pipelines.optimizer import (SearchSpace, Slot, apply_rules, build_search_space, default_param_grids,
                                          partition_independent)
from adaptive_pipelines.profiling import build_profile
from adaptive_pipelines.scenario import ScenarioSpec, generate_batches, project_config

SCREEN = {"ET-GazeLeft-X": (0.0, 1920.0), "ET-GazeLeft-Y": (0.0, 1080.0), "ET-GazeRight-X": (0.0, 1920.0),
          "ET-GazeRight-Y": (0.0, 1080.0), "Fixation-X": (0.0, 1920.0), "Fixation-Y": (0.0, 1080.0)}
GROUPS = ("group1", "group2", "group3")
EYE_CONSTRAINTS = ConstraintSet(dict(SCREEN), {"Group": frozenset(GROUPS)})
NO_OUTLIERS = DetectionConfig(outlier_method="none")


def typed(columns: Mapping[str, Sequence[Any]], dtypes: Mapping[str, str] | None = None,
          batch_id: int = 0) -> tuple[Batch, Schema]:
    """A conformed batch from python lists (``None`` marks a missing cell)."""
    n = len(next(iter(columns.values())))
    rows = [{k: v[i] for k, v in columns.items()} for i in range(n)]
    raw = Batch.from_rows(rows, batch_id, columns=list(columns))
    schema = extract_schema(raw, dtypes)
    return conform(raw, schema), schema


def numeric_batch(data: Mapping[str, Sequence[float | None]]) -> tuple[Batch, Schema]:
    return typed(data, {k: "numeric" for k in data})


@lru_cache(maxsize=None)
def _scenario(rows: int, seed: int, batches: int, changes_key: str) -> tuple:
    import json
    spec = ScenarioSpec(rows=rows, seed=seed, batches=batches,
                        changes={int(k): v for k, v in json.loads(changes_key).items()})
    return tuple(generate_batches(spec)), spec


def scenario(rows: int = 1000, seed: int = 42, batches: int = 1, changes: Mapping[int, list] | None = None):
    """Generated scenario batches (cached); returns (generated batches, spec)."""
    import json
    return _scenario(rows, seed, batches, json.dumps({str(k): v for k, v in (changes or {}).items()},
                                                     sort_keys=True))


def eye_config(spec: ScenarioSpec) -> ProjectConfig:
    return ProjectConfig.from_dict(project_config(spec))


def load(csv_text: str, cfg: ProjectConfig, schema: Schema | None = None, batch_id: int = 1) -> tuple[Batch, Schema]:
    raw = ingest(csv_text, "csv")
    raw.batch_id = batch_id
    schema = schema or extract_schema(raw, cfg.type_overrides)
    return conform(raw, schema, strict=False), schema


def eye_batch(rows: int = 1000, seed: int = 42) -> tuple[Batch, Schema, dict]:
    gen, spec = scenario(rows, seed)
    batch, schema = load(gen[0].csv, eye_config(spec))
    return batch, schema, gen[0].truth


def column(batch: Batch, name: str) -> list:
    return [batch.value(i, name) for i in range(batch.n_rows)]


def rng_batch(rng: np.random.Generator, n: int, names: Sequence[str] = ("a", "b", "c"), p_missing: float = 0.2,
              lo: float = -50, hi: float = 150) -> tuple[Batch, Schema]:
    """Random numeric batch with missing cells and values on both sides of [0, 100]."""
    data = {}
    for name in names:
        v = rng.uniform(lo, hi, n).round(2)
        col: list[float | None] = [float(x) for x in v]
        for i in np.flatnonzero(rng.random(n) < p_missing):
            col[i] = None
        data[name] = col
    return numeric_batch(data)


# ---------------------------------------------------------------- search spaces

def flat_space(n_slots, candidates_per_slot=None):
    """A space of ``n_slots`` ordering-relevant slots with constant-impute candidates."""
    candidates_per_slot = candidates_per_slot or {}
    slots = []
    for i in range(1, n_slots + 1):
        k = candidates_per_slot.get(i, 1)
        cands = [OperatorSpec(f"s{i:02d}", "impute_constant", (f"p{i}",), {"value": v}) for v in range(k)]
        slots.append(Slot(i, f"p{i}", ErrorType.MISSING_VALUE, OpClass.MISSING_VALUE_IMPUTATION, cands))
    return SearchSpace(slots, [s.id for s in slots])


def tiny_space(seed, rows=500):
    """A random space with 2-4 ordering-relevant slots and at most 3 candidates each."""
    rng = np.random.default_rng(seed)
    n_props = int(rng.integers(1, 3))
    names = ["a", "b", "c"][:n_props + 1]
    batch, schema = rng_batch(rng, rows, names, p_missing=float(rng.uniform(0.02, 0.2)))
    constraints = ConstraintSet({n: (0.0, 100.0) for n in names[:n_props]})
    ep = detect_errors(batch, schema, constraints, NO_OUTLIERS)
    prof = build_profile(batch, schema)
    space = build_search_space(ep, param_grids=default_param_grids(schema, constraints, prof, overrides={
        "impute_constant": [{"value": 50.0}, {"value": 0.0}], "replace_with_constant": [{"value": "@center",
                                                                                        "lo": "@lo", "hi": "@hi"}]}))
    space = apply_rules(space, prof, ep, constraints=constraints)
    for slot in space.slots:
        picks = rng.permutation(len(slot.candidates))[:int(rng.integers(1, 4))]
        slot.candidates = [slot.candidates[i] for i in sorted(picks)]
    space.slots = space.slots[:4]
    space.ordering_relevant = [s.id for s in space.slots]
    space = partition_independent(space)
    return space, batch, schema, constraints


# ---------------------------------------------------------------- schema edit scripts

def random_world(rnd, n_props):
    """Columns with well separated distributions so identity is recoverable from the data."""
    cols, dtypes = {}, {}
    for i in range(n_props):
        name = f"prop{i}"
        if rnd.random() < 0.25:
            cats = [f"c{i}_{j}" for j in range(3)]
            p = rnd.dirichlet(np.ones(3) * (i + 1))
            cols[name] = list(rnd.choice(cats, 200, p=p))
            dtypes[name] = "categorical"
        else:
            cols[name] = [float(v) for v in rnd.normal(1000 * (i + 1), 10, 200)]
            dtypes[name] = "numeric"
    return cols, dtypes


def random_script(rnd, cols, dtypes, length):
    cols, dtypes = dict(cols), dict(dtypes)
    script = []
    fresh = 0
    for _ in range(length):
        kind = rnd.choice(["rename", "remove", "add"])
        if kind == "rename" and cols:
            old = sorted(cols)[rnd.integers(0, len(cols))]
            fresh += 1
            new = f"renamed{fresh}"
            cols[new], dtypes[new] = cols.pop(old), dtypes.pop(old)
            script.append(SMO.rename(old, new))
        elif kind == "remove" and len(cols) > 1:
            old = sorted(cols)[rnd.integers(0, len(cols))]
            cols.pop(old)
            dtypes.pop(old)
            script.append(SMO.remove(old))
        else:
            fresh += 1
            new = f"added{fresh}"
            cols[new] = [float(v) for v in rnd.normal(-5000 * fresh, 10, 200)]
            dtypes[new] = "numeric"
            script.append(SMO.add(new, "numeric"))
    return cols, dtypes, script




def profiled(cols, dtypes):
    b, s = typed(cols, dtypes)
    return s, build_profile(b, s)
