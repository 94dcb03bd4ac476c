"""Cleaning operator catalog, access sets and the static commutation test."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import _canonical
from .errors import TABLE
from .exceptions import IncompatibleDtype, InsufficientData, InvalidOperator, MissingProperty
from .model import Batch, DType
from .profiling import CategoricalStats, DataProfile, NumericStats


class OpClass(str, Enum):
    MISSING_VALUE_IMPUTATION = "missing_value_imputation"
    INTERVAL_REPAIR = "interval_repair"
    OUTLIER_HANDLING = "outlier_handling"
    DEDUPLICATION = "deduplication"
    STANDARDIZATION = "standardization"


BATCH_LOCAL = "batch-local"
HISTORIC = "historic"


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # number | int | value | names | domain
    required: bool = False
    default: Any = None
    doc: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "required": self.required, "default": self.default,
                "doc": self.doc}


@dataclass(frozen=True)
class Algorithm:
    name: str
    op_class: OpClass
    dtypes: frozenset[DType]
    params: tuple[Param, ...]
    fn: Callable[..., Batch] = field(repr=False, compare=False)
    derivation: str | None = None  # set when the algorithm computes a statistic from the data
    removes_rows: bool = False
    mutates: bool = True
    idempotent: bool = False
    cost: float = 1.0
    needs_targets: bool = True

    @property
    def data_derived(self) -> bool:
        return self.derivation is not None

    def param(self, name: str) -> Param | None:
        return next((p for p in self.params if p.name == name), None)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "class": self.op_class.value, "dtypes": sorted(d.value for d in self.dtypes),
            "params": [p.to_dict() for p in self.params], "derivation": self.derivation,
            "removes_rows": self.removes_rows, "mutates": self.mutates, "idempotent": self.idempotent,
            "cost": self.cost,
        }


@dataclass
class OperatorSpec:
    id: str
    algorithm: str
    targets: tuple[str, ...] = ()
    params: dict[str, Any] = field(default_factory=dict)
    semantic_context: str = BATCH_LOCAL

    def __post_init__(self):
        self.targets = tuple(self.targets)
        self.params = {k: v for k, v in self.params.items() if v is not None}
        if self.semantic_context not in (BATCH_LOCAL, HISTORIC):
            raise InvalidOperator(f"unknown semantic context {self.semantic_context!r}")

    @property
    def op_class(self) -> OpClass:
        return get_algorithm(self.algorithm).op_class

    def to_dict(self) -> dict:
        return {"id": self.id, "class": self.op_class.value, "algorithm": self.algorithm,
                "targets": list(self.targets), "params": _canonical.normalize(self.params),
                "semantic_context": self.semantic_context}

    @classmethod
    def from_dict(cls, d: Mapping) -> OperatorSpec:
        spec = cls(d["id"], d["algorithm"], tuple(d.get("targets", ())), dict(d.get("params", {})),
                   d.get("semantic_context", BATCH_LOCAL))
        if "class" in d and d["class"] != spec.op_class.value:
            raise InvalidOperator(f"algorithm {spec.algorithm} is not in class {d['class']}")
        return spec

    def copy(self, **changes) -> OperatorSpec:
        d = {"id": self.id, "algorithm": self.algorithm, "targets": self.targets,
             "params": _canonical.loads(_canonical.dumps(self.params)), "semantic_context": self.semantic_context}
        d.update(changes)
        return OperatorSpec(**d)

    def key(self) -> str:
        return _canonical.dumps(self.to_dict())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OperatorSpec):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())


@dataclass(frozen=True)
class AccessSets:
    read: frozenset[str]
    write: frozenset[str]


# ---------------------------------------------------------------- helpers

def _numeric(batch: Batch, name: str, spec: OperatorSpec) -> np.ndarray:
    if name not in batch.columns:
        raise MissingProperty(name, spec.id)
    col = batch.columns[name]
    if col.dtype == object:
        raise IncompatibleDtype(f"{spec.algorithm} needs a numeric property, {name!r} is not")
    return col


def _column(batch: Batch, name: str, spec: OperatorSpec) -> np.ndarray:
    if name not in batch.columns:
        raise MissingProperty(name, spec.id)
    return batch.columns[name]


def _holes(col: np.ndarray) -> np.ndarray:
    """Cells without a usable value (missing or unparsable)."""
    if col.dtype != object:
        return np.isnan(col)
    return np.fromiter((v is None for v in col), dtype=bool, count=len(col))


def _window(history: Sequence[DataProfile] | None, spec: OperatorSpec) -> list[DataProfile]:
    if spec.semantic_context != HISTORIC or not history:
        return []
    window = spec.params.get("history_window")
    hist = list(history)
    if window is not None:
        hist = hist[len(hist) - int(window):] if int(window) > 0 else []
    return hist


def _pooled_moments(values: np.ndarray, name: str, hist: list[DataProfile]) -> tuple[float, float, int]:
    """Pooled mean and population std over the current values and historic profiles."""
    n = len(values)
    s1 = float(values.sum())
    s2 = float((values * values).sum())
    for p in hist:
        st = p.stats.get(name)
        if isinstance(st, NumericStats) and st.count and st.mean is not None:
            n += st.count
            s1 += st.count * st.mean
            s2 += st.count * (st.std ** 2 + st.mean ** 2)
    if n == 0:
        return math.nan, math.nan, 0
    mean = s1 / n
    return mean, math.sqrt(max(s2 / n - mean * mean, 0.0)), n


def _location(values: np.ndarray, name: str, hist: list[DataProfile], stat: str) -> float:
    if stat == "mean":
        mean, _, n = _pooled_moments(values, name, hist)
        return mean
    # median: count-weighted average of per-batch medians
    total = len(values)
    acc = float(np.median(values)) * len(values) if len(values) else 0.0
    for p in hist:
        st = p.stats.get(name)
        if isinstance(st, NumericStats) and st.count and st.q2 is not None:
            total += st.count
            acc += st.count * st.q2
    return acc / total if total else math.nan


# ---------------------------------------------------------------- algorithms

def _impute_constant(batch: Batch, spec: OperatorSpec, history) -> Batch:
    value = spec.params["value"]
    updates = {}
    for name in spec.targets:
        col = _column(batch, name, spec)
        holes = _holes(col)
        new = col.copy()
        if col.dtype != object:
            if isinstance(value, str) or value is None:
                raise IncompatibleDtype(f"constant {value!r} is not numeric for {name!r}")
            new[holes] = float(value)
        else:
            fill = value if isinstance(value, str) else _format_number(value)
            for i in np.flatnonzero(holes):
                new[i] = fill
        updates[name] = new
    return batch.with_columns(updates)


def _format_number(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _impute_stat(stat: str):
    def fn(batch: Batch, spec: OperatorSpec, history) -> Batch:
        hist = _window(history, spec)
        updates = {}
        for name in spec.targets:
            col = _numeric(batch, name, spec)
            holes = np.isnan(col)
            values = col[~holes]
            if len(values) == 0 and not hist:
                raise InsufficientData(f"{spec.algorithm} on {name!r}: no observed values")
            fill = _location(values, name, hist, stat)
            if math.isnan(fill):
                raise InsufficientData(f"{spec.algorithm} on {name!r}: no observed values")
            new = col.copy()
            new[holes] = fill
            updates[name] = new
        return batch.with_columns(updates)
    return fn


def _impute_mode(batch: Batch, spec: OperatorSpec, history) -> Batch:
    hist = _window(history, spec)
    updates = {}
    for name in spec.targets:
        col = _column(batch, name, spec)
        holes = _holes(col)
        if col.dtype != object:
            freq = Counter(col[~holes].tolist())
        else:
            freq = Counter(v for v in col if v is not None)
        for p in hist:
            st = p.stats.get(name)
            if isinstance(st, CategoricalStats) and st.frequencies:
                freq.update(st.frequencies)
        if not freq:
            raise InsufficientData(f"impute_mode on {name!r}: no observed values")
        mode = min(freq, key=lambda k: (-freq[k], str(k)))
        new = col.copy()
        if col.dtype != object:
            new[holes] = float(mode)
        else:
            for i in np.flatnonzero(holes):
                new[i] = mode
        updates[name] = new
    return batch.with_columns(updates)


def knn_impute_column(target: np.ndarray, features: np.ndarray, k: int) -> np.ndarray:
    """Fill NaNs in ``target`` with the mean target of the ``k`` nearest donor rows.

    Donors are rows with target and every feature present. Distance is Euclidean
    over the features present in the query row; ties go to the lower row index.
    A query row with no usable feature gets the donor mean.
    """
    out = target.copy()
    holes = np.flatnonzero(np.isnan(target))
    if len(holes) == 0:
        return out
    donor_mask = ~np.isnan(target)
    if features.shape[1]:
        donor_mask &= ~np.isnan(features).any(axis=1)
    donors = np.flatnonzero(donor_mask)
    if len(donors) == 0:
        raise InsufficientData("impute_knn: no complete donor rows")
    kk = min(k, len(donors))
    donor_feat = features[donors]
    donor_y = target[donors]
    for row in holes:
        q = features[row]
        usable = ~np.isnan(q)
        if not usable.any():
            out[row] = donor_y.mean()
            continue
        diff = donor_feat[:, usable] - q[usable]
        dist = np.sqrt((diff * diff).sum(axis=1))
        near = np.arange(len(dist))
        if kk < len(dist):
            near = np.flatnonzero(dist <= np.partition(dist, kk - 1)[kk - 1])
        order = near[np.lexsort((donors[near], dist[near]))][:kk]
        out[row] = donor_y[order].mean()
    return out


def _impute_knn(batch: Batch, spec: OperatorSpec, history) -> Batch:
    k = int(spec.params.get("k", 5))
    if k < 1:
        raise InvalidOperator("impute_knn needs k >= 1")
    feats = list(spec.params.get("features") or [])
    updates = {}
    for name in spec.targets:
        target = _numeric(batch, name, spec)
        fnames = [f for f in feats if f != name]
        cols = [_numeric(batch, f, spec) for f in fnames]
        features = np.column_stack(cols) if cols else np.empty((len(target), 0))
        updates[name] = knn_impute_column(target, features, k)
    return batch.with_columns(updates)


def _bounds(spec: OperatorSpec) -> tuple[float, float]:
    lo, hi = spec.params.get("lo"), spec.params.get("hi")
    if lo is None or hi is None:
        raise InvalidOperator(f"{spec.algorithm} needs both lo and hi")
    lo, hi = float(lo), float(hi)
    if lo > hi:
        raise InvalidOperator(f"{spec.algorithm}: lo > hi")
    return lo, hi


def _out_of_domain(col: np.ndarray, spec: OperatorSpec) -> np.ndarray:
    domain = spec.params.get("domain")
    if domain is None:
        raise InvalidOperator(f"{spec.algorithm} on a categorical property needs a domain")
    domain = set(domain)
    return np.fromiter((v is not None and v not in domain for v in col), dtype=bool, count=len(col))


def _clamp(batch: Batch, spec: OperatorSpec, history) -> Batch:
    lo, hi = _bounds(spec)
    updates = {}
    for name in spec.targets:
        col = _numeric(batch, name, spec)
        updates[name] = np.where(np.isnan(col), col, np.clip(col, lo, hi))
    return batch.with_columns(updates)


def _replace_out_of_bounds(batch: Batch, spec: OperatorSpec, fill) -> Batch:
    updates = {}
    for name in spec.targets:
        col = _column(batch, name, spec)
        new = col.copy()
        if col.dtype != object:
            lo, hi = _bounds(spec)
            with np.errstate(invalid="ignore"):
                bad = ~np.isnan(col) & ((col < lo) | (col > hi))
            new[bad] = np.nan if fill is None else float(fill)
        else:
            bad = _out_of_domain(col, spec)
            for i in np.flatnonzero(bad):
                new[i] = fill if fill is None or isinstance(fill, str) else _format_number(fill)
        updates[name] = new
    return batch.with_columns(updates)


def _replace_with_constant(batch: Batch, spec: OperatorSpec, history) -> Batch:
    if "value" not in spec.params:
        raise InvalidOperator("replace_with_constant needs a value")
    return _replace_out_of_bounds(batch, spec, spec.params["value"])


def _set_to_missing(batch: Batch, spec: OperatorSpec, history) -> Batch:
    return _replace_out_of_bounds(batch, spec, None)


def _remove_row_zscore(batch: Batch, spec: OperatorSpec, history) -> Batch:
    z = float(spec.params.get("z", 3.0))
    hist = _window(history, spec)
    drop = np.zeros(batch.n_rows, dtype=bool)
    for name in spec.targets:
        col = _numeric(batch, name, spec)
        present = ~np.isnan(col)
        mean, std, n = _pooled_moments(col[present], name, hist)
        if n == 0 or std == 0:
            continue
        drop |= present & (np.abs(col - mean) > z * std)
    return batch.take(~drop) if drop.any() else batch


def _winsorize_iqr(batch: Batch, spec: OperatorSpec, history) -> Batch:
    f = float(spec.params.get("factor", 1.5))
    hist = _window(history, spec)
    updates = {}
    for name in spec.targets:
        col = _numeric(batch, name, spec)
        values = col[~np.isnan(col)]
        if len(values) == 0:
            continue
        q1, q3 = np.quantile(values, [0.25, 0.75])
        weight = len(values)
        q1, q3 = q1 * weight, q3 * weight
        for p in hist:
            st = p.stats.get(name)
            if isinstance(st, NumericStats) and st.count and st.q1 is not None:
                q1 += st.q1 * st.count
                q3 += st.q3 * st.count
                weight += st.count
        q1, q3 = q1 / weight, q3 / weight
        iqr = q3 - q1
        updates[name] = np.where(np.isnan(col), col, np.clip(col, q1 - f * iqr, q3 + f * iqr))
    return batch.with_columns(updates)


def _flag_lof(batch: Batch, spec: OperatorSpec, history) -> Batch:
    from sklearn.neighbors import LocalOutlierFactor

    k = int(spec.params.get("k", 20))
    threshold = float(spec.params.get("threshold", 1.5))
    cols = [_numeric(batch, n, spec) for n in spec.targets]
    data = np.column_stack(cols)
    ok = np.flatnonzero(~np.isnan(data).any(axis=1))
    flagged: tuple[int, ...] = ()
    if len(ok) > k:
        lof = LocalOutlierFactor(n_neighbors=k)
        lof.fit(data[ok])
        scores = -lof.negative_outlier_factor_
        flagged = tuple(int(i) for i in ok[scores > threshold])
    out = Batch(dict(batch.columns), batch.batch_id, dict(batch.invalid), dict(batch.flags))
    out.flags[spec.id] = flagged
    return out


def _drop_duplicates(batch: Batch, spec: OperatorSpec, history) -> Batch:
    from .errors import _duplicate_mask

    key = spec.params.get("key")
    if key is not None:
        for name in key:
            _column(batch, name, spec)
    dup = _duplicate_mask(batch, key)
    return batch.take(~dup) if dup.any() else batch


def _standardize(batch: Batch, spec: OperatorSpec, history) -> Batch:
    hist = _window(history, spec)
    updates = {}
    for name in spec.targets:
        col = _numeric(batch, name, spec)
        present = ~np.isnan(col)
        mean, std, n = _pooled_moments(col[present], name, hist)
        if n == 0:
            continue
        updates[name] = (col - mean) / std if std > 0 else col - mean
    return batch.with_columns(updates)


ALL_TYPES = frozenset(DType)
NUM = frozenset({DType.NUMERIC})
NUM_CAT = frozenset({DType.NUMERIC, DType.CATEGORICAL})

CATALOG: dict[str, Algorithm] = {a.name: a for a in [
    Algorithm("impute_constant", OpClass.MISSING_VALUE_IMPUTATION, ALL_TYPES,
              (Param("value", "value", required=True),), _impute_constant, idempotent=True, cost=1),
    Algorithm("impute_mean", OpClass.MISSING_VALUE_IMPUTATION, NUM,
              (Param("history_window", "int"),), _impute_stat("mean"), derivation="mean-of-current-batch", cost=1),
    Algorithm("impute_median", OpClass.MISSING_VALUE_IMPUTATION, NUM,
              (Param("history_window", "int"),), _impute_stat("median"), derivation="median-of-current-batch",
              cost=2),
    Algorithm("impute_mode", OpClass.MISSING_VALUE_IMPUTATION, ALL_TYPES,
              (Param("history_window", "int"),), _impute_mode, derivation="mode-of-current-batch", cost=2),
    Algorithm("impute_knn", OpClass.MISSING_VALUE_IMPUTATION, NUM,
              (Param("k", "int", default=5), Param("features", "names", default=[])), _impute_knn,
              derivation="nearest-neighbours-of-current-batch", cost=10),
    Algorithm("clamp_to_bounds", OpClass.INTERVAL_REPAIR, NUM,
              (Param("lo", "number", required=True), Param("hi", "number", required=True)), _clamp,
              idempotent=True, cost=1),
    Algorithm("replace_with_constant", OpClass.INTERVAL_REPAIR, NUM_CAT,
              (Param("value", "value", required=True), Param("lo", "number"), Param("hi", "number"),
               Param("domain", "domain")), _replace_with_constant, idempotent=True, cost=1),
    Algorithm("set_to_missing", OpClass.INTERVAL_REPAIR, NUM_CAT,
              (Param("lo", "number"), Param("hi", "number"), Param("domain", "domain")), _set_to_missing,
              idempotent=True, cost=1),
    Algorithm("remove_row_zscore", OpClass.OUTLIER_HANDLING, NUM,
              (Param("z", "number", default=3.0), Param("history_window", "int")), _remove_row_zscore,
              derivation="zscore-of-current-batch", removes_rows=True, cost=2),
    Algorithm("winsorize_iqr", OpClass.OUTLIER_HANDLING, NUM,
              (Param("factor", "number", default=1.5), Param("history_window", "int")), _winsorize_iqr,
              derivation="quartiles-of-current-batch", cost=2),
    Algorithm("flag_lof", OpClass.OUTLIER_HANDLING, NUM,
              (Param("k", "int", default=20), Param("threshold", "number", default=1.5)), _flag_lof,
              derivation="local-outlier-factor-of-current-batch", mutates=False, idempotent=True, cost=10),
    Algorithm("drop_exact_duplicates", OpClass.DEDUPLICATION, ALL_TYPES,
              (Param("key", "names"),), _drop_duplicates, removes_rows=True, idempotent=True, cost=3,
              needs_targets=False),
    Algorithm("zscore_standardize", OpClass.STANDARDIZATION, NUM,
              (Param("history_window", "int"),), _standardize, derivation="moments-of-current-batch", cost=1),
]}


def get_algorithm(name: str) -> Algorithm:
    try:
        return CATALOG[name]
    except KeyError:
        raise InvalidOperator(f"unknown algorithm {name!r}") from None


def algorithms_of(op_class: OpClass, catalog: Mapping[str, Algorithm] = CATALOG) -> list[Algorithm]:
    return [a for a in catalog.values() if a.op_class == op_class]


def catalog_json(catalog: Mapping[str, Algorithm] = CATALOG) -> str:
    """Catalog introspection (algorithms and parameter schemas) as canonical JSON."""
    return _canonical.dumps({"algorithms": [a.to_dict() for a in catalog.values()]})


def _check_param(p: Param, value: Any) -> str | None:
    if value is None:
        return None
    if p.kind == "number" and (isinstance(value, bool) or not isinstance(value, (int, float))):
        return f"{p.name} must be a number"
    if p.kind == "int" and (isinstance(value, bool) or not isinstance(value, int)):
        return f"{p.name} must be an integer"
    if p.kind in ("names", "domain") and not (isinstance(value, (list, tuple)) and all(
            isinstance(v, str) for v in value)):
        return f"{p.name} must be a list of strings"
    return None


def validate_spec(spec: OperatorSpec) -> list[str]:
    """Problems with the operator spec's algorithm and parameters (empty when valid)."""
    algo = CATALOG.get(spec.algorithm)
    if algo is None:
        return [f"unknown algorithm {spec.algorithm!r}"]
    problems = []
    if algo.needs_targets and not spec.targets:
        problems.append("target_properties must be non-empty")
    for name in spec.params:
        p = algo.param(name)
        if p is None:
            problems.append(f"unknown parameter {name!r} for {algo.name}")
            continue
        msg = _check_param(p, spec.params[name])
        if msg:
            problems.append(msg)
    for p in algo.params:
        if p.required and spec.params.get(p.name) is None:
            problems.append(f"missing required parameter {p.name!r}")
    return problems


def apply_operator(batch: Batch, spec: OperatorSpec, history: Sequence[DataProfile] | None = None) -> Batch:
    """Run one operator on a typed batch and return the resulting batch (the input is not modified)."""
    problems = validate_spec(spec)
    if problems:
        raise InvalidOperator(f"{spec.id}: " + "; ".join(problems))
    for name in spec.targets:
        if name not in batch.columns:
            raise MissingProperty(name, spec.id)
    return CATALOG[spec.algorithm].fn(batch, spec, history)


def access_sets(spec: OperatorSpec) -> AccessSets:
    algo = get_algorithm(spec.algorithm)
    targets = frozenset(spec.targets)
    if algo.name == "drop_exact_duplicates":
        return AccessSets(frozenset({TABLE}), frozenset({TABLE}))
    read = set(targets)
    if algo.name == "impute_knn":
        read |= set(spec.params.get("features") or ())
    if algo.removes_rows:
        return AccessSets(frozenset(read), frozenset({TABLE}))
    if not algo.mutates:
        return AccessSets(frozenset(read), frozenset())
    return AccessSets(frozenset(read), targets)


def _within(value: Any, lo: Any, hi: Any) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool) and lo is not None and hi is not None
            and float(lo) <= float(value) <= float(hi))


def _blind_pair(a: OperatorSpec, b: OperatorSpec) -> bool:
    """An interval repair that only rewrites out-of-bound values and an in-bounds constant
    imputation touch disjoint cells and leave each other's cells alone."""
    for rep, imp in ((a, b), (b, a)):
        if imp.algorithm != "impute_constant" or rep.algorithm not in ("clamp_to_bounds", "replace_with_constant"):
            continue
        lo, hi = rep.params.get("lo"), rep.params.get("hi")
        if not _within(imp.params.get("value"), lo, hi):
            continue
        if rep.algorithm == "replace_with_constant" and not _within(rep.params.get("value"), lo, hi):
            continue
        return True
    return False


def commutes(a: OperatorSpec, b: OperatorSpec) -> bool:
    """Static, conservative test that ``a`` then ``b`` equals ``b`` then ``a`` on every batch."""
    try:
        sa, sb = access_sets(a), access_sets(b)
    except InvalidOperator:
        return False
    if TABLE in sa.write or TABLE in sb.write:
        return False
    conflicts = (sa.write & sb.write) | (sa.write & sb.read) | (sb.write & sa.read)
    if not conflicts:
        return True
    if set(a.targets) != set(b.targets) or set(a.targets) != sa.read or set(b.targets) != sb.read:
        return False
    return _blind_pair(a, b)
