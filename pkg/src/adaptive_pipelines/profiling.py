"""Data profiles, profile diffs and data assertions."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np

from .exceptions import DegenerateRangeWarning, SchemaMismatch
from .model import Batch, DType, Schema

NUMERIC_STATS = ("count", "missing_count", "mean", "std", "min", "max", "q1", "q2", "q3", "outlier_count")
CATEGORICAL_STATS = ("missing_count", "distinct_count", "frequencies", "proportions", "mode")
TEXT_STATS = ("missing_count", "total_word_count", "vocabulary_size", "top_words", "mean_length")


@dataclass(frozen=True)
class Significance:
    mean_shift: float = 0.5
    quantile_shift: float = 0.5
    missing_rate: float = 0.1
    tv_distance: float = 0.2
    epsilon: float = 1e-9


@dataclass(frozen=True)
class ProfileConfig:
    numeric: bool = True
    categorical: bool = True
    textual: bool = True
    outlier_method: str = "zscore"
    z_threshold: float = 3.0
    iqr_factor: float = 1.5
    top_k: int = 20
    correlations: bool = True
    significance: Significance = field(default_factory=Significance)

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.outlier_method not in ("zscore", "iqr"):
            raise ValueError(f"unknown outlier method {self.outlier_method!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["significance"] = dict(self.significance.__dict__)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ProfileConfig:
        d = dict(d)
        sig = Significance(**d.pop("significance", {}))
        return cls(significance=sig, **d)


def outlier_mask(values: np.ndarray, method: str = "zscore", z: float = 3.0, iqr_factor: float = 1.5) -> np.ndarray:
    """Boolean mask of outliers among finite ``values``."""
    if len(values) == 0:
        return np.zeros(0, dtype=bool)
    if method == "zscore":
        std = values.std()
        if std == 0:
            return np.zeros(len(values), dtype=bool)
        return np.abs(values - values.mean()) > z * std
    q1, q3 = np.quantile(values, [0.25, 0.75])
    iqr = q3 - q1
    return (values < q1 - iqr_factor * iqr) | (values > q3 + iqr_factor * iqr)


@dataclass
class NumericStats:
    count: int
    missing_count: int
    mean: float | None = None
    std: float | None = None
    min: float | None = None
    max: float | None = None
    q1: float | None = None
    q2: float | None = None
    q3: float | None = None
    outlier_count: int | None = None

    kind = "numeric"

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: getattr(self, k) for k in NUMERIC_STATS}}


@dataclass
class CategoricalStats:
    missing_count: int
    distinct_count: int | None = None
    frequencies: dict[str, int] | None = None
    proportions: dict[str, float] | None = None
    mode: str | None = None

    kind = "categorical"

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: getattr(self, k) for k in CATEGORICAL_STATS}}


@dataclass
class TextStats:
    missing_count: int
    total_word_count: int | None = None
    vocabulary_size: int | None = None
    top_words: list[tuple[str, int]] | None = None
    mean_length: float | None = None

    kind = "textual"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, **{k: getattr(self, k) for k in TEXT_STATS}}
        if self.top_words is not None:
            d["top_words"] = [[w, c] for w, c in self.top_words]
        return d


Stats = NumericStats | CategoricalStats | TextStats


def _stats_from_dict(d: Mapping) -> Stats:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "numeric":
        return NumericStats(**d)
    if kind == "categorical":
        return CategoricalStats(**d)
    if d.get("top_words") is not None:
        d["top_words"] = [(w, c) for w, c in d["top_words"]]
    return TextStats(**d)


@dataclass
class DataProfile:
    schema: Schema
    row_count: int
    stats: dict[str, Stats]
    correlations: dict[str, dict[str, float | None]] | None = None

    def missing_rate(self, name: str) -> float:
        if self.row_count == 0:
            return 0.0
        return self.stats[name].missing_count / self.row_count

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "row_count": self.row_count,
            "stats": {n: s.to_dict() for n, s in self.stats.items()},
            "correlations": self.correlations,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> DataProfile:
        return cls(Schema.from_dict(d["schema"]), d["row_count"],
                   {n: _stats_from_dict(s) for n, s in d["stats"].items()}, d.get("correlations"))

    def renamed(self, mapping: Mapping[str, str]) -> DataProfile:
        """Copy with properties renamed (used to align profiles across a schema rename)."""
        schema = Schema.of((mapping.get(p.name, p.name), p.dtype) for p in self.schema.properties)
        stats = {mapping.get(n, n): s for n, s in self.stats.items()}
        corr = None
        if self.correlations is not None:
            corr = {mapping.get(a, a): {mapping.get(b, b): r for b, r in row.items()}
                    for a, row in self.correlations.items()}
        return DataProfile(schema, self.row_count, stats, corr)


def _numeric_stats(col: np.ndarray, missing: np.ndarray, config: ProfileConfig) -> NumericStats:
    values = col[~np.isnan(col)]
    n_missing = len(col) - len(values)
    if not config.numeric:
        return NumericStats(count=len(values), missing_count=n_missing)
    if len(values) == 0:
        return NumericStats(count=0, missing_count=n_missing, outlier_count=0)
    q1, q2, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    outliers = outlier_mask(values, config.outlier_method, config.z_threshold, config.iqr_factor)
    return NumericStats(
        count=len(values), missing_count=n_missing,
        mean=float(values.mean()), std=float(values.std()),
        min=float(values.min()), max=float(values.max()),
        q1=float(q1), q2=float(q2), q3=float(q3),
        outlier_count=int(outliers.sum()),
    )


def _categorical_stats(col: np.ndarray, config: ProfileConfig) -> CategoricalStats:
    values = [v for v in col if v is not None]
    n_missing = len(col) - len(values)
    if not config.categorical:
        return CategoricalStats(missing_count=n_missing)
    freq = Counter(values)
    total = len(values)
    frequencies = {k: freq[k] for k in sorted(freq)}
    proportions = {k: c / total for k, c in frequencies.items()}
    mode = min(freq, key=lambda k: (-freq[k], k)) if freq else None
    return CategoricalStats(n_missing, len(freq), frequencies, proportions, mode)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _text_stats(col: np.ndarray, config: ProfileConfig) -> TextStats:
    values = [v for v in col if v is not None]
    n_missing = len(col) - len(values)
    if not config.textual:
        return TextStats(missing_count=n_missing)
    words: Counter[str] = Counter()
    total = 0
    for v in values:
        toks = tokenize(v)
        total += len(toks)
        words.update(toks)
    top = sorted(words.items(), key=lambda kv: (-kv[1], kv[0]))[: config.top_k]
    mean_length = float(np.mean([len(v) for v in values])) if values else None
    return TextStats(n_missing, total, len(words), top, mean_length)


def _correlations(batch: Batch, names: list[str]) -> dict[str, dict[str, float | None]]:
    out: dict[str, dict[str, float | None]] = {}
    for i, a in enumerate(names):
        out[a] = {}
        for b in names:
            if a == b:
                out[a][b] = 1.0
                continue
            x, y = batch.columns[a], batch.columns[b]
            ok = ~np.isnan(x) & ~np.isnan(y)
            if ok.sum() < 2:
                out[a][b] = None
                continue
            xa, ya = x[ok] - x[ok].mean(), y[ok] - y[ok].mean()
            denom = math.sqrt(float((xa * xa).sum()) * float((ya * ya).sum()))
            out[a][b] = float((xa * ya).sum()) / denom if denom > 0 else None
    return out


def build_profile(batch: Batch, schema: Schema, config: ProfileConfig = ProfileConfig()) -> DataProfile:
    """Profile ``batch`` under ``schema``; statistics ignore missing cells."""
    if set(batch.names) != set(schema.names):
        raise SchemaMismatch(f"batch properties {sorted(batch.names)} != schema {sorted(schema.names)}")
    stats: dict[str, Stats] = {}
    for prop in sorted(schema.properties, key=lambda p: p.name):
        col = batch.columns[prop.name]
        if prop.dtype == DType.NUMERIC:
            if col.dtype == object:
                raise SchemaMismatch(f"property {prop.name!r} is not conformed to numeric")
            stats[prop.name] = _numeric_stats(col, None, config)
        elif prop.dtype == DType.CATEGORICAL:
            stats[prop.name] = _categorical_stats(col, config)
        else:
            stats[prop.name] = _text_stats(col, config)
    corr = None
    if config.correlations and config.numeric:
        corr = _correlations(batch, sorted(schema.names_of(DType.NUMERIC)))
    return DataProfile(schema, batch.n_rows, stats, corr)


def schema_profile(batch: Batch, schema: Schema) -> DataProfile:
    """Cheap profile carrying only the schema and row count."""
    return DataProfile(schema, batch.n_rows, {}, None)


# ---------------------------------------------------------------- diffs

@dataclass(frozen=True)
class DiffEntry:
    property: str
    kind: str  # property-added | property-removed | dtype-changed | stat-delta
    statistic: str | None
    old: Any
    new: Any
    significant: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DataProfileDiff:
    entries: list[DiffEntry]

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def significant(self) -> list[DiffEntry]:
        return [e for e in self.entries if e.significant]

    def significant_properties(self) -> set[str]:
        return {e.property for e in self.entries if e.significant}

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping) -> DataProfileDiff:
        return cls([DiffEntry(**e) for e in d["entries"]])


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _scaled_shift(old: float | None, new: float | None, std_old: float | None, t: float, eps: float) -> bool:
    if old is None or new is None:
        return old is not new
    return abs(new - old) > t * max(std_old or 0.0, eps)


def diff_profiles(old: DataProfile, new: DataProfile, config: ProfileConfig = ProfileConfig()) -> DataProfileDiff:
    sig = config.significance
    entries: list[DiffEntry] = []
    old_names, new_names = set(old.schema.names), set(new.schema.names)
    for name in sorted(old_names - new_names):
        entries.append(DiffEntry(name, "property-removed", None, old.schema.dtype_of(name).value, None, True))
    for name in sorted(new_names - old_names):
        entries.append(DiffEntry(name, "property-added", None, None, new.schema.dtype_of(name).value, True))
    for name in sorted(old_names & new_names):
        dt_old, dt_new = old.schema.dtype_of(name), new.schema.dtype_of(name)
        if dt_old != dt_new:
            entries.append(DiffEntry(name, "dtype-changed", "dtype", dt_old.value, dt_new.value, True))
            continue
        s_old, s_new = old.stats.get(name), new.stats.get(name)
        if s_old is None or s_new is None:
            continue
        r_old, r_new = old.missing_rate(name), new.missing_rate(name)
        if r_old != r_new:
            entries.append(DiffEntry(name, "stat-delta", "missing_rate", r_old, r_new,
                                     abs(r_new - r_old) > sig.missing_rate))
        if isinstance(s_old, NumericStats):
            for stat in NUMERIC_STATS:
                a, b = getattr(s_old, stat), getattr(s_new, stat)
                if a == b:
                    continue
                if stat == "mean":
                    flag = _scaled_shift(a, b, s_old.std, sig.mean_shift, sig.epsilon)
                elif stat in ("q1", "q2", "q3"):
                    flag = _scaled_shift(a, b, s_old.std, sig.quantile_shift, sig.epsilon)
                else:
                    flag = False
                entries.append(DiffEntry(name, "stat-delta", stat, a, b, flag))
        elif isinstance(s_old, CategoricalStats):
            for stat in CATEGORICAL_STATS:
                a, b = getattr(s_old, stat), getattr(s_new, stat)
                if a == b:
                    continue
                flag = False
                if stat == "proportions" and a is not None and b is not None:
                    flag = total_variation(a, b) > sig.tv_distance
                entries.append(DiffEntry(name, "stat-delta", stat, a, b, flag))
        else:
            for stat in TEXT_STATS:
                a, b = getattr(s_old, stat), getattr(s_new, stat)
                if a != b:
                    entries.append(DiffEntry(name, "stat-delta", stat, a, b, False))
    return DataProfileDiff(entries)


# ---------------------------------------------------------------- assertions

@dataclass(frozen=True)
class DataAssertion:
    property: str
    kind: str  # dtype | range | null-rate-max | category-domain
    dtype: DType | None = None
    lo: float | None = None
    hi: float | None = None
    max_rate: float | None = None
    categories: frozenset[str] | None = None
    slack: float = 0.0

    def __post_init__(self):
        if self.kind == "range" and self.lo > self.hi:
            raise ValueError("range assertion needs lo <= hi")
        if self.kind == "null-rate-max" and not 0.0 <= self.max_rate <= 1.0:
            raise ValueError("null-rate bound must lie in [0, 1]")

    @property
    def key(self) -> tuple[str, str]:
        return (self.property, self.kind)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"property": self.property, "kind": self.kind, "slack": self.slack}
        if self.kind == "dtype":
            d["dtype"] = self.dtype.value
        elif self.kind == "range":
            d["lo"], d["hi"] = self.lo, self.hi
        elif self.kind == "null-rate-max":
            d["max_rate"] = self.max_rate
        else:
            d["categories"] = sorted(self.categories)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> DataAssertion:
        return cls(d["property"], d["kind"],
                   dtype=DType(d["dtype"]) if "dtype" in d else None,
                   lo=d.get("lo"), hi=d.get("hi"), max_rate=d.get("max_rate"),
                   categories=frozenset(d["categories"]) if "categories" in d else None,
                   slack=d.get("slack", 0.0))


def _range_bounds(stats: NumericStats, slack: float) -> tuple[float, float]:
    lo, hi = stats.min, stats.max
    if hi == lo:
        warnings.warn(f"degenerate range at {lo}; widened to [{lo - 1}, {hi + 1}]", DegenerateRangeWarning,
                      stacklevel=3)
        return lo - 1.0, hi + 1.0
    width = hi - lo
    return lo - slack * width, hi + slack * width


def generate_assertions(profile: DataProfile, slack: float = 0.05, null_margin: float = 0.1) -> list[DataAssertion]:
    if not 0 <= slack < 1:
        raise ValueError("slack must lie in [0, 1)")
    out: list[DataAssertion] = []
    for prop in profile.schema.properties:
        name = prop.name
        out.append(DataAssertion(name, "dtype", dtype=prop.dtype, slack=slack))
        stats = profile.stats.get(name)
        if stats is None:
            continue
        out.append(DataAssertion(name, "null-rate-max", max_rate=min(1.0, profile.missing_rate(name) + null_margin),
                                 slack=slack))
        if isinstance(stats, NumericStats) and stats.min is not None:
            lo, hi = _range_bounds(stats, slack)
            out.append(DataAssertion(name, "range", lo=lo, hi=hi, slack=slack))
        elif isinstance(stats, CategoricalStats) and stats.frequencies is not None:
            out.append(DataAssertion(name, "category-domain", categories=frozenset(stats.frequencies), slack=slack))
    return out


def update_assertions(current: list[DataAssertion], fresh_profile: DataProfile, alpha: float = 1.0,
                      slack: float | None = None, null_margin: float = 0.1) -> list[DataAssertion]:
    """Blend fresh-batch assertions into ``current``; bounds only ever widen."""
    if not 0 < alpha <= 1:
        raise ValueError("smoothing factor must lie in (0, 1]")
    if slack is None:
        slack = next((a.slack for a in current), 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateRangeWarning)
        fresh = {a.key: a for a in generate_assertions(fresh_profile, slack, null_margin)}
    out: list[DataAssertion] = []
    seen = set()
    for a in current:
        seen.add(a.key)
        f = fresh.get(a.key)
        if f is None:
            out.append(a)
        elif a.kind == "range":
            lo = min(a.lo, f.lo * alpha + a.lo * (1 - alpha))
            hi = max(a.hi, f.hi * alpha + a.hi * (1 - alpha))
            out.append(replace(a, lo=lo, hi=hi))
        elif a.kind == "null-rate-max":
            out.append(replace(a, max_rate=min(1.0, max(a.max_rate, alpha * f.max_rate + (1 - alpha) * a.max_rate))))
        elif a.kind == "category-domain":
            out.append(replace(a, categories=a.categories | f.categories))
        else:
            out.append(a)
    out.extend(f for k, f in fresh.items() if k not in seen)
    return out


def rename_assertions(assertions: Iterable[DataAssertion], mapping: Mapping[str, str],
                      dropped: Iterable[str] = ()) -> list[DataAssertion]:
    dropped = set(dropped)
    return [replace(a, property=mapping.get(a.property, a.property)) for a in assertions if a.property not in dropped]


@dataclass(frozen=True)
class AssertionResult:
    assertion: DataAssertion
    passed: bool
    violating_rows: int
    sample_rows: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"assertion": self.assertion.to_dict(), "passed": self.passed,
                "violating_rows": self.violating_rows, "sample_rows": list(self.sample_rows)}


@dataclass
class AssertionReport:
    results: list[AssertionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[AssertionResult]:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "results": [r.to_dict() for r in self.results]}

    @classmethod
    def from_dict(cls, d: Mapping) -> AssertionReport:
        return cls([AssertionResult(DataAssertion.from_dict(r["assertion"]), r["passed"], r["violating_rows"],
                                    tuple(r["sample_rows"])) for r in d["results"]])


def _violations(batch: Batch, a: DataAssertion) -> np.ndarray:
    n = batch.n_rows
    if a.property not in batch.columns:
        return np.ones(n, dtype=bool)
    col = batch.columns[a.property]
    missing = batch.missing_mask(a.property)
    if a.kind == "null-rate-max":
        rate = missing.sum() / n if n else 0.0
        return missing if rate > a.max_rate else np.zeros(n, dtype=bool)
    if a.kind == "dtype":
        if a.dtype == DType.NUMERIC:
            if col.dtype == object:
                return np.array([v is not None and not isinstance(v, float) for v in col], dtype=bool)
            return batch.invalid_mask(a.property).copy()
        if col.dtype != object:
            return ~np.isnan(col)
        return np.zeros(n, dtype=bool)
    if a.kind == "range":
        if col.dtype == object:
            return np.zeros(n, dtype=bool)
        with np.errstate(invalid="ignore"):
            return ~np.isnan(col) & ((col < a.lo) | (col > a.hi))
    # category-domain
    return np.array([v is not None and str(v) not in a.categories for v in col], dtype=bool)


def check_assertions(batch: Batch, assertions: Iterable[DataAssertion]) -> AssertionReport:
    results = []
    for a in assertions:
        bad = _violations(batch, a)
        idx = np.flatnonzero(bad)
        results.append(AssertionResult(a, len(idx) == 0, int(len(idx)), tuple(int(i) for i in idx[:10])))
    return AssertionReport(results)
