"""Error detection, error profiles and the data-quality score."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .exceptions import NoTrackedPairs, SchemaMismatch
from .model import Batch, DType, Schema
from .profiling import outlier_mask

TABLE = "<table>"


class ErrorType(str, Enum):
    MISSING_VALUE = "missing_value"
    INTERVAL_VIOLATION = "interval_violation"
    OUTLIER = "outlier"
    DUPLICATE_ROW = "duplicate_row"
    TYPE_MISMATCH = "type_mismatch"


ERROR_ORDER = {e: i for i, e in enumerate(ErrorType)}

Pair = tuple[str, ErrorType]


def pair_key(pair: Pair) -> str:
    return f"{pair[0]}|{pair[1].value}"


def parse_pair(key: str) -> Pair:
    prop, _, err = key.rpartition("|")
    return prop, ErrorType(err)


@dataclass
class ConstraintSet:
    """Domain constraints used by the detectors.

    ``intervals`` bound numeric properties; ``domains`` list the admissible tokens
    of categorical properties (a token outside the domain counts as an
    interval violation); ``duplicate_key`` restricts duplicate detection.
    """

    intervals: dict[str, tuple[float, float]] = field(default_factory=dict)
    domains: dict[str, frozenset[str]] = field(default_factory=dict)
    duplicate_key: tuple[str, ...] | None = None

    def __post_init__(self):
        self.intervals = {k: (float(lo), float(hi)) for k, (lo, hi) in self.intervals.items()}
        for name, (lo, hi) in self.intervals.items():
            if lo > hi:
                raise ValueError(f"interval for {name!r} has lo > hi")
        self.domains = {k: frozenset(v) for k, v in self.domains.items()}
        if self.duplicate_key is not None:
            self.duplicate_key = tuple(self.duplicate_key)

    def renamed(self, mapping: Mapping[str, str], dropped: Iterable[str] = ()) -> ConstraintSet:
        dropped = set(dropped)
        key = None
        if self.duplicate_key is not None:
            key = tuple(mapping.get(k, k) for k in self.duplicate_key if k not in dropped)
        return ConstraintSet(
            {mapping.get(k, k): v for k, v in self.intervals.items() if k not in dropped},
            {mapping.get(k, k): v for k, v in self.domains.items() if k not in dropped},
            key,
        )

    def to_dict(self) -> dict:
        return {
            "intervals": {k: list(v) for k, v in sorted(self.intervals.items())},
            "domains": {k: sorted(v) for k, v in sorted(self.domains.items())},
            "duplicate_key": list(self.duplicate_key) if self.duplicate_key is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ConstraintSet:
        return cls({k: tuple(v) for k, v in d.get("intervals", {}).items()},
                   {k: frozenset(v) for k, v in d.get("domains", {}).items()},
                   d.get("duplicate_key"))


@dataclass(frozen=True)
class DetectionConfig:
    outlier_method: str = "zscore"  # zscore | iqr | none
    z_threshold: float = 3.0
    iqr_factor: float = 1.5

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def infer_intervals(batch: Batch, schema: Schema, factor: float = 3.0) -> dict[str, tuple[float, float]]:
    """Fallback intervals ``[q1 - f*IQR, q3 + f*IQR]`` from a (design) batch."""
    out = {}
    for name in schema.names_of(DType.NUMERIC):
        col = batch.columns[name]
        values = col[~np.isnan(col)]
        if len(values) == 0:
            continue
        q1, q3 = np.quantile(values, [0.25, 0.75])
        iqr = q3 - q1
        out[name] = (float(q1 - factor * iqr), float(q3 + factor * iqr))
    return out


@dataclass(frozen=True)
class ErrorEntry:
    property: str | None
    row: int
    error_type: ErrorType


@dataclass
class ErrorProfile:
    row_count: int
    counts: dict[Pair, int]
    entries: list[ErrorEntry] | None = None

    @property
    def aggregates(self) -> dict[Pair, dict[str, float]]:
        return {k: {"count": c, "rate": self.rate(k)} for k, c in self.counts.items()}

    def rate(self, pair: Pair) -> float:
        c = self.counts.get(pair, 0)
        return c / self.row_count if self.row_count else 0.0

    def targets(self) -> list[Pair]:
        """Pairs with at least one error, in a canonical order."""
        return sorted((k for k, c in self.counts.items() if c > 0),
                      key=lambda k: (ERROR_ORDER.get(k[1], len(ERROR_ORDER)), k[0], str(k[1])))

    def __bool__(self) -> bool:
        return any(self.counts.values())

    def positions(self, pair: Pair) -> list[int]:
        if self.entries is None:
            raise ValueError("profile was built without cell positions")
        prop = None if pair[0] == TABLE else pair[0]
        return [e.row for e in self.entries if e.property == prop and e.error_type == pair[1]]

    def renamed(self, mapping: Mapping[str, str]) -> ErrorProfile:
        counts = {(mapping.get(p, p), e): c for (p, e), c in self.counts.items()}
        entries = None
        if self.entries is not None:
            entries = [ErrorEntry(mapping.get(e.property, e.property) if e.property else None, e.row, e.error_type)
                       for e in self.entries]
        return ErrorProfile(self.row_count, counts, entries)

    def to_dict(self) -> dict:
        d = {
            "row_count": self.row_count,
            "aggregates": {pair_key(k): {"count": c, "rate": self.rate(k)} for k, c in sorted(
                self.counts.items(), key=lambda kv: pair_key(kv[0]))},
        }
        if self.entries is not None:
            d["entries"] = [{"property": e.property, "row": e.row, "error_type": e.error_type.value}
                            for e in self.entries]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ErrorProfile:
        counts = {parse_pair(k): v["count"] for k, v in d["aggregates"].items()}
        entries = None
        if "entries" in d:
            entries = [ErrorEntry(e["property"], e["row"], ErrorType(e["error_type"])) for e in d["entries"]]
        return cls(d["row_count"], counts, entries)


def _duplicate_mask(batch: Batch, key: Iterable[str] | None) -> np.ndarray:
    """Rows equal to an earlier row on ``key`` (all properties when None); missing cells compare equal."""
    names = list(key) if key is not None else batch.names
    n = batch.n_rows
    if n == 0 or not names:
        return np.zeros(n, dtype=bool)
    codes = np.empty((n, len(names)), dtype=np.int64)
    for j, name in enumerate(names):
        col = batch.columns[name]
        if col.dtype != object:
            bits = col.astype(np.float64) + 0.0  # folds -0.0 into 0.0
            bits[np.isnan(bits)] = np.nan  # one bit pattern for every missing cell
            codes[:, j] = bits.view(np.int64)
        else:
            ids: dict = {}
            codes[:, j] = [ids.setdefault(v, len(ids)) for v in col.tolist()]
    rows = np.ascontiguousarray(codes).view(np.dtype((np.void, codes.itemsize * codes.shape[1]))).ravel()
    _, first = np.unique(rows, return_index=True)
    dup = np.ones(n, dtype=bool)
    dup[first] = False
    return dup


def error_masks(batch: Batch, schema: Schema, constraints: ConstraintSet,
                config: DetectionConfig = DetectionConfig()) -> dict[Pair, np.ndarray]:
    """Cell-level boolean masks per (property, error type); the workhorse behind :func:`detect_errors`."""
    if set(batch.names) != set(schema.names):
        raise SchemaMismatch(f"batch properties {sorted(batch.names)} != schema {sorted(schema.names)}")
    masks: dict[Pair, np.ndarray] = {}
    for prop in schema.properties:
        name = prop.name
        col = batch.columns[name]
        missing = batch.missing_mask(name)
        masks[(name, ErrorType.MISSING_VALUE)] = missing
        if prop.dtype == DType.NUMERIC:
            if col.dtype == object:
                raise SchemaMismatch(f"property {name!r} is not conformed to numeric")
            masks[(name, ErrorType.TYPE_MISMATCH)] = batch.invalid_mask(name)
            present = ~np.isnan(col)
            violation = np.zeros(len(col), dtype=bool)
            if name in constraints.intervals:
                lo, hi = constraints.intervals[name]
                with np.errstate(invalid="ignore"):
                    violation = present & ((col < lo) | (col > hi))
                masks[(name, ErrorType.INTERVAL_VIOLATION)] = violation
            if config.outlier_method != "none":
                pool = present & ~violation
                values = col[pool]
                out = np.zeros(len(col), dtype=bool)
                if len(values):
                    out[pool] = outlier_mask(values, config.outlier_method, config.z_threshold, config.iqr_factor)
                masks[(name, ErrorType.OUTLIER)] = out
        elif name in constraints.domains:
            domain = constraints.domains[name]
            masks[(name, ErrorType.INTERVAL_VIOLATION)] = np.fromiter(
                (v is not None and v not in domain for v in col), dtype=bool, count=len(col))
    masks[(TABLE, ErrorType.DUPLICATE_ROW)] = _duplicate_mask(batch, constraints.duplicate_key)
    return masks


def detect_errors(batch: Batch, schema: Schema, constraints: ConstraintSet | None = None,
                  config: DetectionConfig = DetectionConfig(), positions: bool = True) -> ErrorProfile:
    """Build the error profile of ``batch``.

    Only pairs with at least one error appear in the aggregates. With
    ``positions=False`` the cell-level entries are skipped (the optimizer's fast path).
    """
    masks = error_masks(batch, schema, constraints or ConstraintSet(), config)
    counts = {}
    entries: list[ErrorEntry] | None = [] if positions else None
    for pair in sorted(masks, key=lambda k: (ERROR_ORDER[k[1]], k[0])):
        m = masks[pair]
        c = int(m.sum())
        if c == 0:
            continue
        counts[pair] = c
        if entries is not None:
            prop = None if pair[0] == TABLE else pair[0]
            entries.extend(ErrorEntry(prop, int(i), pair[1]) for i in np.flatnonzero(m))
    if entries is not None:
        entries.sort(key=lambda e: (e.row, e.property or "", ERROR_ORDER[e.error_type]))
    return ErrorProfile(batch.n_rows, counts, entries)


def tracked_pairs(schema: Schema, constraints: ConstraintSet | None = None,
                  config: DetectionConfig = DetectionConfig()) -> list[Pair]:
    """Every (property, error type) pair the detectors can report for ``schema``."""
    constraints = constraints or ConstraintSet()
    pairs: list[Pair] = []
    for prop in schema.properties:
        pairs.append((prop.name, ErrorType.MISSING_VALUE))
        if prop.dtype == DType.NUMERIC:
            pairs.append((prop.name, ErrorType.TYPE_MISMATCH))
            if prop.name in constraints.intervals:
                pairs.append((prop.name, ErrorType.INTERVAL_VIOLATION))
            if config.outlier_method != "none":
                pairs.append((prop.name, ErrorType.OUTLIER))
        elif prop.name in constraints.domains:
            pairs.append((prop.name, ErrorType.INTERVAL_VIOLATION))
    pairs.append((TABLE, ErrorType.DUPLICATE_ROW))
    return pairs


@dataclass
class QualityWeights:
    weights: dict[Pair, float] = field(default_factory=dict)
    default: float = 1.0

    def __post_init__(self):
        if self.default < 0 or any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative")
        if self.default == 0 and not any(w > 0 for w in self.weights.values()):
            raise ValueError("at least one weight must be positive")

    def weight(self, pair: Pair) -> float:
        return self.weights.get(pair, self.default)

    def scaled(self, k: float) -> QualityWeights:
        return QualityWeights({p: w * k for p, w in self.weights.items()}, self.default * k)

    def renamed(self, mapping: Mapping[str, str]) -> QualityWeights:
        return QualityWeights({(mapping.get(p, p), e): w for (p, e), w in self.weights.items()}, self.default)

    def to_dict(self) -> dict:
        return {"default": self.default, "weights": {pair_key(k): w for k, w in sorted(
            self.weights.items(), key=lambda kv: pair_key(kv[0]))}}

    @classmethod
    def from_dict(cls, d: Mapping) -> QualityWeights:
        return cls({parse_pair(k): float(w) for k, w in d.get("weights", {}).items()}, float(d.get("default", 1.0)))


def quality_score(error_profile: ErrorProfile, weights: QualityWeights | None = None,
                  tracked: Iterable[Pair] = ()) -> float:
    """``1 - sum(w * rate) / sum(w)`` over the observed pairs plus ``tracked``, skipping zero weights.

    With nothing to score (no errors and no tracked pairs) the data is clean and the score is 1.
    """
    weights = weights or QualityWeights()
    pairs = set(error_profile.counts) | set(tracked)
    if not pairs:
        return 1.0
    num = den = 0.0
    for pair in sorted(pairs, key=pair_key):
        w = weights.weight(pair)
        if w == 0:
            continue
        num += w * error_profile.rate(pair)
        den += w
    if den == 0:
        raise NoTrackedPairs("all tracked pairs have zero weight")
    return 1.0 - num / den


@dataclass(frozen=True)
class ErrorDiffEntry:
    property: str
    error_type: ErrorType
    old_rate: float
    new_rate: float
    novelty: bool
    vanished: bool

    @property
    def delta(self) -> float:
        return self.new_rate - self.old_rate

    def to_dict(self) -> dict:
        return {"property": self.property, "error_type": self.error_type.value, "old_rate": self.old_rate,
                "new_rate": self.new_rate, "delta": self.delta, "novelty": self.novelty, "vanished": self.vanished}


@dataclass
class ErrorProfileDiff:
    entries: list[ErrorDiffEntry]

    def __bool__(self) -> bool:
        return bool(self.entries)

    def novelties(self) -> list[ErrorDiffEntry]:
        return [e for e in self.entries if e.novelty]

    def changed(self) -> list[ErrorDiffEntry]:
        return [e for e in self.entries if e.delta != 0 or e.novelty or e.vanished]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping) -> ErrorProfileDiff:
        return cls([ErrorDiffEntry(e["property"], ErrorType(e["error_type"]), e["old_rate"], e["new_rate"],
                                   e["novelty"], e["vanished"]) for e in d["entries"]])


def diff_error_profiles(old: ErrorProfile, new: ErrorProfile) -> ErrorProfileDiff:
    pairs = sorted({k for k, c in old.counts.items() if c} | {k for k, c in new.counts.items() if c},
                   key=lambda k: (ERROR_ORDER[k[1]], k[0]))
    entries = []
    for pair in pairs:
        r_old, r_new = old.rate(pair), new.rate(pair)
        if r_old == r_new:
            continue  # unchanged pairs carry no information; identical profiles give an empty diff
        entries.append(ErrorDiffEntry(pair[0], pair[1], r_old, r_new, novelty=r_old == 0 and r_new > 0,
                                      vanished=r_old > 0 and r_new == 0))
    return ErrorProfileDiff(entries)
