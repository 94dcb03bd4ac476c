"""Tabular batches, schemas and data-type inference.

A batch is stored column-wise. Before a schema is applied (``raw`` batches) every
column is an object array holding ``None`` (the missing marker), ``float`` or
``str``. :func:`conform` turns a raw batch into a typed one: numeric columns
become ``float64`` arrays where ``NaN`` is the missing marker, and cells that
failed to parse are remembered in ``Batch.invalid``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Any, Iterable, Iterator, Mapping

import numpy as np

from .exceptions import AllMissing, EmptyBatch, InconsistentColumns, ParseError, SchemaMismatch

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "NaN", "null"})


class DType(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    TEXTUAL = "textual"


@dataclass(frozen=True)
class TypeInferenceConfig:
    numeric_parse_rate: float = 0.95
    max_distinct_ratio: float = 0.2
    max_categories: int = 100


@dataclass(frozen=True)
class PropertyDescriptor:
    name: str
    dtype: DType

    def __post_init__(self):
        if not self.name:
            raise ValueError("property name must be non-empty")
        object.__setattr__(self, "dtype", DType(self.dtype))


@dataclass(frozen=True, eq=False)
class Schema:
    """Ordered property list. Equality and hashing go through the fingerprint,
    so two schemas with the same (name, dtype) set are equal regardless of order."""

    properties: tuple[PropertyDescriptor, ...]

    def __post_init__(self):
        props = tuple(self.properties)
        object.__setattr__(self, "properties", props)
        names = [p.name for p in props]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate property names in schema: {names}")

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, DType | str]]) -> Schema:
        return cls(tuple(PropertyDescriptor(n, DType(d)) for n, d in pairs))

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.properties]

    @property
    def fingerprint(self) -> str:
        pairs = sorted((p.name, p.dtype.value) for p in self.properties)
        return hashlib.sha256(json.dumps(pairs).encode()).hexdigest()[:16]

    def dtype_of(self, name: str) -> DType:
        for p in self.properties:
            if p.name == name:
                return p.dtype
        raise KeyError(name)

    def names_of(self, dtype: DType) -> list[str]:
        return [p.name for p in self.properties if p.dtype == dtype]

    def __contains__(self, name: object) -> bool:
        return any(p.name == name for p in self.properties)

    def __len__(self) -> int:
        return len(self.properties)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Schema):
            return NotImplemented
        return self.fingerprint == other.fingerprint

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    def to_dict(self) -> dict:
        return {"properties": [{"name": p.name, "dtype": p.dtype.value} for p in self.properties],
                "fingerprint": self.fingerprint}

    @classmethod
    def from_dict(cls, d: Mapping) -> Schema:
        return cls.of((p["name"], p["dtype"]) for p in d["properties"])


def _is_missing(v: Any) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def parse_number(token: Any) -> float | None:
    """Parse ``token`` as a number; ``None`` if it does not parse."""
    if isinstance(token, bool):
        return None
    if isinstance(token, (int, float)):
        return float(token)
    try:
        return float(str(token).strip())
    except ValueError:
        return None


def _clean_value(v: Any, missing_tokens: frozenset[str]) -> Any:
    if v is None:
        return None
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    s = str(v)
    if s in missing_tokens:
        return None
    return s


@dataclass(eq=False)
class Batch:
    """An ordered collection of rows, stored as one array per property."""

    columns: dict[str, np.ndarray]
    batch_id: int = 0
    invalid: dict[str, np.ndarray] = field(default_factory=dict)
    flags: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(c) for c in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have different lengths: {lengths}")

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def n_rows(self) -> int:
        for c in self.columns.values():
            return len(c)
        return 0

    def __len__(self) -> int:
        return self.n_rows

    def is_typed(self, name: str) -> bool:
        return self.columns[name].dtype != object

    def missing_mask(self, name: str) -> np.ndarray:
        col = self.columns[name]
        if col.dtype != object:
            mask = np.isnan(col)
            inv = self.invalid.get(name)
            return mask & ~inv if inv is not None else mask
        return np.fromiter((v is None for v in col.tolist()), dtype=bool, count=len(col))

    def invalid_mask(self, name: str) -> np.ndarray:
        inv = self.invalid.get(name)
        return inv if inv is not None else np.zeros(self.n_rows, dtype=bool)

    def value(self, row: int, name: str) -> Any:
        v = self.columns[name][row]
        if isinstance(v, (float, np.floating)):
            return None if math.isnan(v) else float(v)
        return v

    def rows(self) -> Iterator[dict[str, Any]]:
        names = self.names
        for i in range(self.n_rows):
            yield {n: self.value(i, n) for n in names}

    def with_columns(self, updates: Mapping[str, np.ndarray]) -> Batch:
        """Copy with some columns replaced. Cells that were invalid and got a value lose their flag."""
        cols = dict(self.columns)
        invalid = dict(self.invalid)
        for name, arr in updates.items():
            cols[name] = arr
            inv = invalid.get(name)
            if inv is not None:
                if arr.dtype != object:
                    invalid[name] = inv & np.isnan(arr)
                else:
                    invalid[name] = inv & np.fromiter((v is None for v in arr), dtype=bool, count=len(arr))
        return Batch(cols, self.batch_id, invalid, dict(self.flags))

    def take(self, rows: np.ndarray) -> Batch:
        """Copy keeping only ``rows`` (indices or boolean mask), in their original order."""
        cols = {n: c[rows] for n, c in self.columns.items()}
        invalid = {n: m[rows] for n, m in self.invalid.items()}
        return Batch(cols, self.batch_id, invalid, dict(self.flags))

    def rename(self, mapping: Mapping[str, str]) -> Batch:
        cols = {mapping.get(n, n): c for n, c in self.columns.items()}
        invalid = {mapping.get(n, n): m for n, m in self.invalid.items()}
        return Batch(cols, self.batch_id, invalid, dict(self.flags))

    def select(self, names: Iterable[str]) -> Batch:
        names = list(names)
        return Batch({n: self.columns[n] for n in names}, self.batch_id,
                     {n: m for n, m in self.invalid.items() if n in names}, dict(self.flags))

    def __eq__(self, other: object) -> bool:
        """Value-wise equality (batch id and operator flags are ignored)."""
        if not isinstance(other, Batch):
            return NotImplemented
        if self.names != other.names or self.n_rows != other.n_rows:
            return False
        for n in self.names:
            a, b = self.columns[n], other.columns[n]
            if (a.dtype == object) != (b.dtype == object):
                return False
            if a.dtype != object:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
            if not np.array_equal(self.invalid_mask(n), other.invalid_mask(n)):
                return False
        return True

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping[str, Any]], batch_id: int = 0,
                  missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
                  columns: list[str] | None = None) -> Batch:
        rows = list(rows)
        tokens = frozenset(missing_tokens)
        if columns is None:
            columns = []
            seen = set()
            for r in rows:
                for k in r:
                    if k not in seen:
                        seen.add(k)
                        columns.append(k)
        data = {}
        for name in columns:
            arr = np.empty(len(rows), dtype=object)
            for i, r in enumerate(rows):
                arr[i] = _clean_value(r.get(name), tokens)
            data[name] = arr
        return cls(data, batch_id)


def infer_type(raw_values: Iterable[Any], config: TypeInferenceConfig = TypeInferenceConfig(),
               missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> DType:
    """Infer the data type of one column from its raw tokens."""
    tokens = frozenset(missing_tokens)
    values = [v for v in raw_values if not _is_missing(v) and not (isinstance(v, str) and v in tokens)]
    if not values:
        raise AllMissing("every token is null or empty")
    parsed = sum(parse_number(v) is not None for v in values)
    if parsed / len(values) >= config.numeric_parse_rate:
        return DType.NUMERIC
    distinct = len({str(v) for v in values})
    if distinct / len(values) <= config.max_distinct_ratio and distinct <= config.max_categories:
        return DType.CATEGORICAL
    return DType.TEXTUAL


def extract_schema(batch: Batch, overrides: Mapping[str, DType | str] | None = None,
                   config: TypeInferenceConfig = TypeInferenceConfig()) -> Schema:
    if batch.n_rows == 0 or not batch.columns:
        raise EmptyBatch("cannot extract a schema from an empty batch")
    overrides = overrides or {}
    props = []
    for name, col in batch.columns.items():
        if name in overrides:
            dtype = DType(overrides[name])
        elif col.dtype != object:
            dtype = DType.NUMERIC
        else:
            try:
                dtype = infer_type(col, config)
            except AllMissing:
                dtype = DType.TEXTUAL
        props.append(PropertyDescriptor(name, dtype))
    return Schema(tuple(props))


def _format_token(v: Any) -> str:
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    return str(v)


def conform(batch: Batch, schema: Schema, strict: bool = True) -> Batch:
    """Coerce a batch to ``schema``: numeric columns become float arrays (NaN = missing),
    unparsable numeric cells are marked invalid, absent properties are all-missing."""
    if strict:
        extra = set(batch.names) - set(schema.names)
        if extra:
            raise SchemaMismatch(f"batch has properties not in schema: {sorted(extra)}")
    n = batch.n_rows
    cols: dict[str, np.ndarray] = {}
    invalid: dict[str, np.ndarray] = {}
    for prop in schema.properties:
        src = batch.columns.get(prop.name)
        if src is None:
            src = np.full(n, None, dtype=object)
        if prop.dtype == DType.NUMERIC:
            if src.dtype != object:
                cols[prop.name] = src.astype(float)
                if prop.name in batch.invalid:
                    invalid[prop.name] = batch.invalid[prop.name]
                continue
            arr = np.full(n, np.nan)
            bad = np.zeros(n, dtype=bool)
            for i, v in enumerate(src):
                if v is None:
                    continue
                x = parse_number(v)
                if x is None:
                    bad[i] = True
                elif math.isfinite(x):
                    arr[i] = x
            cols[prop.name] = arr
            if bad.any():
                invalid[prop.name] = bad
        else:
            arr = np.empty(n, dtype=object)
            if src.dtype != object:
                arr[:] = [None if math.isnan(v) else _format_token(float(v)) for v in src]
            else:
                arr[:] = [v if v is None or isinstance(v, str) else _format_token(v) for v in src]
            cols[prop.name] = arr
    return Batch(cols, batch.batch_id, invalid, dict(batch.flags))


@dataclass(frozen=True)
class IngestConfig:
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS
    delimiter: str = ","
    batch_id: int = 0


def ingest(source: IO[bytes] | IO[str] | bytes | str, format: str = "csv",
           config: IngestConfig = IngestConfig()) -> Batch:
    """Read a raw batch from CSV or JSON-lines.

    ``source`` is a stream or the content itself. Row order follows the input.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    if text.startswith("﻿"):
        text = text[1:]
    if not text.strip():
        raise EmptyBatch("input is empty")
    if format == "csv":
        return _ingest_csv(text, config)
    if format in ("jsonl", "json-lines", "jsonlines"):
        return _ingest_jsonl(text, config)
    raise ValueError(f"unknown format {format!r}")


def _ingest_csv(text: str, config: IngestConfig) -> Batch:
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=config.delimiter, strict=True)
    try:
        header = next(reader)
    except csv.Error as exc:
        raise ParseError(reader.line_num, str(exc)) from None
    if not header or all(not h for h in header):
        raise EmptyBatch("CSV header is empty")
    if len(set(header)) != len(header):
        raise ParseError(1, "duplicate column names in header")
    rows = []
    try:
        for rec in reader:
            if not rec:
                continue
            if len(rec) != len(header):
                raise InconsistentColumns(reader.line_num, f"expected {len(header)} fields, got {len(rec)}")
            rows.append(dict(zip(header, rec)))
    except csv.Error as exc:
        raise ParseError(reader.line_num, str(exc)) from None
    return Batch.from_rows(rows, config.batch_id, config.missing_tokens, columns=list(header))


def _ingest_jsonl(text: str, config: IngestConfig) -> Batch:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, exc.msg) from None
        if not isinstance(obj, dict):
            raise ParseError(lineno, "expected a JSON object")
        rows.append(obj)
    if not rows:
        raise EmptyBatch("no records")
    return Batch.from_rows(rows, config.batch_id, config.missing_tokens)


def to_csv(batch: Batch, stream: IO[str] | None = None, delimiter: str = ",") -> str | None:
    """Write ``batch`` as CSV; missing cells become empty fields. Returns the text when no stream is given."""
    out = stream if stream is not None else io.StringIO(newline="")
    writer = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    writer.writerow(batch.names)
    cols = [batch.columns[n] for n in batch.names]
    invalid = [batch.invalid.get(n) for n in batch.names]
    for i in range(batch.n_rows):
        rec = []
        for col, inv in zip(cols, invalid):
            v = col[i]
            if v is None or (isinstance(v, float) and math.isnan(v)):
                rec.append("#INVALID" if inv is not None and inv[i] else "")
            elif isinstance(v, (float, np.floating)):
                rec.append(repr(float(v)))
            else:
                rec.append(str(v))
        writer.writerow(rec)
    if stream is None:
        return out.getvalue()
    return None
