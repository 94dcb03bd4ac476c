"""Project configuration: every tunable threshold, rule and policy in one JSON document."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import ConstraintSet, DetectionConfig, QualityWeights, parse_pair
from .exceptions import ConfigError
from .model import DEFAULT_MISSING_TOKENS, DType
from .profiling import ProfileConfig

_NUM = (int, float)


def _take(d: Mapping, key: str, types, path: str, default: Any) -> Any:
    if key not in d or d[key] is None and default is None:
        return default
    v = d[key]
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}.{key}", f"expected {_names(types)}, got a boolean")
    if not isinstance(v, types):
        raise ConfigError(f"{path}.{key}", f"expected {_names(types)}, got {type(v).__name__}")
    return v


def _names(types) -> str:
    types = types if isinstance(types, tuple) else (types,)
    return " or ".join(t.__name__ for t in types)


def _unknown(d: Mapping, allowed: set[str], path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}", "unknown field")


def _section(d: Mapping, key: str, path: str) -> Mapping:
    v = d.get(key, {})
    if not isinstance(v, Mapping):
        raise ConfigError(f"{path}.{key}", "expected an object")
    return v


@dataclass
class OptimizerConfig:
    strategy: str = "beam"
    width: int = 8
    budget: int | None = None
    knn_max_missing: float = 0.5
    rules: list[dict] = field(default_factory=list)  # user forbid rules
    best_practices: list[dict] = field(default_factory=list)
    grids: dict[str, list[dict]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "width": self.width, "budget": self.budget,
                "knn_max_missing": self.knn_max_missing, "rules": self.rules, "best_practices": self.best_practices,
                "grids": self.grids}

    @classmethod
    def from_dict(cls, d: Mapping, path: str = "optimizer") -> OptimizerConfig:
        _unknown(d, {"strategy", "width", "budget", "knn_max_missing", "rules", "best_practices", "grids"}, path)
        c = cls(_take(d, "strategy", str, path, "beam"), _take(d, "width", int, path, 8),
                _take(d, "budget", int, path, None), float(_take(d, "knn_max_missing", _NUM, path, 0.5)),
                list(_take(d, "rules", list, path, [])), list(_take(d, "best_practices", list, path, [])),
                dict(_take(d, "grids", dict, path, {})))
        if c.strategy not in ("beam", "exhaustive"):
            raise ConfigError(f"{path}.strategy", "must be 'beam' or 'exhaustive'")
        if c.width < 1:
            raise ConfigError(f"{path}.width", "must be at least 1")
        if c.budget is not None and c.budget < 1:
            raise ConfigError(f"{path}.budget", "must be positive")
        if not 0 <= c.knn_max_missing <= 1:
            raise ConfigError(f"{path}.knn_max_missing", "must lie in [0, 1]")
        for i, r in enumerate(c.rules):
            if not isinstance(r, Mapping) or "id" not in r or not isinstance(r.get("algorithms"), list):
                raise ConfigError(f"{path}.rules[{i}]", "needs 'id' and an 'algorithms' list")
        for i, bp in enumerate(c.best_practices):
            if not isinstance(bp, Mapping) or bp.get("kind") not in ("pin_algorithm", "pin_order", "insert_support"):
                raise ConfigError(f"{path}.best_practices[{i}].kind", "unknown best practice")
        for algo, grid in c.grids.items():
            if not isinstance(grid, list) or not all(isinstance(p, Mapping) for p in grid):
                raise ConfigError(f"{path}.grids.{algo}", "expected a list of parameter objects")
        return c


@dataclass
class AdaptationConfig:
    enabled: bool = True
    tau: float = 0.05
    retune_violation_jump: float = 0.1
    correlation: float = 0.7
    rename_delta: float = 0.25
    rename_margin: float = 0.1

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping, path: str = "adaptation") -> AdaptationConfig:
        _unknown(d, set(cls.__dataclass_fields__), path)
        c = cls(_take(d, "enabled", bool, path, True),
                *(float(_take(d, k, _NUM, path, getattr(cls, k))) for k in
                  ("tau", "retune_violation_jump", "correlation", "rename_delta", "rename_margin")))
        for k in ("tau", "retune_violation_jump", "correlation", "rename_delta", "rename_margin"):
            if getattr(c, k) < 0:
                raise ConfigError(f"{path}.{k}", "must be non-negative")
        return c


@dataclass
class ProjectConfig:
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    weights: QualityWeights = field(default_factory=QualityWeights)
    type_overrides: dict[str, DType] = field(default_factory=dict)
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    assertion_slack: float = 0.05
    null_margin: float = 0.1
    granularity: str = "full"

    def to_dict(self) -> dict:
        return {"profile": self.profile.to_dict(), "detection": self.detection.to_dict(),
                "constraints": self.constraints.to_dict(), "weights": self.weights.to_dict(),
                "type_overrides": {k: v.value for k, v in sorted(self.type_overrides.items())},
                "missing_tokens": sorted(self.missing_tokens), "optimizer": self.optimizer.to_dict(),
                "adaptation": self.adaptation.to_dict(), "assertion_slack": self.assertion_slack,
                "null_margin": self.null_margin, "granularity": self.granularity}

    @classmethod
    def from_dict(cls, d: Mapping | None) -> ProjectConfig:
        d = d or {}
        if not isinstance(d, Mapping):
            raise ConfigError("$", "expected an object")
        path = "$"
        _unknown(d, {"profile", "detection", "constraints", "weights", "type_overrides", "missing_tokens",
                     "optimizer", "adaptation", "assertion_slack", "null_margin", "granularity"}, path)
        try:
            profile = ProfileConfig.from_dict(_section(d, "profile", path))
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("$.profile", str(exc)) from exc
        det = _section(d, "detection", path)
        _unknown(det, {"outlier_method", "z_threshold", "iqr_factor"}, "$.detection")
        detection = DetectionConfig(_take(det, "outlier_method", str, "$.detection", "zscore"),
                                    float(_take(det, "z_threshold", _NUM, "$.detection", 3.0)),
                                    float(_take(det, "iqr_factor", _NUM, "$.detection", 1.5)))
        if detection.outlier_method not in ("zscore", "iqr", "none"):
            raise ConfigError("$.detection.outlier_method", "must be zscore, iqr or none")
        cons = _section(d, "constraints", path)
        _unknown(cons, {"intervals", "domains", "duplicate_key"}, "$.constraints")
        for name, iv in cons.get("intervals", {}).items():
            if not (isinstance(iv, list) and len(iv) == 2 and all(isinstance(x, _NUM) for x in iv)):
                raise ConfigError(f"$.constraints.intervals.{name}", "expected [lo, hi]")
            if iv[0] > iv[1]:
                raise ConfigError(f"$.constraints.intervals.{name}", "lo must not exceed hi")
        for name, dom in cons.get("domains", {}).items():
            if not (isinstance(dom, list) and all(isinstance(x, str) for x in dom)):
                raise ConfigError(f"$.constraints.domains.{name}", "expected a list of strings")
        constraints = ConstraintSet.from_dict(cons)
        w = _section(d, "weights", path)
        try:
            for k in w.get("weights", {}):
                parse_pair(k)
            weights = QualityWeights.from_dict(w)
        except (TypeError, ValueError) as exc:
            raise ConfigError("$.weights", str(exc)) from exc
        overrides = {}
        for name, t in _section(d, "type_overrides", path).items():
            try:
                overrides[name] = DType(t)
            except ValueError:
                raise ConfigError(f"$.type_overrides.{name}", f"unknown data type {t!r}") from None
        tokens = _take(d, "missing_tokens", list, path, None)
        granularity = _take(d, "granularity", str, path, "full")
        if granularity not in ("full", "schema"):
            raise ConfigError("$.granularity", "must be 'full' or 'schema'")
        return cls(profile, detection, constraints, weights, overrides,
                   DEFAULT_MISSING_TOKENS if tokens is None else frozenset(tokens),
                   OptimizerConfig.from_dict(_section(d, "optimizer", path), "$.optimizer"),
                   AdaptationConfig.from_dict(_section(d, "adaptation", path), "$.adaptation"),
                   float(_take(d, "assertion_slack", _NUM, path, 0.05)),
                   float(_take(d, "null_margin", _NUM, path, 0.1)), granularity)


