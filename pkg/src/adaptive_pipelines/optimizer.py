"""Search-space construction, rule-based pruning and quality-driven pipeline search."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from . import _canonical
from .errors import (TABLE, ConstraintSet, DetectionConfig, ErrorProfile, ErrorType, QualityWeights, detect_errors,
                     pair_key, quality_score, tracked_pairs)
from .exceptions import BudgetZero, EmptySlot, PinConflict, PipelineError, UnknownErrorType
from .model import Batch, DType, Schema
from .operators import CATALOG, Algorithm, OpClass, OperatorSpec, algorithms_of, apply_operator, commutes
from .pipeline import PipelineProfile, Provenance, utc_now
from .profiling import CategoricalStats, DataProfile, NumericStats

ERROR_CLASS: dict[ErrorType, OpClass] = {
    ErrorType.MISSING_VALUE: OpClass.MISSING_VALUE_IMPUTATION,
    ErrorType.TYPE_MISMATCH: OpClass.MISSING_VALUE_IMPUTATION,
    ErrorType.INTERVAL_VIOLATION: OpClass.INTERVAL_REPAIR,
    ErrorType.OUTLIER: OpClass.OUTLIER_HANDLING,
    ErrorType.DUPLICATE_ROW: OpClass.DEDUPLICATION,
}


@dataclass
class Slot:
    id: int
    property: str
    error_type: ErrorType | None  # None for support slots added by best practices
    op_class: OpClass
    candidates: list[OperatorSpec]
    removed: list[dict] = field(default_factory=list)

    @property
    def step_id(self) -> str:
        return f"s{self.id:02d}"

    @property
    def key(self) -> str:
        return pair_key((self.property, self.error_type)) if self.error_type else f"{self.property}|support"

    def to_dict(self) -> dict:
        return {"id": self.id, "key": self.key, "property": self.property,
                "error_type": self.error_type.value if self.error_type else None, "class": self.op_class.value,
                "candidates": [c.to_dict() for c in self.candidates], "removed": self.removed}


@dataclass
class SearchSpace:
    slots: list[Slot] = field(default_factory=list)
    ordering_relevant: list[int] = field(default_factory=list)
    order_edges: list[tuple[int, int]] = field(default_factory=list)
    funnel: list[dict] = field(default_factory=list)

    def slot(self, ref: int | str) -> Slot:
        for s in self.slots:
            if ref in (s.id, s.key, s.step_id):
                return s
        raise PinConflict(f"no slot {ref!r} in the search space")

    @property
    def independent(self) -> list[int]:
        rel = set(self.ordering_relevant)
        return sorted(s.id for s in self.slots if s.id not in rel)

    def record(self, stage: str) -> None:
        self.funnel.append({"stage": stage, "slots": len(self.slots), "ordering_relevant": len(self.ordering_relevant),
                            "size": count_space(self)})

    def to_dict(self) -> dict:
        return {"slots": [s.to_dict() for s in self.slots], "ordering_relevant": sorted(self.ordering_relevant),
                "order_edges": sorted(list(e) for e in self.order_edges), "funnel": self.funnel}


# ---------------------------------------------------------------- parameter grids

DEFAULT_GRIDS: dict[str, list[dict]] = {
    "impute_constant": [{"value": "@center"}],
    "impute_mean": [{}],
    "impute_median": [{}],
    "impute_mode": [{}],
    "impute_knn": [{"k": 5, "features": "@others"}],
    "clamp_to_bounds": [{"lo": "@lo", "hi": "@hi"}],
    "replace_with_constant": [{"value": "@center", "lo": "@lo", "hi": "@hi", "domain": "@domain"}],
    "set_to_missing": [{"lo": "@lo", "hi": "@hi", "domain": "@domain"}],
    "remove_row_zscore": [{"z": 3.0}],
    "winsorize_iqr": [{"factor": 1.5}],
    "flag_lof": [{"k": 20, "threshold": 1.5}],
    "drop_exact_duplicates": [{"key": "@key"}],
    "zscore_standardize": [{}],
}


@dataclass
class ParamGrids:
    """Per-algorithm parameter grids whose ``@`` placeholders resolve against the data.

    Placeholders: ``@lo``/``@hi`` (interval bounds), ``@center`` (interval midpoint,
    else median; mode for categoricals), ``@mode``, ``@domain``, ``@others`` (other
    numeric properties) and ``@key`` (duplicate key). Unresolvable placeholders
    leave the parameter unset, which the applicability rules then catch.
    """

    grids: dict[str, list[dict]] = field(default_factory=lambda: copy.deepcopy(DEFAULT_GRIDS))
    schema: Schema | None = None
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    profile: DataProfile | None = None

    def _mode(self, prop: str) -> str | None:
        st = self.profile.stats.get(prop) if self.profile else None
        mode = st.mode if isinstance(st, CategoricalStats) else None
        domain = self.constraints.domains.get(prop)
        if domain and mode not in domain:
            return sorted(domain)[0]
        return mode

    def _resolve(self, token: str, prop: str) -> Any:
        c = self.constraints
        dtype = self.schema.dtype_of(prop) if self.schema is not None and prop in self.schema else None
        lo, hi = c.intervals.get(prop, (None, None))
        if token == "@lo":
            return lo
        if token == "@hi":
            return hi
        if token == "@domain":
            return sorted(c.domains[prop]) if prop in c.domains and dtype != DType.NUMERIC else None
        if token == "@mode":
            return self._mode(prop)
        if token == "@center":
            if dtype == DType.NUMERIC or dtype is None:
                if lo is not None:
                    return (lo + hi) / 2
                st = self.profile.stats.get(prop) if self.profile else None
                return st.q2 if isinstance(st, NumericStats) else None
            return self._mode(prop)
        if token == "@others":
            if self.schema is None:
                return []
            return [n for n in self.schema.names_of(DType.NUMERIC) if n != prop]
        if token == "@key":
            return list(c.duplicate_key) if c.duplicate_key else None
        raise PipelineError(f"unknown grid placeholder {token!r}")

    def points(self, algorithm: str, prop: str) -> list[dict]:
        out = []
        for template in self.grids.get(algorithm, [{}]):
            point = {}
            for k, v in template.items():
                point[k] = self._resolve(v, prop) if isinstance(v, str) and v.startswith("@") else v
            out.append({k: v for k, v in point.items() if v is not None})
        unique = {_canonical.dumps(p): p for p in out}
        return [unique[k] for k in dict.fromkeys(_canonical.dumps(p) for p in out)]


def default_param_grids(schema: Schema, constraints: ConstraintSet | None = None,
                        profile: DataProfile | None = None,
                        overrides: Mapping[str, list[dict]] | None = None) -> ParamGrids:
    grids = copy.deepcopy(DEFAULT_GRIDS)
    grids.update(copy.deepcopy(dict(overrides or {})))
    return ParamGrids(grids, schema, constraints or ConstraintSet(), profile)


# ---------------------------------------------------------------- building

def build_search_space(error_profile: ErrorProfile, catalog: Mapping[str, Algorithm] = CATALOG,
                       param_grids: ParamGrids | None = None) -> SearchSpace:
    """One slot per repair target of ``error_profile``; candidates are algorithms of the class times grid points."""
    grids = param_grids or ParamGrids(grids={})
    space = SearchSpace()
    for i, (prop, etype) in enumerate(error_profile.targets(), start=1):
        if not isinstance(etype, ErrorType) or etype not in ERROR_CLASS:
            raise UnknownErrorType(f"no operator class repairs {etype!r}")
        op_class = ERROR_CLASS[etype]
        slot = Slot(i, prop, etype, op_class, [])
        targets = () if prop == TABLE else (prop,)
        for algo in algorithms_of(op_class, catalog):
            for point in grids.points(algo.name, prop):
                slot.candidates.append(OperatorSpec(slot.step_id, algo.name, targets, point))
        space.slots.append(slot)
    space.ordering_relevant = [s.id for s in space.slots]
    space.record("build")
    return space


# ---------------------------------------------------------------- rules

@dataclass(frozen=True)
class RuleInput:
    slot: Slot
    candidate: OperatorSpec
    dtype: DType | None
    data_profile: DataProfile | None
    error_profile: ErrorProfile
    constraints: ConstraintSet

    @property
    def missing_rate(self) -> float:
        if self.data_profile is not None and self.slot.property in self.data_profile.stats:
            return self.data_profile.missing_rate(self.slot.property)
        return self.error_profile.rate((self.slot.property, ErrorType.MISSING_VALUE))


@dataclass(frozen=True)
class ApplicabilityRule:
    id: str
    algorithms: frozenset[str] | None  # None selects every algorithm
    predicate: Callable[[RuleInput], bool]
    reason: str

    def selects(self, spec: OperatorSpec) -> bool:
        return self.algorithms is None or spec.algorithm in self.algorithms


INTERVAL_ALGOS = frozenset({"clamp_to_bounds", "replace_with_constant", "set_to_missing"})


def builtin_rules(knn_max_missing: float = 0.5, catalog: Mapping[str, Algorithm] = CATALOG
                  ) -> list[ApplicabilityRule]:
    def supported(x: RuleInput) -> bool:
        algo = catalog.get(x.candidate.algorithm)
        return algo is not None and (x.dtype is None or x.dtype in algo.dtypes)

    return [
        ApplicabilityRule("R0", None, supported, "algorithm does not support the property's data type"),
        ApplicabilityRule("R1", frozenset({"impute_mean", "impute_median"}), lambda x: x.dtype == DType.NUMERIC,
                          "mean/median imputation needs a numeric property"),
        ApplicabilityRule("R2", frozenset({"impute_mode"}), lambda x: x.dtype == DType.CATEGORICAL,
                          "mode imputation needs a categorical property"),
        ApplicabilityRule("R3", frozenset({"impute_knn"}), lambda x: x.missing_rate <= knn_max_missing,
                          f"kNN imputation is unreliable above {knn_max_missing:g} missing rate"),
        ApplicabilityRule("R4", INTERVAL_ALGOS,
                          lambda x: x.dtype != DType.NUMERIC or x.slot.property in x.constraints.intervals,
                          "numeric interval repair needs an interval constraint"),
        ApplicabilityRule("R5", frozenset({"winsorize_iqr", "remove_row_zscore", "zscore_standardize"}),
                          lambda x: x.dtype == DType.NUMERIC, "winsorizing and z-scores need a numeric property"),
    ]


def forbid_rule(d: Mapping) -> ApplicabilityRule:
    """User rule from config: ``{"id", "algorithms", "properties"?, "reason"?}`` forbids matching candidates."""
    props = frozenset(d.get("properties") or ())
    return ApplicabilityRule(d["id"], frozenset(d["algorithms"]),
                             lambda x: bool(props) and x.slot.property not in props,
                             d.get("reason", "forbidden by project configuration"))


def apply_rules(space: SearchSpace, data_profile: DataProfile | None, error_profile: ErrorProfile,
                rules: Sequence[ApplicabilityRule] | None = None,
                constraints: ConstraintSet | None = None) -> SearchSpace:
    """Drop candidates failing any rule, recording why; raises EmptySlot when a slot runs dry."""
    rules = builtin_rules() if rules is None else rules
    constraints = constraints or ConstraintSet()
    schema = data_profile.schema if data_profile is not None else None
    out = copy.deepcopy(space)
    for slot in out.slots:
        dtype = schema.dtype_of(slot.property) if schema is not None and slot.property in schema else None
        kept = []
        for cand in slot.candidates:
            x = RuleInput(slot, cand, dtype, data_profile, error_profile, constraints)
            failed = next((r for r in rules if r.selects(cand) and not r.predicate(x)), None)
            if failed is None:
                kept.append(cand)
            else:
                slot.removed.append({"candidate": _label(cand), "rule": failed.id, "reason": failed.reason})
        slot.candidates = kept
        if not kept:
            raise EmptySlot(slot.key, [f"{r['candidate']}: {r['rule']} {r['reason']}" for r in slot.removed])
    out.record("rules")
    return out


def _label(spec: OperatorSpec) -> str:
    return f"{spec.algorithm}{_canonical.dumps(spec.params)}"


# ---------------------------------------------------------------- independence and best practices

def partition_independent(space: SearchSpace) -> SearchSpace:
    """Move slots whose every candidate commutes with every other slot's candidates out of the ordering."""
    out = copy.deepcopy(space)
    pinned = {a for e in out.order_edges for a in e}
    relevant = []
    for sid in out.ordering_relevant:
        slot = out.slot(sid)
        others = [c for s in out.slots if s.id != sid for c in s.candidates]
        free = sid not in pinned and all(commutes(a, b) for a in slot.candidates for b in others)
        if not free:
            relevant.append(sid)
    out.ordering_relevant = relevant
    out.record("independence")
    return out


@dataclass(frozen=True)
class BestPractice:
    kind: str  # pin_algorithm | pin_order | insert_support
    slot: int | str | None = None
    algorithm: str | None = None
    params: dict | None = None
    before: int | str | None = None
    after: int | str | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> BestPractice:
        if d.get("kind") not in ("pin_algorithm", "pin_order", "insert_support"):
            raise PinConflict(f"unknown best practice {d.get('kind')!r}")
        return cls(d["kind"], d.get("slot"), d.get("algorithm"), d.get("params"), d.get("before"), d.get("after"))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slot": self.slot, "algorithm": self.algorithm, "params": self.params,
                "before": self.before, "after": self.after}


def _has_cycle(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> bool:
    succ: dict[int, list[int]] = {n: [] for n in nodes}
    indeg = dict.fromkeys(succ, 0)
    for a, b in edges:
        succ.setdefault(a, []).append(b)
        indeg[b] = indeg.get(b, 0) + 1
        indeg.setdefault(a, 0)
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for m in succ.get(n, ()):
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return seen != len(indeg)


def _make_relevant(space: SearchSpace, sid: int) -> None:
    if sid not in space.ordering_relevant:
        space.ordering_relevant = sorted(space.ordering_relevant + [sid])


def apply_best_practices(space: SearchSpace, practices: Sequence[BestPractice]) -> SearchSpace:
    out = copy.deepcopy(space)
    for bp in practices:
        if bp.kind == "pin_algorithm":
            slot = out.slot(bp.slot)
            match = [c for c in slot.candidates if c.algorithm == bp.algorithm
                     and (bp.params is None or _canonical.dumps(c.params) == _canonical.dumps(bp.params))]
            if not match:
                raise PinConflict(f"pinned algorithm {bp.algorithm} is not a live candidate of slot {slot.key}")
            slot.candidates = match[:1]
        elif bp.kind == "pin_order":
            a, b = out.slot(bp.before).id, out.slot(bp.after).id
            edges = out.order_edges + [(a, b)]
            if a == b or _has_cycle([s.id for s in out.slots], edges):
                raise PinConflict(f"ordering {bp.before} before {bp.after} creates a cycle")
            out.order_edges = edges
            _make_relevant(out, a)
            _make_relevant(out, b)
        elif bp.kind == "insert_support":
            target = out.slot(bp.slot)
            names = [target.property]
            for c in target.candidates:
                names.extend(n for n in c.params.get("features") or () if n not in names)
            new_id = max(s.id for s in out.slots) + 1
            support = Slot(new_id, target.property, None, OpClass.STANDARDIZATION, [])
            support.candidates.append(OperatorSpec(support.step_id, "zscore_standardize", tuple(names), {}))
            out.slots.append(support)
            out.order_edges = out.order_edges + [(new_id, target.id)]
            _make_relevant(out, new_id)
            _make_relevant(out, target.id)
        else:
            raise PinConflict(f"unknown best practice {bp.kind!r}")
    out.record("best_practices")
    return out


# ---------------------------------------------------------------- counting

def _linear_extensions(nodes: list[int], edges: list[tuple[int, int]]) -> int:
    index = {n: i for i, n in enumerate(nodes)}
    preds = [0] * len(nodes)
    for a, b in edges:
        preds[index[b]] |= 1 << index[a]
    full = (1 << len(nodes)) - 1
    ways = [0] * (full + 1)
    ways[0] = 1
    for mask in range(full + 1):
        if not ways[mask]:
            continue
        for i in range(len(nodes)):
            bit = 1 << i
            if not mask & bit and preds[i] & mask == preds[i]:
                ways[mask | bit] += ways[mask]
    return ways[full]


def count_space(space: SearchSpace) -> int:
    """Orderings of the ordering-relevant slots consistent with the pins, times every slot's candidate count."""
    rel = set(space.ordering_relevant)
    edges = sorted({e for e in space.order_edges if e[0] in rel and e[1] in rel})
    constrained = sorted({n for e in edges for n in e})
    n, m = len(rel), len(constrained)
    orders = math.factorial(n) // math.factorial(m) * _linear_extensions(constrained, edges)
    return orders * math.prod(len(s.candidates) for s in space.slots)


# ---------------------------------------------------------------- search

@dataclass
class OptimizeReport:
    pipeline: PipelineProfile
    score: float
    evaluations: int
    funnel: list[dict]
    strategy: dict
    truncated: bool = False

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline.to_dict(), "score": self.score, "evaluations": self.evaluations,
                "funnel": self.funnel, "strategy": self.strategy, "truncated": self.truncated}

    @classmethod
    def from_dict(cls, d: Mapping) -> OptimizeReport:
        return cls(PipelineProfile.from_dict(d["pipeline"]), d["score"], d["evaluations"], list(d["funnel"]),
                   dict(d["strategy"]), d.get("truncated", False))


class _Stop(Exception):
    pass


@dataclass
class _State:
    steps: tuple[OperatorSpec, ...]
    batch: Batch
    placed: frozenset[int]
    score: float = 0.0

    @property
    def cost(self) -> float:
        return sum(CATALOG[s.algorithm].cost for s in self.steps)

    @property
    def fingerprint(self) -> str:
        return _canonical.digest([s.to_dict() for s in self.steps])

    def key(self) -> tuple:
        # higher score, fewer operators, cheaper, then fingerprint: total and deterministic
        return (-self.score, len(self.steps), self.cost, self.fingerprint)


class _Search:
    def __init__(self, space: SearchSpace, batch: Batch, schema: Schema, constraints: ConstraintSet,
                 weights: QualityWeights, detection: DetectionConfig, history: Sequence[DataProfile],
                 budget: int | None):
        self.space = space
        self.batch = batch
        self.schema = schema
        self.constraints = constraints
        self.weights = weights
        self.detection = detection
        self.history = history
        self.budget = budget
        self.evaluations = 0
        self.truncated = False
        self.relevant = sorted(space.ordering_relevant)
        self.suffix = space.independent
        rel = set(self.relevant)
        self.preds = {s: frozenset(a for a, b in space.order_edges if b == s and a in rel) for s in self.relevant}
        self.tracked = tracked_pairs(schema, constraints, detection)
        self.n_slots = len(space.slots)

    def score(self, batch: Batch) -> float:
        ep = detect_errors(batch, self.schema, self.constraints, self.detection, positions=False)
        return quality_score(ep, self.weights, self.tracked)

    def evaluate(self, state: _State) -> _State:
        if self.budget is not None and self.evaluations >= self.budget:
            self.truncated = True
            raise _Stop
        self.evaluations += 1
        state.score = self.score(state.batch)
        return state

    def options(self, state: _State) -> list[int]:
        left = [s for s in self.relevant if s not in state.placed]
        if left:
            return [s for s in left if self.preds[s] <= state.placed]
        rest = [s for s in self.suffix if s not in state.placed]
        return rest[:1]

    def extend(self, state: _State, sid: int, cand: OperatorSpec) -> _State | None:
        try:
            batch = apply_operator(state.batch, cand, self.history)
        except Exception:  # a failing candidate is simply not a viable pipeline
            return None
        return _State(state.steps + (cand,), batch, state.placed | {sid})

    def children(self, state: _State):
        for sid in self.options(state):
            for cand in self.space.slot(sid).candidates:
                child = self.extend(state, sid, cand)
                if child is not None:
                    yield child

    def root(self) -> _State:
        return _State((), self.batch, frozenset())

    def exhaustive(self) -> _State | None:
        best: list[_State] = []

        def rec(state: _State) -> None:
            if len(state.placed) == self.n_slots:
                self.evaluate(state)
                if not best or state.key() < best[0].key():
                    best[:] = [state]
                return
            for child in self.children(state):
                rec(child)

        try:
            rec(self.root())
        except _Stop:
            pass
        return best[0] if best else None

    def beam(self, width: int) -> tuple[_State | None, _State | None]:
        """Returns (best complete state, best partial state seen when the budget ran out)."""
        frontier = [self.root()]
        try:
            for _ in range(self.n_slots):
                kids = []
                for st in frontier:
                    for child in self.children(st):
                        kids.append(self.evaluate(child))
                if not kids:
                    return None, None
                kids.sort(key=_State.key)
                frontier = kids[:width]
        except _Stop:
            partial = sorted(kids, key=_State.key)[:1] or frontier
            return None, partial[0]
        return frontier[0], None

    def complete(self, state: _State) -> _State | None:
        """Finish a partial pipeline with the first viable candidate of each remaining slot."""
        while len(state.placed) < self.n_slots:
            nxt = next(self.children(state), None)
            if nxt is None:
                return None
            state = nxt
        return state

    def refine(self, best: _State) -> _State:
        """One greedy pass swapping each step for the other candidates of its slot."""
        slot_of = {s.step_id: s for s in self.space.slots}
        steps = list(best.steps)
        for i, step in enumerate(steps):
            for alt in slot_of[step.id].candidates:
                if alt == steps[i]:
                    continue
                trial = steps[:i] + [alt] + steps[i + 1:]
                batch = self.run(trial)
                if batch is None:
                    continue
                cand = self.evaluate(_State(tuple(trial), batch, best.placed))
                if cand.key() < best.key():
                    best, steps = cand, trial
        return best

    def run(self, steps: Sequence[OperatorSpec]) -> Batch | None:
        batch = self.batch
        try:
            for s in steps:
                batch = apply_operator(batch, s, self.history)
        except Exception:
            return None
        return batch


def optimize(space: SearchSpace, batch: Batch, schema: Schema, constraints: ConstraintSet | None = None,
             weights: QualityWeights | None = None, strategy: str = "beam", width: int = 8,
             budget: int | None = None, detection: DetectionConfig = DetectionConfig(),
             history: Sequence[DataProfile] = (), project: str = "", source: str = "",
             trigger_batch: int | None = None, timestamp: str | None = None) -> OptimizeReport:
    """Select the pipeline maximizing output quality over ``space``.

    ``strategy`` is ``"exhaustive"`` or ``"beam"`` (with ``width``); ``budget``
    caps quality evaluations and marks the report truncated when reached.
    """
    if budget is not None and budget <= 0:
        raise BudgetZero("the evaluation budget must be positive")
    for slot in space.slots:
        if not slot.candidates:
            raise EmptySlot(slot.key, [f"{r['candidate']}: {r['rule']} {r['reason']}" for r in slot.removed])
    constraints = constraints or ConstraintSet()
    weights = weights or QualityWeights()
    search = _Search(space, batch, schema, constraints, weights, detection, history, budget)
    if strategy == "exhaustive":
        best = search.exhaustive()
    elif strategy == "beam":
        if width < 1:
            raise ValueError("beam width must be at least 1")
        best, partial = search.beam(width)
        if best is None and partial is not None:
            best = search.complete(partial)
        elif best is not None and not search.truncated:
            try:
                best = search.refine(best)
            except _Stop:
                pass
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    if best is None:
        raise PipelineError("no candidate pipeline could be executed on the batch")
    out = search.run(best.steps)
    pp = PipelineProfile(project, 1, list(best.steps), source,
                         Provenance("optimizer", None, timestamp or utc_now(), trigger_batch))
    return OptimizeReport(pp, search.score(out), search.evaluations, list(space.funnel),
                          {"name": strategy, "width": width if strategy == "beam" else None, "budget": budget},
                          search.truncated)


def compose(batch: Batch, schema: Schema, constraints: ConstraintSet | None = None,
            weights: QualityWeights | None = None, *, data_profile: DataProfile | None = None,
            rules: Sequence[ApplicabilityRule] | None = None, practices: Sequence[BestPractice] = (),
            grid_overrides: Mapping[str, list[dict]] | None = None, strategy: str = "beam", width: int = 8,
            budget: int | None = None, detection: DetectionConfig = DetectionConfig(),
            history: Sequence[DataProfile] = (), **meta) -> tuple[SearchSpace, OptimizeReport]:
    """Full composition: detect, build, prune by rules, partition, apply best practices, search."""
    constraints = constraints or ConstraintSet()
    if data_profile is None:
        from .profiling import build_profile
        data_profile = build_profile(batch, schema)
    ep = detect_errors(batch, schema, constraints, detection, positions=False)
    space = build_search_space(ep, CATALOG, default_param_grids(schema, constraints, data_profile, grid_overrides))
    space = apply_rules(space, data_profile, ep, rules, constraints)
    space = partition_independent(space)
    if practices:
        space = apply_best_practices(space, practices)
    report = optimize(space, batch, schema, constraints, weights, strategy, width, budget, detection, history,
                      **meta)
    return space, report
