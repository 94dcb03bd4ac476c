"""Change interpretation, adaptation analysis, propagation, evaluation and escalation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from . import _canonical
from .errors import (TABLE, ConstraintSet, ErrorProfile, ErrorProfileDiff, ErrorType, QualityWeights, pair_key)
from .evolution import ADD, REMOVE, RENAME, RETYPE, SMO, RenameEvidence
from .exceptions import NothingToInterpret, PatchConflict, UnresolvableStep
from .model import Batch, DType, Schema
from .operators import CATALOG, OperatorSpec, access_sets, get_algorithm
from .optimizer import (ERROR_CLASS, ApplicabilityRule, ParamGrids, apply_rules, build_search_space,
                        default_param_grids)
from .pipeline import (ExecutionContext, PipelineProfile, PipelineProfileDiff, Provenance, RunReport,
                       diff_pipeline_profiles, execute, rebind)
from .profiling import AssertionReport, DataProfile, DataProfileDiff, NumericStats

STRUCTURAL, SEMANTIC, NOVELTY = "structural", "semantic", "error-novelty"
REBIND, RETUNE, SWAP, INSERT, REMOVE_STEP, REOPTIMIZE = (
    "rebind-target", "retune-params", "swap-algorithm", "insert-step", "remove-step", "reoptimize-slot")
_SCHEMA_KINDS = ("property-added", "property-removed", "dtype-changed")


@dataclass
class ChangeReport:
    batch_id: int
    data_diff: DataProfileDiff
    error_diff: ErrorProfileDiff
    assertions: AssertionReport
    smos: list[SMO] = field(default_factory=list)
    evidence: list[RenameEvidence] = field(default_factory=list)

    @property
    def significant(self) -> bool:
        return (bool(self.data_diff.significant()) or bool(self.smos) or not self.assertions.passed
                or bool(self.error_diff.novelties()))

    def to_dict(self) -> dict:
        return {"batch": self.batch_id, "significant": self.significant, "data_diff": self.data_diff.to_dict(),
                "error_diff": self.error_diff.to_dict(), "assertions": self.assertions.to_dict(),
                "smos": [s.to_dict() for s in self.smos], "evidence": [e.to_dict() for e in self.evidence]}

    @classmethod
    def from_dict(cls, d: Mapping) -> ChangeReport:
        return cls(d["batch"], DataProfileDiff.from_dict(d["data_diff"]), ErrorProfileDiff.from_dict(d["error_diff"]),
                   AssertionReport.from_dict(d["assertions"]), [SMO.from_dict(s) for s in d.get("smos", [])],
                   [RenameEvidence.from_dict(e) for e in d.get("evidence", [])])


@dataclass
class ChangeStep:
    id: str
    kind: str
    property: str | None = None
    smo: SMO | None = None
    statistics: tuple[str, ...] = ()
    error_type: ErrorType | None = None
    depends_on: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "property": self.property,
                "smo": self.smo.to_dict() if self.smo else None, "statistics": list(self.statistics),
                "error_type": self.error_type.value if self.error_type else None, "depends_on": list(self.depends_on)}


def interpret_changes(report: ChangeReport) -> list[ChangeStep]:
    """Break a significant change report into ordered, independent change steps."""
    if not report.significant:
        raise NothingToInterpret(f"batch {report.batch_id}: nothing significant changed")
    steps: list[ChangeStep] = []
    produced_by: dict[str, str] = {}  # property name -> structural step that introduced it
    removed: set[str] = set()
    added: set[str] = set()
    for smo in report.smos:
        sid = f"c{len(steps) + 1}"
        prop = smo.new_name if smo.kind == RENAME else smo.name
        steps.append(ChangeStep(sid, STRUCTURAL, prop, smo))
        if smo.kind in (RENAME, RETYPE):
            produced_by[prop] = sid
        if smo.kind == REMOVE:
            removed.add(smo.name)
        if smo.kind == ADD:
            added.add(smo.name)

    evidence: dict[str, list[str]] = {}
    for e in report.data_diff.significant():
        if e.kind not in _SCHEMA_KINDS:
            evidence.setdefault(e.property, []).append(e.statistic)
    for r in report.assertions.failures:
        evidence.setdefault(r.assertion.property, []).append(f"assertion:{r.assertion.kind}")
    for prop in sorted(evidence):
        if prop in removed or prop in added:
            continue  # subsumed by the structural step
        deps = (produced_by[prop],) if prop in produced_by else ()
        steps.append(ChangeStep(f"c{len(steps) + 1}", SEMANTIC, prop, statistics=tuple(dict.fromkeys(evidence[prop])),
                                depends_on=deps))
    for e in report.error_diff.novelties():
        if e.property in added or e.property in removed:
            continue
        deps = (produced_by[e.property],) if e.property in produced_by else ()
        steps.append(ChangeStep(f"c{len(steps) + 1}", NOVELTY, e.property, error_type=e.error_type,
                                depends_on=deps))
    return steps


@dataclass
class AdaptationStep:
    change_step: str
    action: str
    steps: list[str] = field(default_factory=list)
    rationale: str = ""
    old: str | None = None
    new: str | None = None
    params: dict[str, dict[str, Any]] = field(default_factory=dict)  # retune: step id -> param -> value
    spec: OperatorSpec | None = None  # insert / swap
    position: int | None = None
    slot: str | None = None
    constraints: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"change_step": self.change_step, "action": self.action, "steps": self.steps,
                "rationale": self.rationale, "old": self.old, "new": self.new,
                "params": _canonical.normalize(self.params), "spec": self.spec.to_dict() if self.spec else None,
                "position": self.position, "slot": self.slot,
                "constraints": {k: list(v) for k, v in sorted(self.constraints.items())}}

    @classmethod
    def from_dict(cls, d: Mapping) -> AdaptationStep:
        return cls(d["change_step"], d["action"], list(d.get("steps", [])), d.get("rationale", ""), d.get("old"),
                   d.get("new"), dict(d.get("params", {})),
                   OperatorSpec.from_dict(d["spec"]) if d.get("spec") else None, d.get("position"), d.get("slot"),
                   {k: tuple(v) for k, v in d.get("constraints", {}).items()})


# ---------------------------------------------------------------- robustness

INDIFFERENT, LOSS, CHANGE, ADDITION = "indifferent", "loss", "change", "addition"


@dataclass
class RobustnessVerdict:
    steps: dict[str, str]  # step id -> level
    level: str  # pipeline-wide: the most severe step level, or addition when only properties were added
    adaptation_required: bool

    def required(self, step_id: str) -> bool:
        return self.steps[step_id] != INDIFFERENT

    def to_dict(self) -> dict:
        return {"steps": dict(sorted(self.steps.items())), "level": self.level,
                "adaptation_required": self.adaptation_required}


def step_names(spec: OperatorSpec) -> set[str]:
    sets = access_sets(spec)
    return set(sets.read | sets.write | set(spec.params.get("key") or ())) - {TABLE}


def classify_robustness(pp: PipelineProfile, smos: Sequence[SMO]) -> RobustnessVerdict:
    removed = {s.name for s in smos if s.kind == REMOVE}
    changed = {s.name for s in smos if s.kind in (RENAME, RETYPE)}
    levels = {}
    for step in pp.steps:
        names = step_names(step)
        levels[step.id] = LOSS if names & removed else CHANGE if names & changed else INDIFFERENT
    severity = [LOSS, CHANGE]
    worst = next((lv for lv in severity if lv in levels.values()), None)
    only_adds = bool(smos) and all(s.kind == ADD for s in smos)
    level = worst or (ADDITION if only_adds else INDIFFERENT)
    return RobustnessVerdict(levels, level, level != INDIFFERENT)


# ---------------------------------------------------------------- analysis

@dataclass
class AdaptContext:
    """Inputs of the adaptation analysis, all expressed in the new batch's property names."""

    batch: Batch
    schema: Schema
    old_profile: DataProfile  # previous batch, renamed into the new names
    new_profile: DataProfile
    old_errors: ErrorProfile
    new_errors: ErrorProfile
    constraints: ConstraintSet
    weights: QualityWeights = field(default_factory=QualityWeights)
    rules: Sequence[ApplicabilityRule] | None = None
    grid_overrides: Mapping[str, list[dict]] | None = None
    history: Sequence[DataProfile] = ()
    retune_violation_jump: float = 0.1
    correlation: float = 0.7

    def execution(self, constraints: ConstraintSet | None = None) -> ExecutionContext:
        return ExecutionContext(self.schema, constraints or self.constraints, self.weights, history=self.history,
                                granularity="schema")

    def grids(self) -> ParamGrids:
        return default_param_grids(self.schema, self.constraints, self.new_profile, self.grid_overrides)


@dataclass
class Proposal:
    property: str
    error_type: ErrorType
    candidates: list[OperatorSpec]
    rationale: str
    interval: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {"property": self.property, "error_type": self.error_type.value,
                "candidates": [c.to_dict() for c in self.candidates], "rationale": self.rationale,
                "interval": list(self.interval) if self.interval else None}


def _slot_candidates(pair: tuple[str, ErrorType], ctx: AdaptContext, step_id: str,
                     constraints: ConstraintSet | None = None) -> list[OperatorSpec]:
    """Rule-filtered catalog candidates for a single repair target, renamed to ``step_id``."""
    cons = constraints or ctx.constraints
    ep = ErrorProfile(max(ctx.new_errors.row_count, 1), {pair: 1})
    grids = default_param_grids(ctx.schema, cons, ctx.new_profile, ctx.grid_overrides)
    space = build_search_space(ep, CATALOG, grids)
    try:
        space = apply_rules(space, ctx.new_profile, ctx.new_errors, ctx.rules, cons)
    except Exception:
        return []
    return [c.copy(id=step_id) for c in space.slots[0].candidates]


def contextualize_new_property(prop: str, ctx: AdaptContext, start_id: int = 1) -> list[Proposal]:
    """Repair proposals for a property that only exists in the new batch.

    Metadata heuristics decide which repair targets to propose (only those
    showing errors in the new batch); a strong Pearson correlation with an
    existing numeric property moves feature-based imputation to the front.
    """
    dtype = ctx.schema.dtype_of(prop)
    st = ctx.new_profile.stats.get(prop)
    proposals: list[Proposal] = []
    constraints = ctx.constraints
    interval = None
    if dtype == DType.NUMERIC and isinstance(st, NumericStats) and st.q1 is not None and prop not in constraints.intervals:
        iqr = st.q3 - st.q1
        interval = (st.q1 - 3 * iqr, st.q3 + 3 * iqr)
        constraints = replace(constraints, intervals={**constraints.intervals, prop: interval})
    col = ctx.batch.columns[prop]
    pairs = []
    if ctx.batch.missing_mask(prop).any():
        pairs.append((prop, ErrorType.MISSING_VALUE))
    if dtype == DType.NUMERIC:
        if ctx.batch.invalid_mask(prop).any():
            pairs.append((prop, ErrorType.TYPE_MISMATCH))
        if interval is not None:
            with np.errstate(invalid="ignore"):
                if ((col < interval[0]) | (col > interval[1])).any():
                    pairs.append((prop, ErrorType.INTERVAL_VIOLATION))
        if isinstance(st, NumericStats) and st.outlier_count:
            pairs.append((prop, ErrorType.OUTLIER))
    correlated = []
    if dtype == DType.NUMERIC and ctx.new_profile.correlations:
        row = ctx.new_profile.correlations.get(prop, {})
        correlated = sorted((n for n, r in row.items() if n != prop and r is not None and abs(r) > ctx.correlation
                             and ctx.schema.dtype_of(n) == DType.NUMERIC), key=lambda n: (-abs(row[n]), n))
    for i, pair in enumerate(pairs):
        step_id = f"s{start_id + i:02d}"
        cands = _slot_candidates(pair, ctx, step_id, constraints)
        rationale = f"new {dtype.value} property with {pair[1].value} errors"
        if correlated and ERROR_CLASS[pair[1]].value == "missing_value_imputation":
            knn = [c.copy(params={**c.params, "features": correlated}) for c in cands if c.algorithm == "impute_knn"]
            if knn:
                cands = knn + [c for c in cands if c.algorithm != "impute_knn"]
                rationale += f"; correlated with {', '.join(correlated)}"
        if cands:
            proposals.append(Proposal(prop, pair[1], cands, rationale,
                                      interval if pair[1] == ErrorType.INTERVAL_VIOLATION else None))
    return proposals


def _next_step_id(pp: PipelineProfile, taken: set[str]) -> int:
    nums = [int(s[1:]) for s in list(pp.step_ids) + list(taken) if s[1:].isdigit()]
    return max(nums, default=0) + 1


def _remap(b: float, old: NumericStats, new: NumericStats) -> float:
    """Robust affine map from the old distribution onto the new one (median and IQR)."""
    return new.q2 + (b - old.q2) * (new.q3 - new.q1) / (old.q3 - old.q1)


def _evaluate_pipeline(pp: PipelineProfile, ctx: AdaptContext, constraints: ConstraintSet | None = None
                       ) -> tuple[bool, float]:
    out, report = execute(pp, ctx.batch, ctx.execution(constraints))
    return report.functional, report.quality_after if report.functional else -1.0


def analyze_adaptations(steps: Sequence[ChangeStep], pp: PipelineProfile, ctx: AdaptContext
                        ) -> list[AdaptationStep]:
    """Choose adaptation steps for every change step; raises UnresolvableStep when none fits."""
    result: list[AdaptationStep] = []
    working = pp
    constraints = ctx.constraints
    taken: set[str] = set()
    for cs in steps:
        produced = _analyze_one(cs, working, ctx, constraints, taken)
        for a in produced:
            if a.constraints:
                constraints = replace(constraints, intervals={**constraints.intervals, **a.constraints})
            if a.spec is not None:
                taken.add(a.spec.id)
        result.extend(produced)
        working, _ = _patch(working, produced)
    return result


def _analyze_one(cs: ChangeStep, pp: PipelineProfile, ctx: AdaptContext, constraints: ConstraintSet,
                 taken: set[str]) -> list[AdaptationStep]:
    if cs.kind == STRUCTURAL:
        smo = cs.smo
        if smo.kind == RENAME:
            hit = [s.id for s in pp.steps if smo.name in step_names(s)]
            return [AdaptationStep(cs.id, REBIND, hit, f"property {smo.name} is now called {smo.new_name}",
                                   old=smo.name, new=smo.new_name)] if hit else []
        if smo.kind == REMOVE:
            return _adapt_removal(cs, smo.name, pp, ctx)
        if smo.kind == RETYPE:
            return _adapt_retype(cs, smo, pp, ctx)
        out = []
        start = _next_step_id(pp, taken)
        for prop in contextualize_new_property(smo.name, ctx, start):
            spec = _pick_by_evaluation(prop.candidates, pp, ctx, constraints)
            out.append(AdaptationStep(cs.id, INSERT, [spec.id], prop.rationale, spec=spec, position=None,
                                      constraints={prop.property: prop.interval} if prop.interval else {}))
            start += 1
        return out
    if cs.kind == SEMANTIC:
        return _adapt_semantic(cs, pp, ctx, constraints)
    # error novelty
    pair = (cs.property, cs.error_type)
    cls = ERROR_CLASS[cs.error_type]
    if any(s.op_class == cls and (cs.property in s.targets or (cs.property == TABLE and not s.targets))
           for s in pp.steps):
        return []
    step_id = f"s{_next_step_id(pp, taken):02d}"
    cands = _slot_candidates(pair, ctx, step_id, constraints)
    if not cands:
        raise UnresolvableStep(cs.id, f"no applicable operator repairs {pair_key(pair)}")
    spec = _pick_by_evaluation(cands, pp, ctx, constraints)
    return [AdaptationStep(cs.id, INSERT, [spec.id], f"new error type {pair_key(pair)}", spec=spec)]


def _pick_by_evaluation(cands: Sequence[OperatorSpec], pp: PipelineProfile, ctx: AdaptContext,
                        constraints: ConstraintSet) -> OperatorSpec:
    """Best candidate when appended to ``pp``; ties keep the proposal ranking."""
    best, best_q = cands[0], None
    for c in cands:
        trial = PipelineProfile(pp.project, pp.version, pp.steps + [c], pp.source)
        ok, q = _evaluate_pipeline(trial, ctx, constraints)
        if ok and (best_q is None or q > best_q):
            best, best_q = c, q
    return best


def _adapt_removal(cs: ChangeStep, name: str, pp: PipelineProfile, ctx: AdaptContext) -> list[AdaptationStep]:
    out = []
    for s in pp.steps:
        if name not in step_names(s):
            continue
        if name in s.targets:
            rest = tuple(t for t in s.targets if t != name)
            if not rest:
                out.append(AdaptationStep(cs.id, REMOVE_STEP, [s.id], f"its only target {name} was removed"))
            else:
                out.append(AdaptationStep(cs.id, SWAP, [s.id], f"target {name} was removed",
                                          spec=s.copy(targets=rest)))
        elif name in (s.params.get("features") or ()):
            feats = [f for f in s.params["features"] if f != name]
            if feats:
                out.append(AdaptationStep(cs.id, RETUNE, [s.id], f"feature {name} was removed",
                                          params={s.id: {"features": feats}}))
            else:
                cands = [c for c in _slot_candidates((s.targets[0], ErrorType.MISSING_VALUE), ctx, s.id)
                         if c.algorithm != s.algorithm]
                if not cands:
                    raise UnresolvableStep(cs.id, f"step {s.id} lost its last feature {name}")
                out.append(AdaptationStep(cs.id, SWAP, [s.id], f"step {s.id} lost its last feature {name}",
                                          spec=cands[0]))
        elif name in (s.params.get("key") or ()):
            key = [k for k in s.params["key"] if k != name]
            out.append(AdaptationStep(cs.id, RETUNE, [s.id], f"duplicate key lost {name}",
                                      params={s.id: {"key": key or None}}))
    return out


def _adapt_retype(cs: ChangeStep, smo: SMO, pp: PipelineProfile, ctx: AdaptContext) -> list[AdaptationStep]:
    out = []
    for s in pp.steps:
        if smo.name not in step_names(s):
            continue
        algo = get_algorithm(s.algorithm)
        if smo.name in s.targets and smo.dtype not in algo.dtypes:
            err = next((e for e, c in ERROR_CLASS.items() if c == algo.op_class), None)
            cands = _slot_candidates((smo.name, err), ctx, s.id) if err else []
            if not cands:
                raise UnresolvableStep(cs.id, f"no {algo.op_class.value} operator supports {smo.dtype.value}")
            out.append(AdaptationStep(cs.id, SWAP, [s.id], f"{smo.name} is now {smo.dtype.value}", spec=cands[0]))
        elif smo.name in (s.params.get("features") or ()) and smo.dtype != DType.NUMERIC:
            feats = [f for f in s.params["features"] if f != smo.name]
            out.append(AdaptationStep(cs.id, RETUNE, [s.id], f"feature {smo.name} is no longer numeric",
                                      params={s.id: {"features": feats}}))
    return out


def _adapt_semantic(cs: ChangeStep, pp: PipelineProfile, ctx: AdaptContext, constraints: ConstraintSet
                    ) -> list[AdaptationStep]:
    prop = cs.property
    if prop not in ctx.schema:
        return []
    old, new = ctx.old_profile.stats.get(prop), ctx.new_profile.stats.get(prop)
    touching = [s for s in pp.steps if prop in s.targets]
    out: list[AdaptationStep] = []
    # historic statistics no longer describe the data: restart the history window
    historic = {s.id: {"history_window": 0} for s in touching if s.semantic_context == "historic"
                and get_algorithm(s.algorithm).data_derived}
    if historic:
        out.append(AdaptationStep(cs.id, RETUNE, sorted(historic), f"distribution of {prop} shifted",
                                  params=historic))
    pair = (prop, ErrorType.INTERVAL_VIOLATION)
    jump = ctx.new_errors.rate(pair) - ctx.old_errors.rate(pair)
    if prop not in constraints.intervals or jump <= ctx.retune_violation_jump:
        return out
    if not (isinstance(old, NumericStats) and isinstance(new, NumericStats) and old.q1 is not None
            and new.q1 is not None and old.q3 > old.q1 and new.q3 > new.q1):
        return out + reoptimize_slots(pp, [prop], ctx, constraints, cs.id)
    lo, hi = constraints.intervals[prop]
    new_lo, new_hi = sorted((_remap(lo, old, new), _remap(hi, old, new)))
    params: dict[str, dict[str, Any]] = {}
    for s in touching:
        changes = {}
        if "lo" in s.params and "hi" in s.params:
            changes.update(lo=new_lo, hi=new_hi)
        value = s.params.get("value")
        if s.algorithm in ("impute_constant", "replace_with_constant") and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            changes["value"] = _remap(float(value), old, new)
        if changes:
            params[s.id] = changes
    rationale = (f"interval violations on {prop} rose by {jump:.3f}; bounds remapped "
                 f"[{lo:g}, {hi:g}] -> [{new_lo:.6g}, {new_hi:.6g}]")
    out.append(AdaptationStep(cs.id, RETUNE, sorted(params), rationale, params=params,
                              constraints={prop: (new_lo, new_hi)}))
    return out


# ---------------------------------------------------------------- propagation

def _patch(pp: PipelineProfile, steps: Sequence[AdaptationStep]) -> tuple[PipelineProfile, None]:
    specs = list(pp.steps)
    assigned: dict[tuple[str, str], str] = {}

    def index(step_id: str) -> int:
        for i, s in enumerate(specs):
            if s.id == step_id:
                return i
        raise PatchConflict(f"adaptation references unknown step {step_id!r}")

    for a in steps:
        if a.action == REBIND:
            for sid in a.steps:
                i = index(sid)
                specs[i] = rebind(specs[i], a.old, a.new)
        elif a.action == RETUNE:
            for sid, changes in a.params.items():
                i = index(sid)
                params = _canonical.loads(_canonical.dumps(specs[i].params))
                for k, v in changes.items():
                    prev = assigned.get((sid, k))
                    enc = _canonical.dumps(v)
                    if prev is not None and prev != enc:
                        raise PatchConflict(f"step {sid} parameter {k} is retuned divergently")
                    assigned[(sid, k)] = enc
                    if v is None:
                        params.pop(k, None)
                    else:
                        params[k] = v
                specs[i] = specs[i].copy(params=params)
        elif a.action == REMOVE_STEP:
            for sid in a.steps:
                specs.pop(index(sid))
        elif a.action in (SWAP, REOPTIMIZE):
            if a.spec is None:
                raise PatchConflict(f"{a.action} for {a.steps} carries no replacement operator")
            specs[index(a.steps[0])] = a.spec
        elif a.action == INSERT:
            if any(s.id == a.spec.id for s in specs):
                raise PatchConflict(f"step {a.spec.id} already exists")
            specs.insert(len(specs) if a.position is None else a.position, a.spec)
        else:
            raise PatchConflict(f"unknown adaptation action {a.action!r}")
    return PipelineProfile(pp.project, pp.version, specs, pp.source, pp.provenance), None


def propagate(pp: PipelineProfile, steps: Sequence[AdaptationStep], trigger_batch: int | None = None,
              timestamp: str | None = None) -> tuple[PipelineProfile, PipelineProfileDiff]:
    patched, _ = _patch(pp, steps)
    new = PipelineProfile(pp.project, pp.version + 1, patched.steps, pp.source,
                          Provenance("adaptation", pp.version, timestamp, trigger_batch))
    return new, diff_pipeline_profiles(pp, new)


# ---------------------------------------------------------------- evaluation and escalation

@dataclass
class AdaptationOutcome:
    pipeline: PipelineProfile
    diff: PipelineProfileDiff
    functional: bool
    quality_before: float
    quality_after: float | None
    baseline: float | None
    escalated: bool = False
    decision: str | None = None
    steps: list[AdaptationStep] = field(default_factory=list)
    unresolved: list[str] = field(default_factory=list)
    constraints: ConstraintSet | None = None
    run: RunReport | None = None

    def to_dict(self) -> dict:
        return {"pipeline": self.pipeline.to_dict(), "diff": self.diff.to_dict(), "functional": self.functional,
                "quality_before": self.quality_before, "quality_after": self.quality_after,
                "baseline": self.baseline, "escalated": self.escalated, "decision": self.decision,
                "steps": [s.to_dict() for s in self.steps], "unresolved": self.unresolved,
                "constraints": self.constraints.to_dict() if self.constraints else None}

    @classmethod
    def from_dict(cls, d: Mapping) -> AdaptationOutcome:
        return cls(PipelineProfile.from_dict(d["pipeline"]), PipelineProfileDiff.from_dict(d["diff"]),
                   d["functional"], d["quality_before"], d.get("quality_after"), d.get("baseline"),
                   d.get("escalated", False), d.get("decision"),
                   [AdaptationStep.from_dict(s) for s in d.get("steps", [])], list(d.get("unresolved", [])),
                   ConstraintSet.from_dict(d["constraints"]) if d.get("constraints") else None)


def evaluate_adaptation(pp: PipelineProfile, batch: Batch, ctx: ExecutionContext, baseline: float | None,
                        diff: PipelineProfileDiff | None = None) -> AdaptationOutcome:
    _, run = execute(pp, batch, ctx)
    return AdaptationOutcome(pp, diff or PipelineProfileDiff(), run.functional, run.quality_before,
                             run.quality_after, baseline, constraints=ctx.constraints, run=run)


ACCEPT, REOPTIMIZE_ALL = "accept", "reoptimize"


def decide_escalation(outcome: AdaptationOutcome, unresolved: Sequence[Any] = (), tau: float = 0.05) -> str:
    if unresolved or not outcome.functional:
        return REOPTIMIZE_ALL
    if outcome.baseline is not None and (outcome.quality_after is None or outcome.quality_after < outcome.baseline - tau):
        return REOPTIMIZE_ALL
    return ACCEPT


def reoptimize_slots(pp: PipelineProfile, props: Sequence[str], ctx: AdaptContext, constraints: ConstraintSet,
                     change_step: str = "") -> list[AdaptationStep]:
    """Greedy in-place search over catalog alternatives for every step targeting ``props``."""
    out: list[AdaptationStep] = []
    current = pp
    _, best_q = _evaluate_pipeline(current, ctx, constraints)
    for s in list(current.steps):
        if not set(s.targets) & set(props):
            continue
        err = next((e for e, c in ERROR_CLASS.items() if c == s.op_class), None)
        if err is None:
            continue
        best_spec = None
        for cand in _slot_candidates((s.targets[0], err), ctx, s.id, constraints):
            if cand == s:
                continue
            trial = PipelineProfile(current.project, current.version,
                                    [cand if x.id == s.id else x for x in current.steps], current.source)
            ok, q = _evaluate_pipeline(trial, ctx, constraints)
            if ok and q > best_q:
                best_q, best_spec = q, cand
        if best_spec is not None:
            a = AdaptationStep(change_step, REOPTIMIZE, [s.id], f"better {s.op_class.value} for {s.targets[0]}",
                               spec=best_spec, slot=s.targets[0])
            out.append(a)
            current, _ = _patch(current, [a])
    return out


def adapt_pipeline(report: ChangeReport, pp: PipelineProfile, ctx: AdaptContext, baseline: float | None,
                   tau: float = 0.05, timestamp: str | None = None, reoptimize=None) -> AdaptationOutcome:
    """One full adaptation cycle: interpret, analyze, propagate, evaluate and, if needed, escalate.

    ``reoptimize(constraints)`` must return a freshly composed PipelineProfile; it
    is only called on escalation.
    """
    changes = interpret_changes(report)
    unresolved: list[str] = []
    try:
        steps = analyze_adaptations(changes, pp, ctx)
    except UnresolvableStep as exc:
        steps, unresolved = [], [f"{exc.step_id}: {exc.reason}"]
    constraints = ctx.constraints
    for a in steps:
        if a.constraints:
            constraints = replace(constraints, intervals={**constraints.intervals, **a.constraints})
    outcome = None
    if not unresolved:
        new, diff = propagate(pp, steps, report.batch_id, timestamp)
        outcome = evaluate_adaptation(new, ctx.batch, ctx.execution(constraints), baseline, diff)
        restored = baseline is None or (outcome.quality_after is not None
                                        and outcome.quality_after >= baseline - tau)
        semantic = sorted({c.property for c in changes if c.kind == SEMANTIC})
        if outcome.functional and not restored and semantic:
            patched, _ = _patch(pp, steps)
            extra = reoptimize_slots(patched, semantic, ctx, constraints)
            if extra:
                steps = steps + extra
                new, diff = propagate(pp, steps, report.batch_id, timestamp)
                outcome = evaluate_adaptation(new, ctx.batch, ctx.execution(constraints), baseline, diff)
        outcome.steps = steps
    decision = decide_escalation(outcome, unresolved, tau) if outcome else REOPTIMIZE_ALL
    if decision == REOPTIMIZE_ALL:
        if reoptimize is None:
            raise UnresolvableStep("escalation", "re-optimization requested but unavailable")
        fresh = reoptimize(constraints)
        fresh = PipelineProfile(pp.project, pp.version + 1, fresh.steps, pp.source,
                                Provenance("optimizer", pp.version, timestamp, report.batch_id))
        escalated = evaluate_adaptation(fresh, ctx.batch, ctx.execution(constraints), baseline,
                                        diff_pipeline_profiles(pp, fresh))
        escalated.escalated = True
        escalated.steps = outcome.steps if outcome else []
        escalated.unresolved = unresolved
        outcome = escalated
    outcome.decision = decision
    outcome.constraints = constraints
    return outcome
