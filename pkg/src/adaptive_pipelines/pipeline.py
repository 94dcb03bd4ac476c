"""Pipeline profiles: validation, execution with per-step profiling, and patch-style diffs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping, Sequence

from . import _canonical
from .errors import (ConstraintSet, DetectionConfig, ErrorProfile, QualityWeights, detect_errors, quality_score,
                     tracked_pairs)
from .exceptions import PatchConflict, PipelineError, StepFailure
from .model import Batch, DType, Schema
from .operators import CATALOG, Algorithm, OperatorSpec, access_sets, apply_operator, validate_spec
from .profiling import DataProfile, DataProfileDiff, ProfileConfig, build_profile, diff_profiles, schema_profile

NAME_PARAMS = ("features", "key")


def utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@dataclass
class Provenance:
    created_by: str = "optimizer"  # optimizer | adaptation
    parent: int | None = None
    timestamp: str | None = None
    trigger_batch: int | None = None

    def to_dict(self) -> dict:
        return {"created_by": self.created_by, "parent": self.parent, "timestamp": self.timestamp,
                "trigger_batch": self.trigger_batch}

    @classmethod
    def from_dict(cls, d: Mapping) -> Provenance:
        return cls(d.get("created_by", "optimizer"), d.get("parent"), d.get("timestamp"), d.get("trigger_batch"))


@dataclass
class PipelineProfile:
    project: str
    version: int = 1
    steps: list[OperatorSpec] = field(default_factory=list)
    source: str = ""
    provenance: Provenance = field(default_factory=Provenance)

    @property
    def fingerprint(self) -> str:
        return _canonical.digest([s.to_dict() for s in self.steps])

    @property
    def step_ids(self) -> list[str]:
        return [s.id for s in self.steps]

    def step(self, step_id: str) -> OperatorSpec:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)

    def to_dict(self) -> dict:
        return {"project": self.project, "source": self.source, "version": self.version,
                "parent": self.provenance.parent, "provenance": self.provenance.to_dict(),
                "steps": [s.to_dict() for s in self.steps], "fingerprint": self.fingerprint}

    @classmethod
    def from_dict(cls, d: Mapping) -> PipelineProfile:
        pp = cls(d["project"], int(d["version"]), [OperatorSpec.from_dict(s) for s in d.get("steps", [])],
                 d.get("source", ""), Provenance.from_dict(d.get("provenance", {"parent": d.get("parent")})))
        if "fingerprint" in d and d["fingerprint"] != pp.fingerprint:
            raise ValueError("pipeline fingerprint does not match its steps")
        return pp

    def to_json(self) -> str:
        return _canonical.dumps(self.to_dict())


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Finding:
    step_id: str | None
    code: str
    message: str
    blocking: bool = True

    def to_dict(self) -> dict:
        return {"step": self.step_id, "code": self.code, "message": self.message, "blocking": self.blocking}


def validate_profile(pp: PipelineProfile, schema: Schema,
                     catalog: Mapping[str, Algorithm] = CATALOG) -> list[Finding]:
    findings: list[Finding] = []
    seen: set[str] = set()
    for step in pp.steps:
        if step.id in seen:
            findings.append(Finding(step.id, "duplicate-step-id", f"step id {step.id!r} is used twice"))
        seen.add(step.id)
        algo = catalog.get(step.algorithm)
        if algo is None:
            findings.append(Finding(step.id, "unknown-algorithm", f"unknown algorithm {step.algorithm!r}"))
            continue
        for problem in validate_spec(step):
            findings.append(Finding(step.id, "invalid-params", problem))
        for name in step.targets:
            if name not in schema:
                findings.append(Finding(step.id, "missing-target", f"missing target property {name!r}"))
            elif schema.dtype_of(name) not in algo.dtypes:
                findings.append(Finding(step.id, "dtype", f"{algo.name} does not support {schema.dtype_of(name).value}"
                                                          f" property {name!r}"))
        for pname in NAME_PARAMS:
            for name in step.params.get(pname) or ():
                if name not in schema:
                    findings.append(Finding(step.id, "missing-feature", f"missing {pname} property {name!r}"))
                elif pname == "features" and schema.dtype_of(name) != DType.NUMERIC:
                    findings.append(Finding(step.id, "dtype", f"feature {name!r} is not numeric"))
    return findings


# ---------------------------------------------------------------- execution

OK, FAILED, NOT_RUN = "ok", "failed", "not-run"


@dataclass
class StepReport:
    step_id: str
    status: str
    duration: float = 0.0
    error: str | None = None
    input_profile: DataProfile | None = None
    output_profile: DataProfile | None = None
    diff: DataProfileDiff | None = None

    def to_dict(self) -> dict:
        return {"step": self.step_id, "status": self.status, "duration": self.duration, "error": self.error,
                "input_profile": self.input_profile.to_dict() if self.input_profile else None,
                "output_profile": self.output_profile.to_dict() if self.output_profile else None,
                "diff": self.diff.to_dict() if self.diff is not None else None}

    @classmethod
    def from_dict(cls, d: Mapping) -> StepReport:
        def dp(x):
            return DataProfile.from_dict(x) if x else None
        return cls(d["step"], d["status"], d.get("duration", 0.0), d.get("error"), dp(d.get("input_profile")),
                   dp(d.get("output_profile")), DataProfileDiff.from_dict(d["diff"]) if d.get("diff") else None)


@dataclass
class RunReport:
    pipeline_version: int
    pipeline_fingerprint: str
    steps: list[StepReport]
    input_profile: DataProfile
    input_errors: ErrorProfile
    quality_before: float
    output_profile: DataProfile | None = None
    output_errors: ErrorProfile | None = None
    quality_after: float | None = None
    failure: StepFailure | None = None

    @property
    def functional(self) -> bool:
        return self.failure is None

    def raise_for_failure(self) -> None:
        if self.failure is not None:
            raise self.failure

    def to_dict(self) -> dict:
        return {
            "pipeline_version": self.pipeline_version, "pipeline_fingerprint": self.pipeline_fingerprint,
            "functional": self.functional, "steps": [s.to_dict() for s in self.steps],
            "input_profile": self.input_profile.to_dict(), "input_errors": self.input_errors.to_dict(),
            "quality_before": self.quality_before,
            "output_profile": self.output_profile.to_dict() if self.output_profile else None,
            "output_errors": self.output_errors.to_dict() if self.output_errors else None,
            "quality_after": self.quality_after,
            "failure": None if self.failure is None else {
                "step": self.failure.step_id,
                "error": getattr(self.failure, "error_name", type(self.failure.cause).__name__),
                "message": str(self.failure.cause)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RunReport:
        failure = None
        if d.get("failure"):
            f = d["failure"]
            failure = StepFailure(f["step"], PipelineError(f["message"]))
            failure.error_name = f["error"]
        return cls(d["pipeline_version"], d["pipeline_fingerprint"], [StepReport.from_dict(s) for s in d["steps"]],
                   DataProfile.from_dict(d["input_profile"]), ErrorProfile.from_dict(d["input_errors"]),
                   d["quality_before"],
                   DataProfile.from_dict(d["output_profile"]) if d.get("output_profile") else None,
                   ErrorProfile.from_dict(d["output_errors"]) if d.get("output_errors") else None,
                   d.get("quality_after"), failure)


@dataclass
class ExecutionContext:
    """Everything an execution needs besides the pipeline and the batch."""

    schema: Schema
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    weights: QualityWeights = field(default_factory=QualityWeights)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    profile_config: ProfileConfig = field(default_factory=ProfileConfig)
    history: Sequence[DataProfile] = ()
    granularity: str = "full"  # full | schema

    def quality(self, batch: Batch, positions: bool = False) -> tuple[ErrorProfile, float]:
        ep = detect_errors(batch, self.schema, self.constraints, self.detection, positions=positions)
        return ep, quality_score(ep, self.weights, tracked_pairs(self.schema, self.constraints, self.detection))


def execute(pp: PipelineProfile, batch: Batch, ctx: ExecutionContext) -> tuple[Batch | None, RunReport]:
    """Run ``pp`` step by step, profiling every intermediate.

    Returns ``(output, report)``; on an operator error the output is ``None``,
    the report carries the :class:`StepFailure` and later steps are marked not-run.
    """
    def profile(b: Batch) -> DataProfile:
        if ctx.granularity == "schema":
            return schema_profile(b, ctx.schema)
        return build_profile(b, ctx.schema, ctx.profile_config)

    in_profile = build_profile(batch, ctx.schema, ctx.profile_config)
    in_errors, q_before = ctx.quality(batch, positions=True)
    report = RunReport(pp.version, pp.fingerprint, [], in_profile, in_errors, q_before)
    current, current_profile = batch, (in_profile if ctx.granularity == "full" else profile(batch))
    for i, step in enumerate(pp.steps):
        t0 = time.perf_counter()
        try:
            current = apply_operator(current, step, ctx.history)
        except Exception as exc:  # any operator error is the pipeline-crash signal
            report.steps.append(StepReport(step.id, FAILED, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}",
                                           current_profile))
            report.steps.extend(StepReport(s.id, NOT_RUN) for s in pp.steps[i + 1:])
            report.failure = StepFailure(step.id, exc)
            return None, report
        duration = time.perf_counter() - t0
        out_profile = profile(current)
        report.steps.append(StepReport(step.id, OK, duration, None, current_profile, out_profile,
                                       diff_profiles(current_profile, out_profile, ctx.profile_config)))
        current_profile = out_profile
    report.output_profile = build_profile(current, ctx.schema, ctx.profile_config)
    report.output_errors, report.quality_after = ctx.quality(current, positions=True)
    return current, report


# ---------------------------------------------------------------- diffs

STEP_ADDED, STEP_REMOVED, STEP_REORDERED = "step-added", "step-removed", "step-reordered"
PARAM_CHANGED, TARGET_REBOUND = "param-changed", "target-rebound"


@dataclass(frozen=True)
class PPDEntry:
    kind: str
    step: str | None = None
    param: str | None = None
    old: Any = None
    new: Any = None
    position: int | None = None
    spec: OperatorSpec | None = None
    order: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "step": self.step}
        if self.kind == PARAM_CHANGED:
            d.update(param=self.param, old=self.old, new=self.new)
        elif self.kind == TARGET_REBOUND:
            d.update(old=self.old, new=self.new)
        elif self.kind == STEP_ADDED:
            d.update(position=self.position, spec=self.spec.to_dict())
        elif self.kind == STEP_REORDERED:
            d.update(order=list(self.order))
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> PPDEntry:
        kind = d["kind"]
        if kind == STEP_ADDED:
            return cls(kind, d["step"], position=d["position"], spec=OperatorSpec.from_dict(d["spec"]))
        if kind == STEP_REORDERED:
            return cls(kind, d.get("step"), order=tuple(d["order"]))
        return cls(kind, d["step"], d.get("param"), d.get("old"), d.get("new"))


@dataclass
class PipelineProfileDiff:
    entries: list[PPDEntry] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def of_kind(self, kind: str) -> list[PPDEntry]:
        return [e for e in self.entries if e.kind == kind]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping) -> PipelineProfileDiff:
        return cls([PPDEntry.from_dict(e) for e in d.get("entries", [])])


def rebind(spec: OperatorSpec, old: str, new: str) -> OperatorSpec:
    """Replace property name ``old`` by ``new`` in targets and name-list parameters."""
    params = _canonical.loads(_canonical.dumps(spec.params))
    for pname in NAME_PARAMS:
        if isinstance(params.get(pname), list):
            params[pname] = [new if n == old else n for n in params[pname]]
    return spec.copy(targets=tuple(new if t == old else t for t in spec.targets), params=params)


def _rename_pairs(a: OperatorSpec, b: OperatorSpec) -> list[tuple[str, str]]:
    """Consistent position-wise name substitutions turning ``a``'s names into ``b``'s."""
    seqs = [(list(a.targets), list(b.targets))]
    for pname in NAME_PARAMS:
        x, y = a.params.get(pname), b.params.get(pname)
        if isinstance(x, list) and isinstance(y, list):
            seqs.append((x, y))
    mapping: dict[str, str] = {}
    bad: set[str] = set()
    for x, y in seqs:
        if len(x) != len(y):
            continue
        for o, n in zip(x, y):
            if o == n:
                continue
            if mapping.get(o, n) != n:
                bad.add(o)
            mapping[o] = n
    return [(o, n) for o, n in mapping.items() if o not in bad]


def diff_pipeline_profiles(old: PipelineProfile, new: PipelineProfile) -> PipelineProfileDiff:
    """Deterministic edit set; :func:`apply_pipeline_diff` replays it onto ``old`` to obtain ``new``'s steps."""
    entries: list[PPDEntry] = []
    new_by_id = {s.id: s for s in new.steps}
    old_by_id = {s.id: s for s in old.steps}
    replaced = set()
    edits: list[PPDEntry] = []
    for s in old.steps:
        t = new_by_id.get(s.id)
        if t is None:
            continue
        if (s.algorithm, s.semantic_context) != (t.algorithm, t.semantic_context):
            replaced.add(s.id)
            continue
        cur = s
        rebinds = []
        for o, n in _rename_pairs(s, t):
            cur = rebind(cur, o, n)
            rebinds.append(PPDEntry(TARGET_REBOUND, s.id, old=o, new=n))
        if cur.targets != t.targets:
            replaced.add(s.id)
            continue
        edits.extend(rebinds)
        for pname in sorted(set(cur.params) | set(t.params)):
            a, b = cur.params.get(pname), t.params.get(pname)
            if _canonical.dumps(a) != _canonical.dumps(b):
                edits.append(PPDEntry(PARAM_CHANGED, s.id, pname, a, b))
    for s in old.steps:
        if s.id not in new_by_id or s.id in replaced:
            entries.append(PPDEntry(STEP_REMOVED, s.id))
    entries.extend(edits)
    for pos, t in enumerate(new.steps):
        if t.id not in old_by_id or t.id in replaced:
            entries.append(PPDEntry(STEP_ADDED, t.id, position=pos, spec=t))
    if _replay(old.steps, entries) != [s.id for s in new.steps]:
        entries.append(PPDEntry(STEP_REORDERED, order=tuple(s.id for s in new.steps)))
    return PipelineProfileDiff(entries)


def _replay(steps: Sequence[OperatorSpec], entries: Sequence[PPDEntry]) -> list[str]:
    ids = [s.id for s in steps]
    for e in entries:
        if e.kind == STEP_REMOVED:
            ids.remove(e.step)
        elif e.kind == STEP_ADDED:
            ids.insert(e.position, e.step)
    return ids


def apply_pipeline_diff(old: PipelineProfile, diff: PipelineProfileDiff, version: int | None = None,
                        provenance: Provenance | None = None) -> PipelineProfile:
    """Patch ``old`` with ``diff``: removals, rebinds, parameter changes, insertions, then a reorder."""
    steps = {s.id: s for s in old.steps}
    order = [s.id for s in old.steps]
    kinds = [STEP_REMOVED, TARGET_REBOUND, PARAM_CHANGED, STEP_ADDED, STEP_REORDERED]
    for kind in kinds:
        for e in diff.entries:
            if e.kind != kind:
                continue
            if kind == STEP_REMOVED:
                if e.step not in steps:
                    raise PatchConflict(f"cannot remove unknown step {e.step!r}")
                del steps[e.step]
                order.remove(e.step)
            elif kind == TARGET_REBOUND:
                steps[_known(steps, e.step)] = rebind(steps[e.step], e.old, e.new)
            elif kind == PARAM_CHANGED:
                spec = steps[_known(steps, e.step)]
                params = _canonical.loads(_canonical.dumps(spec.params))
                if e.new is None:
                    params.pop(e.param, None)
                else:
                    params[e.param] = e.new
                steps[e.step] = spec.copy(params=params)
            elif kind == STEP_ADDED:
                if e.step in steps:
                    raise PatchConflict(f"step {e.step!r} already exists")
                steps[e.step] = e.spec
                order.insert(min(e.position, len(order)), e.step)
            else:
                if sorted(e.order) != sorted(order):
                    raise PatchConflict("reorder does not permute the current steps")
                order = list(e.order)
    return PipelineProfile(old.project, old.version + 1 if version is None else version,
                           [steps[i] for i in order], old.source,
                           provenance or Provenance("adaptation", old.version, None, None))


def _known(steps: Mapping[str, OperatorSpec], step_id: str) -> str:
    if step_id not in steps:
        raise PatchConflict(f"unknown step {step_id!r}")
    return step_id


def step_touches(spec: OperatorSpec, names: set[str]) -> bool:
    """Whether the step reads or writes any of ``names``."""
    sets = access_sets(spec)
    return bool((sets.read | sets.write | set(spec.params.get("key") or ())) & names)
