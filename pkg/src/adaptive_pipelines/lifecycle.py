"""Project lifecycle on top of the registry: initialize, optimize, process batches, report.

Each ``cmd_*`` function returns a :class:`CommandResult` whose ``code`` is the
process exit status; known failures are mapped to codes instead of raised.
"""

from __future__ import annotations

import functools
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import _canonical
from .adapt import AdaptContext, ChangeReport, adapt_pipeline
from .config import ProjectConfig
from .errors import ConstraintSet, ErrorProfile, detect_errors, diff_error_profiles
from .evolution import RenameConfig, SchemaVersionGraph, graph_extend, graph_lookup, infer_smos, rename_map
from .exceptions import (AlreadyExists, ConfigError, EmptySlot, ParseError, PipelineError, ProjectExists,
                         SpecError, UnknownBatch)
from .model import Batch, IngestConfig, Schema, conform, extract_schema, ingest
from .optimizer import BestPractice, builtin_rules, compose, forbid_rule
from .pipeline import ExecutionContext, PipelineProfile, diff_pipeline_profiles, execute, utc_now
from .profiling import (DataAssertion, DataProfile, DegenerateRangeWarning, build_profile, check_assertions,
                        diff_profiles, generate_assertions, rename_assertions, update_assertions)
from .registry import Project, Registry
from .scenario import ScenarioSpec, write_scenario

EXIT = {
    "ok": 0,
    "clean": 0,
    "error": 1,
    "file-not-found": 2,
    "parse-error": 3,
    "empty-slot": 4,
    "unknown-batch": 5,
    "invalid-input": 6,
    "adapted": 10,
    "escalated": 11,
    "failed": 12,
    "reused": 13,
    "changed": 14,
    "usage": 64,
}


@dataclass
class CommandResult:
    status: str
    payload: dict = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)

    @property
    def code(self) -> int:
        return EXIT[self.status]

    def render(self, fmt: str = "text") -> str:
        if fmt == "json":
            return _canonical.dumps({"status": self.status, "code": self.code, **self.payload})
        return "\n".join(self.lines)


def _guard(fn: Callable[..., CommandResult]) -> Callable[..., CommandResult]:
    """Map the documented failure classes onto exit statuses."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> CommandResult:
        try:
            return fn(*args, **kwargs)
        except FileNotFoundError as exc:
            return _fail("file-not-found", f"file not found: {exc.filename or exc}")
        except ParseError as exc:
            return _fail("parse-error", f"parse error at line {exc.line}: {exc}", line=exc.line)
        except EmptySlot as exc:
            return _fail("empty-slot", str(exc), reasons=list(exc.reasons))
        except UnknownBatch as exc:
            return _fail("unknown-batch", str(exc))
        except (ConfigError, SpecError, ProjectExists, AlreadyExists, json.JSONDecodeError) as exc:
            return _fail("invalid-input", f"{type(exc).__name__}: {exc}")
        except PipelineError as exc:
            return _fail("error", f"{type(exc).__name__}: {exc}")

    return wrapper


def _fail(status: str, message: str, **extra) -> CommandResult:
    return CommandResult(status, {"error": message, **extra}, [f"error: {message}"])


# ---------------------------------------------------------------- helpers

def _read(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_json(path: str | Path) -> Any:
    return json.loads(_read(path))


def _ingest(text: str, cfg: ProjectConfig, batch_id: int, schema: Schema | None = None) -> tuple[Batch, Schema]:
    raw = ingest(text, "csv", IngestConfig(cfg.missing_tokens, batch_id=batch_id))
    if schema is None:
        schema = extract_schema(raw, cfg.type_overrides)
    return conform(raw, schema, strict=False), schema


def _rules(cfg: ProjectConfig):
    return builtin_rules(cfg.optimizer.knn_max_missing) + [forbid_rule(r) for r in cfg.optimizer.rules]


def _assertions(doc: Sequence[Mapping]) -> list[DataAssertion]:
    return [DataAssertion.from_dict(a) for a in doc]


def _meta(project: Project, batch_id: int) -> dict:
    return project.get("batch", batch_id, "meta")


def _current(project: Project) -> tuple[int, dict]:
    batches = project.batches()
    if not batches:
        raise PipelineError(f"project {project.name} has no batches")
    return batches[-1], _meta(project, batches[-1])


def _history(project: Project, mapping: Mapping[str, str], limit: int = 10) -> list[DataProfile]:
    """Earlier data profiles in current property names, oldest first."""
    out = []
    for b in project.batches()[-limit:]:
        out.append(DataProfile.from_dict(project.get("batch", b, "dp")).renamed(mapping))
    return out


def _profile(batch: Batch, schema: Schema, cfg: ProjectConfig) -> DataProfile:
    return build_profile(batch, schema, cfg.profile)


def _seed_assertions(dp: DataProfile, cfg: ProjectConfig) -> list[DataAssertion]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateRangeWarning)
        return generate_assertions(dp, cfg.assertion_slack, cfg.null_margin)


def _summary_lines(dp: DataProfile, ep: ErrorProfile) -> list[str]:
    lines = [f"rows: {dp.row_count}", "properties:"]
    for p in dp.schema.properties:
        lines.append(f"  {p.name:<28} {p.dtype.value:<12} missing {dp.missing_rate(p.name):.3f}")
    lines.append("errors:")
    for pair in ep.targets():
        lines.append(f"  {pair[0]:<28} {pair[1].value:<20} rate {ep.rate(pair):.4f}")
    return lines


# ---------------------------------------------------------------- init

@_guard
def cmd_init(root: str | Path, name: str, batch_file: str | Path,
             config: ProjectConfig | Mapping | None = None) -> CommandResult:
    """Create the project, ingest its first batch and persist profiles, assertions and the schema graph."""
    text = _read(batch_file)
    cfg = config if isinstance(config, ProjectConfig) else ProjectConfig.from_dict(config or {})
    batch, schema = _ingest(text, cfg, 1)
    project = Registry(root).init_project(name, cfg)
    dp = _profile(batch, schema, cfg)
    ep = detect_errors(batch, schema, cfg.constraints, cfg.detection, positions=True)
    project.put("batch", 1, "data", text)
    project.put("batch", 1, "dp", dp)
    project.put("batch", 1, "ep", ep)
    project.put("batch", 1, "assertions", [a.to_dict() for a in _seed_assertions(dp, cfg)])
    project.put("batch", 1, "meta", {"batch": 1, "file": str(batch_file), "schema": schema.to_dict(),
                                     "fingerprint": schema.fingerprint, "pipeline_version": None,
                                     "status": "initialized", "timestamp": utc_now()})
    project.save_graph(SchemaVersionGraph.start(schema, 1))
    lines = [f"project {name} initialized with batch 1"] + _summary_lines(dp, ep)
    return CommandResult("ok", {"project": name, "batch": 1, "schema": schema.to_dict(),
                                "errors": {f"{p}|{e.value}": ep.rate((p, e)) for p, e in ep.targets()}}, lines)


# ---------------------------------------------------------------- optimize

@_guard
def cmd_optimize(root: str | Path, name: str, strategy: str | None = None, budget: int | None = None,
                 best_practices: str | Path | Sequence[Mapping] | None = None,
                 width: int | None = None) -> CommandResult:
    """Compose pipeline version 1 for the first batch and store it with its optimization report."""
    project = Registry(root).project(name)
    cfg = project.config()
    meta = _meta(project, 1)
    schema = Schema.from_dict(meta["schema"])
    batch, _ = _ingest(project.get("batch", 1, "data"), cfg, 1, schema)
    dp = DataProfile.from_dict(project.get("batch", 1, "dp"))
    practices = [BestPractice.from_dict(p) for p in cfg.optimizer.best_practices]
    if best_practices is not None:
        extra = _load_json(best_practices) if isinstance(best_practices, (str, Path)) else best_practices
        practices += [BestPractice.from_dict(p) for p in extra]
    if project.exists("pipeline", 1, "pp"):
        raise AlreadyExists(f"project {name} already has pipeline version 1")
    space, report = compose(batch, schema, cfg.constraints, cfg.weights, data_profile=dp, rules=_rules(cfg),
                            practices=practices, grid_overrides=cfg.optimizer.grids,
                            strategy=strategy or cfg.optimizer.strategy, width=width or cfg.optimizer.width,
                            budget=budget if budget is not None else cfg.optimizer.budget,
                            detection=cfg.detection, project=name, source=meta["file"], trigger_batch=1)
    pp = report.pipeline
    _, run = execute(pp, batch, ExecutionContext(schema, cfg.constraints, cfg.weights, cfg.detection, cfg.profile,
                                                 granularity=cfg.granularity))
    project.put("pipeline", 1, "pp", pp)
    project.put("pipeline", 1, "constraints", cfg.constraints)
    project.put("pipeline", 1, "optimize_report", {**report.to_dict(), "space": space.to_dict()})
    project.put("batch", 1, "run", run)
    graph = project.graph()
    graph.associate(schema.fingerprint, 1)
    project.save_graph(graph)
    lines = [f"pipeline v1: {len(pp.steps)} steps, score {report.score:.6f} "
             f"({report.evaluations} evaluations{', truncated' if report.truncated else ''})", "search space:"]
    for f in report.funnel:
        lines.append(f"  {f['stage']:<16} slots {f['slots']:>3}  ordering-relevant {f['ordering_relevant']:>3}"
                     f"  size {f['size']}")
    for s in pp.steps:
        lines.append(f"  {s.id} {s.algorithm}({', '.join(s.targets)}) {_canonical.dumps(s.params)}")
    return CommandResult("ok", {"version": 1, "score": report.score, "evaluations": report.evaluations,
                                "funnel": report.funnel, "truncated": report.truncated,
                                "pipeline": pp.to_dict()}, lines)


# ---------------------------------------------------------------- process

@dataclass
class _Prepared:
    """Everything derived from a new batch before any decision is made."""

    batch_id: int
    text: str
    batch: Batch
    schema: Schema
    dp: DataProfile
    ep: ErrorProfile
    report: ChangeReport
    mapping: dict[str, str]
    dropped: list[str]
    old_dp: DataProfile
    old_ep: ErrorProfile
    constraints: ConstraintSet
    assertions: list[DataAssertion]
    baseline: float | None


def _prepare(project: Project, cfg: ProjectConfig, text: str, prev_id: int, prev_meta: dict,
             pipeline_version: int) -> _Prepared:
    batch_id = prev_id + 1
    batch, schema = _ingest(text, cfg, batch_id)
    prev_schema = Schema.from_dict(prev_meta["schema"])
    prev_dp = DataProfile.from_dict(project.get("batch", prev_id, "dp"))
    prev_ep = ErrorProfile.from_dict(project.get("batch", prev_id, "ep"))
    dp = _profile(batch, schema, cfg)
    if schema == prev_schema:
        smos, evidence = [], []
    else:
        smos, evidence = infer_smos(prev_schema, schema, prev_dp, dp,
                                    RenameConfig(cfg.adaptation.rename_delta, cfg.adaptation.rename_margin))
    mapping = rename_map(smos)
    dropped = [s.name for s in smos if s.kind == "remove"]
    constraints = ConstraintSet.from_dict(project.get("pipeline", pipeline_version, "constraints"))
    constraints = constraints.renamed(mapping, dropped)
    old_dp = prev_dp.renamed(mapping)
    old_ep = prev_ep.renamed(mapping)
    ep = detect_errors(batch, schema, constraints, cfg.detection, positions=True)
    assertions = rename_assertions(_assertions(project.get("batch", prev_id, "assertions")), mapping, dropped)
    report = ChangeReport(batch_id, diff_profiles(old_dp, dp, cfg.profile), diff_error_profiles(old_ep, ep),
                          check_assertions(batch, assertions), smos, evidence)
    baseline = None
    if project.exists("batch", prev_id, "run"):
        baseline = project.get("batch", prev_id, "run").get("quality_after")
    return _Prepared(batch_id, text, batch, schema, dp, ep, report, mapping, dropped, old_dp, old_ep, constraints,
                     assertions, baseline)


@_guard
def cmd_process(root: str | Path, name: str, batch_file: str | Path, no_adapt: bool = False,
                timestamp: str | None = None) -> CommandResult:
    """Monitor a new batch, adapt the pipeline when it changed, run the resulting version and persist everything.

    Outcomes: ``clean`` (nothing significant), ``adapted`` (new version by
    adaptation), ``escalated`` (new version by re-optimization), ``reused`` (the
    schema matched an earlier graph node with a pipeline), ``changed``
    (significant change but adaptation disabled) and ``failed`` (the pipeline
    that ran is not functional).
    """
    text = _read(batch_file)
    project = Registry(root).project(name)
    cfg = project.config()
    if not project.versions():
        raise PipelineError(f"project {name} has no pipeline yet; run optimize first")
    timestamp = timestamp or utc_now()
    prev_id, prev_meta = _current(project)
    current_version = prev_meta["pipeline_version"] or 1
    prep = _prepare(project, cfg, text, prev_id, prev_meta, current_version)
    batch_id, schema = prep.batch_id, prep.schema

    graph = project.graph()
    prev_fp = prev_meta["fingerprint"]
    hit = graph_lookup(graph, schema)
    if schema.fingerprint != prev_fp:
        graph = graph_extend(graph, prev_fp, prep.report.smos, schema, batch_id)
    pp = PipelineProfile.from_dict(project.get("pipeline", current_version, "pp"))
    history = _history(project, prep.mapping)
    weights = cfg.weights.renamed(prep.mapping)

    status, version, constraints, outcome, run = "clean", current_version, prep.constraints, None, None
    reuse = (hit is not None and hit[1] is not None and schema.fingerprint != prev_fp)
    if reuse:
        status, version = "reused", hit[1]
        pp = PipelineProfile.from_dict(project.get("pipeline", version, "pp"))
        constraints = ConstraintSet.from_dict(project.get("pipeline", version, "constraints"))
    elif prep.report.significant and cfg.adaptation.enabled and not no_adapt:
        ctx = AdaptContext(prep.batch, schema, prep.old_dp, prep.dp, prep.old_ep, prep.ep, prep.constraints,
                           weights, _rules(cfg), cfg.optimizer.grids, history, cfg.adaptation.retune_violation_jump,
                           cfg.adaptation.correlation)

        def reoptimize(cons: ConstraintSet) -> PipelineProfile:
            _, rep = compose(prep.batch, schema, cons, weights, data_profile=prep.dp, rules=_rules(cfg),
                             grid_overrides=cfg.optimizer.grids, strategy=cfg.optimizer.strategy,
                             width=cfg.optimizer.width, budget=cfg.optimizer.budget, detection=cfg.detection,
                             history=history, project=name, trigger_batch=batch_id)
            return rep.pipeline

        outcome = adapt_pipeline(prep.report, pp, ctx, prep.baseline, cfg.adaptation.tau, timestamp, reoptimize)
        constraints = outcome.constraints or prep.constraints
        changed = (outcome.pipeline.fingerprint != pp.fingerprint
                   or constraints.to_dict() != prep.constraints.to_dict() or outcome.escalated)
        if changed:
            version = max(project.versions()) + 1
            new = PipelineProfile(name, version, outcome.pipeline.steps, pp.source,
                                  replace(outcome.pipeline.provenance, parent=pp.version))
            ppd = diff_pipeline_profiles(pp, new)
            project.put("pipeline", version, "pp", new)
            project.put("pipeline", version, "ppd", ppd)
            project.put("pipeline", version, "constraints", constraints)
            project.put("pipeline", version, "adapt_report", outcome)
            pp = new
            status = "escalated" if outcome.escalated else "adapted"
    elif prep.report.significant:
        status = "changed"

    ctx = ExecutionContext(schema, constraints, weights, cfg.detection, cfg.profile, history, cfg.granularity)
    _, run = execute(pp, prep.batch, ctx)
    if not run.functional:
        status = "failed"
    if schema.fingerprint not in graph.nodes or graph.nodes[schema.fingerprint].pipeline_version is None \
            or status in ("adapted", "escalated"):
        graph.associate(schema.fingerprint, pp.version)

    # assertions follow the accepted data: widen on clean batches, re-seed after an accepted change
    if status in ("adapted", "escalated", "reused"):
        assertions = _seed_assertions(prep.dp, cfg)
    elif status == "clean":
        assertions = update_assertions(prep.assertions, prep.dp, null_margin=cfg.null_margin)
    else:
        assertions = prep.assertions

    project.put("batch", batch_id, "data", text)
    project.put("batch", batch_id, "dp", prep.dp)
    project.put("batch", batch_id, "ep", prep.ep)
    project.put("batch", batch_id, "changereport", prep.report)
    project.put("batch", batch_id, "assertions", [a.to_dict() for a in assertions])
    project.put("batch", batch_id, "run", run)
    project.put("batch", batch_id, "meta", {"batch": batch_id, "file": str(batch_file), "schema": schema.to_dict(),
                                            "fingerprint": schema.fingerprint, "pipeline_version": pp.version,
                                            "status": status, "timestamp": timestamp})
    project.save_graph(graph)

    rep = prep.report
    lines = [f"batch {batch_id}: {status} (pipeline v{pp.version})",
             f"significant changes: {', '.join(sorted(rep.data_diff.significant_properties())) or 'none'}",
             f"schema changes: {', '.join(_canonical.dumps(s.to_dict()) for s in rep.smos) or 'none'}",
             f"assertion failures: {len(rep.assertions.failures)}",
             f"quality before {run.quality_before:.6f} after "
             + (f"{run.quality_after:.6f}" if run.quality_after is not None else "n/a")]
    if run.failure:
        lines.append(f"failure: {run.failure}")
    payload = {"batch": batch_id, "pipeline_version": pp.version, "significant": rep.significant,
               "smos": [s.to_dict() for s in rep.smos], "functional": run.functional,
               "quality_before": run.quality_before, "quality_after": run.quality_after,
               "baseline": prep.baseline}
    if outcome is not None:
        payload["decision"] = outcome.decision
        payload["adaptation_steps"] = [s.to_dict() for s in outcome.steps]
    return CommandResult(status, payload, lines)


# ---------------------------------------------------------------- report

def _version_label(version: int | None) -> str:
    return "-" if version is None else f"v{version}"


@_guard
def cmd_report(root: str | Path, name: str, batch: int | None = None, property: str | None = None
               ) -> CommandResult:
    """Render stored artifacts: a batch's change report, one property's drift series, or the project overview."""
    project = Registry(root).project(name)
    if batch is not None:
        if batch not in project.batches():
            raise UnknownBatch(f"batch {batch} is not in project {name}")
        meta = _meta(project, batch)
        if project.exists("batch", batch, "changereport"):
            doc = project.get("batch", batch, "changereport")
            rep = ChangeReport.from_dict(doc)
            lines = [f"batch {batch}: {meta['status']} (pipeline {_version_label(meta['pipeline_version'])})"]
            for e in rep.data_diff.entries:
                if e.significant or e.kind != "stat-delta":
                    lines.append(f"  {e.property:<28} {e.kind:<16} {e.statistic or '':<14} {e.old} -> {e.new}")
            for s in rep.smos:
                lines.append(f"  smo {_canonical.dumps(s.to_dict())}")
            for f in rep.assertions.failures:
                lines.append(f"  assertion {f.assertion.property} {f.assertion.kind} failed "
                             f"({f.violating_rows} violating rows)")
            for n in rep.error_diff.novelties():
                lines.append(f"  new error {n.property} {n.error_type.value} rate {n.new_rate:.4f}")
            return _Verbatim(doc, lines)
        dp = DataProfile.from_dict(project.get("batch", batch, "dp"))
        ep = ErrorProfile.from_dict(project.get("batch", batch, "ep"))
        return CommandResult("ok", {"meta": meta, "dp": dp.to_dict()}, [f"batch {batch}: {meta['status']}"]
                             + _summary_lines(dp, ep))
    if property is not None:
        rows = []
        for b in project.batches():
            stats = project.get("batch", b, "dp")["stats"].get(property)
            rows.append({"batch": b, "mean": stats.get("mean") if stats else None,
                         "std": stats.get("std") if stats else None})
        lines = [f"{'batch':>5}  {'mean':>14}  {'std':>14}"]
        for r in rows:
            fmt = lambda v: "-" if v is None else f"{v:.4f}"  # noqa: E731
            lines.append(f"{r['batch']:>5}  {fmt(r['mean']):>14}  {fmt(r['std']):>14}")
        return CommandResult("ok", {"property": property, "series": rows}, lines)
    batches = [{k: _meta(project, b)[k] for k in ("batch", "status", "pipeline_version")} for b in project.batches()]
    versions = []
    for v in project.versions():
        pp = project.get("pipeline", v, "pp")
        versions.append({"version": v, "parent": pp.get("parent"), "created_by": pp["provenance"]["created_by"],
                         "steps": len(pp["steps"]), "fingerprint": pp["fingerprint"]})
    lines = [f"project {name}", "batches:"]
    lines += [f"  {b['batch']:>4} {b['status']:<12} {_version_label(b['pipeline_version'])}" for b in batches]
    lines.append("pipeline versions:")
    lines += [f"  v{v['version']} parent {v['parent']} by {v['created_by']}, {v['steps']} steps" for v in versions]
    return CommandResult("ok", {"batches": batches, "versions": versions}, lines)


class _Verbatim(CommandResult):
    """A stored artifact printed exactly as persisted when JSON output is requested."""

    def __init__(self, doc: Any, lines: list[str]):
        super().__init__("ok", {"artifact": doc}, lines)
        self.doc = doc

    def render(self, fmt: str = "text") -> str:
        return _canonical.dumps(self.doc) if fmt == "json" else super().render(fmt)


# ---------------------------------------------------------------- scenario

@_guard
def cmd_scenario(spec: str | Path | Mapping, out_dir: str | Path, seed: int | None = None) -> CommandResult:
    doc = dict(_load_json(spec) if isinstance(spec, (str, Path)) else spec)
    if seed is not None:
        doc["seed"] = seed
    try:
        scenario = ScenarioSpec.from_dict(doc)
    except TypeError as exc:
        raise SpecError(str(exc)) from exc
    paths = write_scenario(scenario, out_dir)
    return CommandResult("ok", {"files": [p.name for p in paths], "out_dir": str(out_dir)},
                         [f"wrote {p}" for p in paths])
