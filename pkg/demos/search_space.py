"""Detect the errors in one generated batch, build the repair search space and let the optimizer pick a pipeline."""

from adaptive_pipelines.config import ProjectConfig
from adaptive_pipelines.errors import detect_errors
from adaptive_pipelines.model import conform, extract_schema, ingest
from adaptive_pipelines.optimizer import build_search_space, compose, count_space
from adaptive_pipelines.scenario import ScenarioSpec, generate_batches, project_config


def main() -> None:
    spec = ScenarioSpec(rows=2000, seed=42)
    cfg = ProjectConfig.from_dict(project_config(spec))
    raw = ingest(generate_batches(spec)[0].csv, "csv")
    schema = extract_schema(raw, cfg.type_overrides)
    batch = conform(raw, schema, strict=False)

    errors = detect_errors(batch, schema, cfg.constraints, cfg.detection, positions=False)
    print(f"{len(errors.counts)} repair targets:")
    for (prop, kind), count in sorted(errors.counts.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        print(f"  {prop:<16} {kind.value:<20} {count:>5}")

    space = build_search_space(errors)
    print(f"unpruned candidate pipelines: {count_space(space):,}")

    pruned, report = compose(batch, schema, cfg.constraints, cfg.weights, detection=cfg.detection)
    print(f"after rules and independence: {count_space(pruned):,}")
    print(f"chosen pipeline (quality {report.score:.4f}):")
    for step in report.pipeline.steps:
        print(f"  {step.id}: {step.algorithm}{list(step.targets)} {step.params}")


if __name__ == "__main__":
    main()
