"""Self-adapting data-preparation pipelines.

Profile each incoming batch, detect data errors, compose a repair pipeline
from an operator catalog, and adapt that pipeline when the data changes.
"""

from .adapt import AdaptContext, AdaptationOutcome, ChangeReport, adapt_pipeline, interpret_changes
from .config import ProjectConfig
from .errors import (ConstraintSet, DetectionConfig, ErrorProfile, ErrorType, QualityWeights, detect_errors,
                     diff_error_profiles, quality_score, tracked_pairs)
from .evolution import SMO, SchemaVersionGraph, apply_smos, graph_extend, graph_lookup, infer_smos
from .exceptions import *  # noqa: F401,F403
from .lifecycle import CommandResult, cmd_init, cmd_optimize, cmd_process, cmd_report, cmd_scenario
from .model import Batch, DType, Schema, conform, extract_schema, ingest
from .operators import CATALOG, OperatorSpec, access_sets, apply_operator, commutes
from .optimizer import SearchSpace, build_search_space, compose, count_space, optimize
from .pipeline import PipelineProfile, PipelineProfileDiff, apply_pipeline_diff, diff_pipeline_profiles, execute
from .profiling import (DataProfile, DataProfileDiff, build_profile, check_assertions, diff_profiles,
                        generate_assertions, update_assertions)
from .registry import Project, Registry
from .scenario import ScenarioSpec, generate_batches, write_scenario

__version__ = "0.1.0"
