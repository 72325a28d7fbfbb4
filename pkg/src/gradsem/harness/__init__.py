"""Manifest-driven experiment runs."""

from .manifest import (
    ExperimentManifest,
    ValidationError,
    bundled_manifest_path,
    load_human_csv,
    load_manifest,
    synthesize_human,
    write_human_csv,
)
from .run import (
    ResultRow,
    RunAborted,
    RunConfig,
    RunOutput,
    emit_results,
    results_table,
    run_experiment,
    stimulus_seed,
)

__all__ = [
    "ExperimentManifest", "ResultRow", "RunAborted", "RunConfig", "RunOutput", "ValidationError",
    "bundled_manifest_path", "emit_results", "load_human_csv", "load_manifest", "results_table",
    "run_experiment", "stimulus_seed", "synthesize_human", "write_human_csv",
]
