"""End-to-end experiment runs and result files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from .. import __version__
from ..calibrate import DEFAULT_MAX_ITER, DEFAULT_TOLERANCE, fit_alpha_loocv, softmax
from ..church.sexpr import format_number
from ..scorer.backends import BackendConfig, BackendError, make_backend
from ..scorer.prompt import PromptBundle, instruction_text
from ..scorer.scoring import ScoreVector, score_stimulus
from ..stats import (
    LOG_BASE,
    P_ESTIMATORS,
    PERMUTATION_MODES,
    HumanResponses,
    StatisticsError,
    empirical_distribution,
    fdr_bh,
    jensen_shannon_distance,
    permutation_test,
)
from .manifest import ExperimentManifest, ValidationError

POOLING_MODES = ("per_experiment", "per_panel")


class RunAborted(RuntimeError):
    """A backend failure stopped the run; `record` names the completed stimuli."""

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


@dataclass
class RunConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    n_permutations: int = 10_000
    seed: int = 0
    significance_level: float = 0.05
    output_dir: str = "results"
    loocv_pooling: str = "per_experiment"
    permutation_mode: str = "both_shuffled"
    p_value_estimator: str = "strict"
    stimulus_workers: int = 1
    tolerance: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.loocv_pooling not in POOLING_MODES:
            raise ValidationError(f"loocv_pooling must be one of {POOLING_MODES}")
        if self.permutation_mode not in PERMUTATION_MODES:
            raise ValidationError(f"permutation_mode must be one of {PERMUTATION_MODES}")
        if self.p_value_estimator not in P_ESTIMATORS:
            raise ValidationError(f"p_value_estimator must be one of {P_ESTIMATORS}")
        if self.n_permutations < 1:
            raise ValidationError("n_permutations must be >= 1")
        if self.stimulus_workers < 1:
            raise ValidationError("stimulus_workers must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ResultRow:
    stimulus_id: str
    sentence: str
    alpha: float
    model_probs: tuple[float, ...]
    human_probs: tuple[float, ...]
    jsd: float
    p_raw: float
    p_fdr: float
    significant: bool


@dataclass
class RunOutput:
    rows: list[ResultRow]
    record: dict
    thetas: tuple[float, ...]
    scores: dict[str, ScoreVector]


def stimulus_seed(seed: int, stimulus_id: str) -> int:
    """Permutation seed for one stimulus: first 8 bytes of sha256("seed:id")."""
    return int.from_bytes(hashlib.sha256(f"{seed}:{stimulus_id}".encode()).digest()[:8], "big")


def _pool_of(stim, manifest: ExperimentManifest, pooling: str) -> str:
    if pooling == "per_panel":
        return f"{manifest.experiment}:{stim.metadata.get('panel', '')}"
    return manifest.experiment


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_experiment(manifest: ExperimentManifest, human_data: Mapping[str, HumanResponses],
                   run_config: RunConfig, backend=None,
                   bundle: PromptBundle | None = None) -> RunOutput:
    """Score, calibrate and compare every stimulus of one experiment."""
    missing = [sid for sid in manifest.ids if sid not in human_data]
    if missing:
        raise ValidationError(f"no human responses for stimuli {missing}")
    backend = backend if backend is not None else make_backend(run_config.backend)
    bundle = bundle or PromptBundle(manifest.domain_text, instruction_text())
    thetas = manifest.grid.values

    record: dict[str, Any] = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "package_version": __version__,
        "experiment": manifest.experiment,
        "config": run_config.to_dict(),
        "backend": {"id": backend.backend_id, "kind": run_config.backend.kind,
                    "model_name": run_config.backend.model_name},
        "assets": {
            "world_model_asset": manifest.world_model_asset,
            "world_model_sha256": _sha256(bundle.domain_text),
            "instructions_sha256": _sha256(bundle.instruction_text),
            "sentence_frame": bundle.sentence_frame,
            "manifest_sha256": manifest.source_sha256,
        },
        "decisions": {
            "log_base": LOG_BASE,
            "jsd_max": "sqrt(ln 2)",
            "slider_binning": "nearest grid value, ties round up",
            "score_length_normalization": "none",
            "alpha_parameterization": "alpha = exp(a), Nelder-Mead on a from a0 = 0, step 0.5",
            "loocv_pooling": run_config.loocv_pooling,
            "permutation_mode": run_config.permutation_mode,
            "p_value_estimator": run_config.p_value_estimator,
            "permutation_seed": "first 8 bytes of sha256('<seed>:<stimulus_id>')",
            "exact_permutation_when_enumerable": True,
            "significance": f"p_fdr < {run_config.significance_level}",
        },
        "grid": list(thetas),
        "stimuli": manifest.ids,
    }

    scores: dict[str, ScoreVector] = {}

    def score(stim):
        return stim.id, score_stimulus(backend, bundle, stim, manifest.grid,
                                       run_config.backend.max_inflight)

    try:
        if run_config.stimulus_workers > 1:
            with ThreadPoolExecutor(max_workers=run_config.stimulus_workers) as pool:
                futures = [pool.submit(score, s) for s in manifest.stimuli]
                failure = None
                for fut in futures:
                    try:
                        sid, vec = fut.result()
                        scores[sid] = vec
                    except BackendError as exc:
                        failure = failure or exc
                if failure is not None:
                    raise failure
        else:
            for stim in manifest.stimuli:
                sid, vec = score(stim)
                scores[sid] = vec
    except BackendError as exc:
        partial = dict(record, status="aborted", error=str(exc),
                       completed_stimuli=[sid for sid in manifest.ids if sid in scores],
                       backend_attempts=getattr(exc, "attempts", []))
        raise RunAborted(f"backend failure: {exc}", partial) from exc
    finally:
        close = getattr(backend, "close", None)
        if close is not None:
            close()

    human = {sid: empirical_distribution(human_data[sid], thetas) for sid in manifest.ids}
    groups = {s.id: _pool_of(s, manifest, run_config.loocv_pooling) for s in manifest.stimuli}
    fits = fit_alpha_loocv(scores, human, groups, run_config.tolerance, run_config.max_iter)

    partial_rows = []
    seeds = {}
    for stim in manifest.stimuli:
        sid = stim.id
        model = softmax(scores[sid], fits[sid].alpha)
        jsd = jensen_shannon_distance(human[sid], model)
        seeds[sid] = stimulus_seed(run_config.seed, sid)
        p_raw = permutation_test(human[sid], model, run_config.n_permutations, seeds[sid],
                                 run_config.permutation_mode, run_config.p_value_estimator)
        partial_rows.append((stim, model, jsd, p_raw))
    p_fdr = fdr_bh([r[3] for r in partial_rows])

    rows = []
    for (stim, model, jsd, p_raw), q in zip(partial_rows, p_fdr):
        rows.append(ResultRow(stim.id, stim.sentence, fits[stim.id].alpha,
                              tuple(model.probs.tolist()), tuple(human[stim.id].probs.tolist()),
                              jsd, p_raw, q, q < run_config.significance_level))

    record.update(
        status="complete",
        seeds={"run": run_config.seed, "permutation": seeds},
        prompt_hashes={sid: scores[sid].prompt_hash for sid in manifest.ids},
        fits={sid: {"alpha": f.alpha, "loss": f.loss, "iterations": f.iterations,
                    "converged": f.converged, "pool": f.pool} for sid, f in fits.items()},
        n_responses={sid: len(human_data[sid].estimates) for sid in manifest.ids},
    )
    return RunOutput(rows, record, tuple(thetas), scores)


# -- output --------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _check_row(row: ResultRow) -> None:
    values = [row.alpha, row.jsd, row.p_raw, row.p_fdr, *row.model_probs, *row.human_probs]
    if not all(math.isfinite(v) for v in values):
        raise StatisticsError(f"{row.stimulus_id}: refusing to write non-finite values")


def results_table(rows: list[ResultRow], thetas) -> str:
    """The results table as CSV text (deterministic formatting)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    labels = [format_number(float(t)) for t in thetas]
    writer.writerow(["stimulus_id", "sentence", "alpha",
                     *[f"model_p_{t}" for t in labels], *[f"human_p_{t}" for t in labels],
                     "jsd", "p_raw", "p_fdr", "significant"])
    for row in rows:
        writer.writerow([row.stimulus_id, row.sentence, _fmt(row.alpha),
                         *map(_fmt, row.model_probs), *map(_fmt, row.human_probs),
                         _fmt(row.jsd), _fmt(row.p_raw), _fmt(row.p_fdr),
                         "true" if row.significant else "false"])
    return buf.getvalue()


def emit_results(rows: list[ResultRow], run_config: RunConfig, record: dict | None = None,
                 thetas=None, output_dir: str | Path | None = None) -> dict[str, Any]:
    """Write results.csv, run_record.json and plot_data/<stimulus>.json."""
    if not rows:
        raise ValidationError("no result rows to write")
    for row in rows:
        _check_row(row)
    thetas = tuple(thetas if thetas is not None else (record or {}).get("grid", range(0, 101, 10)))
    out = Path(output_dir or run_config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "plot_data").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    table = results_table(rows, thetas)
    table_path = out / "results.csv"
    table_path.write_text(table, encoding="utf-8")
    record = dict(record or {"config": run_config.to_dict()})
    record["table_sha256"] = hashlib.sha256(table.encode("utf-8")).hexdigest()

    plot_paths = []
    for row in rows:
        plot = {
            "stimulus_id": row.stimulus_id,
            "sentence": row.sentence,
            "thetas": [float(t) for t in thetas],
            "model_probs": list(row.model_probs),
            "human_probs": list(row.human_probs),
            "alpha": row.alpha,
            "jsd": row.jsd,
            "p_raw": row.p_raw,
            "p_fdr": row.p_fdr,
            "significant": row.significant,
        }
        path = out / "plot_data" / f"{row.stimulus_id}.json"
        path.write_text(json.dumps(plot, indent=1) + "\n", encoding="utf-8")
        plot_paths.append(path)

    record_path = out / "run_record.json"
    record_path.write_text(json.dumps(record, indent=1, sort_keys=True, default=str) + "\n",
                           encoding="utf-8")
    return {"table": table_path, "record": record_path, "plot_data": plot_paths,
            "table_sha256": record["table_sha256"]}
