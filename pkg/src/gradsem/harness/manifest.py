"""Experiment manifests and human response files."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..church.inference import asset_text
from ..scorer.prompt import EXPERIMENTS, FORMS, Stimulus, ThetaGrid
from ..stats import HumanResponses


class ValidationError(ValueError):
    """Malformed manifest or human-response input."""


@dataclass
class ExperimentManifest:
    experiment: str
    world_model_asset: str
    grid: ThetaGrid
    stimuli: list[Stimulus]
    notes: str = ""
    domain_text: str = ""
    source_sha256: str = ""

    def __post_init__(self):
        seen = set()
        for s in self.stimuli:
            if s.id in seen:
                raise ValidationError(f"duplicate stimulus id {s.id!r}")
            seen.add(s.id)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.stimuli]

    def stimulus(self, sid: str) -> Stimulus:
        for s in self.stimuli:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def without(self, sid: str) -> "ExperimentManifest":
        return ExperimentManifest(self.experiment, self.world_model_asset, self.grid,
                                  [s for s in self.stimuli if s.id != sid], self.notes,
                                  self.domain_text, self.source_sha256)


def bundled_manifest_path(experiment: str) -> Path:
    name = f"{experiment.lower()}_manifest.json"
    return Path(str(resources.files("gradsem.harness").joinpath("data", name)))


def _line_of(text: str, needle: str) -> int | None:
    idx = text.find(needle)
    return None if idx < 0 else text.count("\n", 0, idx) + 1


def _fail(text: str, field: str, message: str, needle: str | None = None) -> ValidationError:
    line = _line_of(text, needle) if needle else None
    where = f" (line {line})" if line else ""
    return ValidationError(f"manifest field {field!r}{where}: {message}")


def _resolve_asset(name: str, base: Path) -> str:
    candidate = Path(name)
    if not candidate.is_absolute():
        candidate = base / candidate
    if candidate.exists():
        return candidate.read_text("utf-8")
    for experiment in EXPERIMENTS:
        try:
            if name == f"tug_of_war_{experiment.lower()}.church":
                return asset_text(experiment)
        except FileNotFoundError:
            pass
    raise FileNotFoundError(f"world-model asset {name!r} not found")


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    text = path.read_text("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: manifest must be a JSON object")
    for key in ("experiment", "world_model_asset", "stimuli"):
        if key not in data:
            raise _fail(text, key, "missing")
    experiment = data["experiment"]
    if experiment not in EXPERIMENTS:
        raise _fail(text, "experiment", f"must be one of {EXPERIMENTS}", '"experiment"')
    try:
        grid = ThetaGrid(tuple(data.get("grid", ThetaGrid().values)))
    except (TypeError, ValueError) as exc:
        raise _fail(text, "grid", str(exc), '"grid"') from None
    if not isinstance(data["stimuli"], list) or not data["stimuli"]:
        raise _fail(text, "stimuli", "must be a non-empty list", '"stimuli"')
    stimuli = []
    seen: set[str] = set()
    for i, raw in enumerate(data["stimuli"]):
        if not isinstance(raw, dict):
            raise _fail(text, f"stimuli[{i}]", "must be an object", '"stimuli"')
        sid = raw.get("id")
        needle = f'"{sid}"' if sid else '"stimuli"'
        for key in ("id", "sentence"):
            if not isinstance(raw.get(key), str) or not raw[key].strip():
                raise _fail(text, f"stimuli[{i}].{key}", "must be a non-empty string", needle)
        form = raw.get("form", "exceeds")
        if form not in FORMS:
            raise _fail(text, f"stimuli[{i}].form", f"must be one of {FORMS}", needle)
        if sid in seen:
            raise _fail(text, f"stimuli[{i}].id", f"duplicate id {sid!r}",
                        needle)
        seen.add(sid)
        metadata = raw.get("metadata", {})
        if not isinstance(metadata, dict):
            raise _fail(text, f"stimuli[{i}].metadata", "must be an object", needle)
        stimuli.append(Stimulus(sid, raw["sentence"], form, experiment, metadata))
    domain = _resolve_asset(data["world_model_asset"], path.parent)
    return ExperimentManifest(experiment, data["world_model_asset"], grid, stimuli,
                              data.get("notes", ""), domain,
                              hashlib.sha256(text.encode("utf-8")).hexdigest())


HUMAN_COLUMNS = ("participant_id", "stimulus_id", "estimate")


def load_human_csv(path: str | Path, manifest: ExperimentManifest) -> dict[str, HumanResponses]:
    """Group slider estimates by stimulus. Row numbers count the header as row 1."""
    path = Path(path)
    known = set(manifest.ids)
    grouped: dict[str, tuple[list[float], list[str]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: no responses")
        missing = [c for c in HUMAN_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {missing}")
        for row_number, row in enumerate(reader, start=2):
            sid = (row["stimulus_id"] or "").strip()
            if sid not in known:
                raise ValidationError(f"{path}: row {row_number}: unknown stimulus_id {sid!r}")
            try:
                estimate = float(row["estimate"])
            except (TypeError, ValueError):
                raise ValidationError(
                    f"{path}: row {row_number}: estimate {row['estimate']!r} is not a number") from None
            if not 0.0 <= estimate <= 100.0:
                raise ValidationError(
                    f"{path}: row {row_number}: estimate {estimate} outside [0, 100]")
            estimates, participants = grouped.setdefault(sid, ([], []))
            estimates.append(estimate)
            participants.append((row["participant_id"] or "").strip())
    if not grouped:
        raise ValidationError(f"{path}: no responses")
    return {sid: HumanResponses(sid, tuple(e), tuple(p))
            for sid in manifest.ids if sid in grouped
            for e, p in [grouped[sid]]}


def synthesize_human(manifest: ExperimentManifest, n_participants: int = 30, seed: int = 0,
                     spread: float = 12.0, targets: dict[str, float] | None = None) -> list[dict]:
    """Synthetic slider responses around each stimulus' target threshold.

    Targets default to the ``mock_target`` metadata (else 50). Estimates are
    normal draws rounded to whole slider units and clipped to [0, 100].
    """
    rng = np.random.default_rng(seed)
    rows = []
    for stim in manifest.stimuli:
        target = (targets or {}).get(stim.id, stim.metadata.get("mock_target", 50.0))
        draws = np.clip(np.rint(rng.normal(float(target), spread, n_participants)), 0, 100)
        for k, value in enumerate(draws):
            rows.append({"participant_id": f"p{k + 1:02d}", "stimulus_id": stim.id,
                         "estimate": int(value)})
    return rows


def write_human_csv(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=HUMAN_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
