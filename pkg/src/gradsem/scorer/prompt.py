"""Stimuli, candidate programs and prompt assembly."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Sequence

from ..church.inference import asset_text
from ..church.sexpr import format_number

FORMS = ("exceeds", "below")
EXPERIMENTS = ("E1", "E2")

_TEMPLATES = {
    "exceeds": "(condition (> (strength '{player}) {theta}))",
    "below": "(condition (< (strength '{player}) {theta}))",
}

SENTENCE_FRAME = "\n;; Sentence: {sentence}\n;; Condition:\n"


@dataclass(frozen=True)
class ThetaGrid:
    values: tuple[float, ...] = tuple(float(t) for t in range(0, 101, 10))

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("theta grid must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @classmethod
    def default(cls) -> "ThetaGrid":
        return cls()


@dataclass(frozen=True)
class Stimulus:
    id: str
    sentence: str
    form: str = "exceeds"
    experiment: str = "E1"
    metadata: dict[str, Any] = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if not self.id:
            raise ValueError("stimulus id must be non-empty")
        if not self.sentence.strip():
            raise ValueError(f"stimulus {self.id}: sentence must be non-empty")
        if self.form not in FORMS:
            raise ValueError(f"stimulus {self.id}: form must be one of {FORMS}, got {self.form!r}")
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"stimulus {self.id}: experiment must be one of {EXPERIMENTS}")

    @property
    def player(self) -> str:
        return self.metadata.get("player", "jack")


@dataclass(frozen=True)
class CandidateProgram:
    theta: float
    text: str


def candidate_text(form: str, theta: float, player: str = "jack") -> str:
    return _TEMPLATES[form].format(player=player, theta=format_number(float(theta)))


def build_candidates(stimulus: Stimulus, grid: ThetaGrid | Sequence[float]) -> list[CandidateProgram]:
    """One candidate condition per grid value, in grid order."""
    return [CandidateProgram(float(t), candidate_text(stimulus.form, t, stimulus.player))
            for t in grid]


def instruction_text() -> str:
    return resources.files("gradsem.scorer").joinpath("instructions.txt").read_text("utf-8")


@dataclass(frozen=True)
class PromptBundle:
    domain_text: str
    instruction_text: str
    sentence_frame: str = SENTENCE_FRAME

    @classmethod
    def for_experiment(cls, experiment: str) -> "PromptBundle":
        return cls(asset_text(experiment), instruction_text())

    def frame(self, sentence: str) -> str:
        return self.sentence_frame.format(sentence=sentence)

    def fingerprint(self) -> dict[str, str]:
        return {
            "domain_sha256": _sha256(self.domain_text),
            "instruction_sha256": _sha256(self.instruction_text),
            "sentence_frame": self.sentence_frame,
        }


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def assemble_prompt(bundle: PromptBundle, stimulus: Stimulus | str) -> str:
    """Domain model, then instructions, then the framed sentence.

    The prompt ends exactly where the candidate program starts.
    """
    sentence = stimulus if isinstance(stimulus, str) else stimulus.sentence
    return bundle.domain_text + bundle.instruction_text + bundle.frame(sentence)


def prompt_hash(prompt: str) -> str:
    return _sha256(prompt)
