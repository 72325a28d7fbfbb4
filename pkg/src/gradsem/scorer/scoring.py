"""Score candidate programs for a stimulus."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backends import BackendConfig, BackendError, make_backend
from .prompt import PromptBundle, Stimulus, ThetaGrid, assemble_prompt, build_candidates, prompt_hash


@dataclass(frozen=True)
class ScoreVector:
    stimulus_id: str
    thetas: tuple[float, ...]
    logprobs: tuple[float, ...]
    backend_id: str = "unknown"
    prompt_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "logprobs", tuple(float(x) for x in self.logprobs))
        if len(self.thetas) != len(self.logprobs):
            raise ValueError("thetas and logprobs differ in length")


def _resolve(backend):
    return make_backend(backend) if isinstance(backend, BackendConfig) else backend


def score_continuation(backend, prompt: str, continuation: str,
                       stimulus: Stimulus | None = None) -> float:
    """Summed log-probability (nats) of `continuation` given `prompt`."""
    if not continuation:
        raise ValueError("continuation must be non-empty")
    return _resolve(backend).logprob(prompt, continuation, stimulus)


def score_stimulus(backend, bundle: PromptBundle, stimulus: Stimulus,
                   grid: ThetaGrid | None = None, max_inflight: int | None = None) -> ScoreVector:
    """Score every grid candidate; any failure fails the whole stimulus."""
    backend = _resolve(backend)
    grid = grid if grid is not None else ThetaGrid()
    if max_inflight is None:
        max_inflight = getattr(getattr(backend, "config", None), "max_inflight", 1)
    prompt = assemble_prompt(bundle, stimulus)
    candidates = build_candidates(stimulus, grid)

    def one(i: int) -> float:
        return backend.logprob(prompt, candidates[i].text, stimulus)

    if max_inflight > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=max_inflight) as pool:
            results = list(pool.map(one, range(len(candidates))))
    else:
        results = [one(i) for i in range(len(candidates))]

    for cand, value in zip(candidates, results):
        if not math.isfinite(value):
            raise BackendError(f"{stimulus.id}: non-finite logprob for {cand.text!r}")
        if backend.probabilistic and value > 0:
            raise BackendError(f"{stimulus.id}: positive logprob {value} for {cand.text!r}")
    return ScoreVector(stimulus.id, tuple(c.theta for c in candidates), tuple(results),
                       backend.backend_id, prompt_hash(prompt))
