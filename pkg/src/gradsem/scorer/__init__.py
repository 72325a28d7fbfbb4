"""Prompt assembly and log-probability scoring of candidate parses."""

from .backends import (
    BackendConfig,
    BackendError,
    FixtureMissError,
    HttpCompletionsBackend,
    MockBackend,
    MockParams,
    ProtocolError,
    RetryPolicy,
    make_backend,
)
from .prompt import (
    CandidateProgram,
    PromptBundle,
    Stimulus,
    ThetaGrid,
    assemble_prompt,
    build_candidates,
    prompt_hash,
)
from .scoring import ScoreVector, score_continuation, score_stimulus

__all__ = [
    "BackendConfig", "BackendError", "CandidateProgram", "FixtureMissError",
    "HttpCompletionsBackend", "MockBackend", "MockParams", "PromptBundle", "ProtocolError",
    "RetryPolicy", "ScoreVector", "Stimulus", "ThetaGrid", "assemble_prompt",
    "build_candidates", "make_backend", "prompt_hash", "score_continuation", "score_stimulus",
]
