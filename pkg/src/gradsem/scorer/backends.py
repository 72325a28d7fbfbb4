"""Log-probability scoring backends.

Two kinds are provided. ``mock`` evaluates a Gaussian bump around a target
threshold and needs no network. ``http_completions`` speaks the echo-scoring
protocol of completion-style LM servers: the request carries prompt and
continuation as one string with ``echo=true``, ``max_tokens=0``,
``logprobs=0`` and ``temperature=0``; the response's
``choices[0].logprobs`` must hold parallel ``tokens``, ``token_logprobs``
and ``text_offset`` arrays. Every token whose span reaches past the end of
the prompt counts toward the continuation.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import httpx

from ..church.sexpr import format_number, parse_one
from .prompt import Stimulus, prompt_hash

BACKEND_KINDS = ("http_completions", "mock")


class BackendError(RuntimeError):
    def __init__(self, message: str, attempts: list[dict] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class ProtocolError(BackendError):
    pass


class FixtureMissError(BackendError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_backoff: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("retry.max_attempts must be >= 1")
        if self.base_backoff < 0:
            raise ValueError("retry.base_backoff must be >= 0")


@dataclass(frozen=True)
class MockParams:
    targets: dict[str, float] = field(default_factory=dict, hash=False)
    width: float = 15.0
    noise: float = 0.0
    seed: int = 0
    default_target: float = 50.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("mock width must be positive")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    endpoint: str | None = None
    model_name: str = "mock"
    auth: str | None = None
    max_inflight: int = 1
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    mock_params: MockParams | None = None
    timeout: float = 60.0
    fixture_dir: str | None = None
    offline: bool = False
    run_log: str | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.kind == "http_completions" and not self.endpoint and not self.offline:
            raise ValueError("http_completions backend needs an endpoint (or offline replay)")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BackendConfig":
        data = dict(data)
        if isinstance(data.get("retry"), dict):
            data["retry"] = RetryPolicy(**data["retry"])
        elif isinstance(data.get("retry"), (list, tuple)):
            data["retry"] = RetryPolicy(*data["retry"])
        if isinstance(data.get("mock_params"), dict):
            data["mock_params"] = MockParams(**data["mock_params"])
        return cls(**data)


_SENTENCE_LINE = re.compile(r"^;; Sentence: (.*)$", re.MULTILINE)


def _theta_of(continuation: str) -> float:
    # the threshold is the last numeric literal of the candidate program
    expr = parse_one(continuation)
    numbers: list[float] = []

    def walk(e):
        if isinstance(e, list):
            for x in e:
                walk(x)
        elif type(e) is float:
            numbers.append(e)
    walk(expr)
    if not numbers:
        raise ValueError(f"no threshold literal in {continuation!r}")
    return numbers[-1]


class MockBackend:
    """Deterministic stand-in: ``-(theta - target)**2 / (2 width**2) + noise``.

    The target comes from ``targets[stimulus.id]``, then the stimulus'
    ``mock_target`` metadata, then ``targets[sentence]``, then
    ``default_target``. Noise is uniform in ``[-noise, noise]`` and seeded by
    ``(seed, stimulus id, theta)``.
    """

    probabilistic = False

    def __init__(self, config: BackendConfig):
        self.config = config
        self.params = config.mock_params or MockParams()

    @property
    def backend_id(self) -> str:
        p = self.params
        return f"mock(width={p.width!r},noise={p.noise!r},seed={p.seed})"

    def target_for(self, stimulus: Stimulus | None, sentence: str | None) -> float:
        p = self.params
        if stimulus is not None:
            if stimulus.id in p.targets:
                return float(p.targets[stimulus.id])
            if "mock_target" in stimulus.metadata:
                return float(stimulus.metadata["mock_target"])
            sentence = stimulus.sentence
        if sentence is not None and sentence in p.targets:
            return float(p.targets[sentence])
        return float(p.default_target)

    def noise_for(self, key: str, theta: float) -> float:
        if self.params.noise == 0:
            return 0.0
        digest = hashlib.sha256(f"{self.params.seed}|{key}|{format_number(theta)}".encode()).digest()
        u = int.from_bytes(digest[:8], "big") / 2.0 ** 64
        return self.params.noise * (2.0 * u - 1.0)

    def logprob(self, prompt: str, continuation: str, stimulus: Stimulus | None = None) -> float:
        theta = _theta_of(continuation)
        sentence = None
        if stimulus is None:
            found = _SENTENCE_LINE.findall(prompt)
            sentence = found[-1] if found else None
        target = self.target_for(stimulus, sentence)
        key = stimulus.id if stimulus is not None else (sentence or "")
        d = theta - target
        return -(d * d) / (2.0 * self.params.width ** 2) + self.noise_for(key, theta)


def fixture_key(p_hash: str, continuation: str) -> str:
    return hashlib.sha256(f"{p_hash}\n{continuation}".encode("utf-8")).hexdigest()


class HttpCompletionsBackend:
    """Echo-scoring client with retries, fixture replay and a run log."""

    probabilistic = True

    def __init__(self, config: BackendConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._transport = transport
        self._sleep = sleep
        self._client: httpx.Client | None = None
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return f"http_completions({self.config.model_name})"

    def _fixture_path(self, p_hash: str, continuation: str) -> Path | None:
        if not self.config.fixture_dir:
            return None
        return Path(self.config.fixture_dir) / f"{fixture_key(p_hash, continuation)}.json"

    def _client_for(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(transport=self._transport, timeout=self.config.timeout)
            return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth:
            token = os.environ.get(self.config.auth)
            if not token:
                raise BackendError(f"credential environment variable {self.config.auth} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def request_body(self, prompt: str, continuation: str) -> dict[str, Any]:
        return {
            "model": self.config.model_name,
            "prompt": prompt + continuation,
            "max_tokens": 0,
            "temperature": 0,
            "echo": True,
            "logprobs": 0,
        }

    def logprob(self, prompt: str, continuation: str, stimulus: Stimulus | None = None) -> float:
        p_hash = prompt_hash(prompt)
        path = self._fixture_path(p_hash, continuation)
        if path is not None and path.exists():
            return float(json.loads(path.read_text("utf-8"))["logprob"])
        if self.config.offline:
            raise FixtureMissError(
                f"offline replay: no fixture for prompt {p_hash[:12]} / {continuation!r}")
        payload = self._post(p_hash, continuation, self.request_body(prompt, continuation))
        tokens, logprobs = continuation_tokens(payload, len(prompt))
        total = float(sum(logprobs))
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            record = {
                "prompt_hash": p_hash,
                "continuation": continuation,
                "model": self.config.model_name,
                "tokens": tokens,
                "token_logprobs": logprobs,
                "logprob": total,
            }
            path.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", "utf-8")
        return total

    def _post(self, p_hash: str, continuation: str, body: dict) -> dict:
        retry = self.config.retry
        attempts: list[dict] = []
        encoded = json.dumps(body, sort_keys=True)
        request_hash = hashlib.sha256(encoded.encode("utf-8")).hexdigest()
        headers = self._headers()
        for k in range(retry.max_attempts):
            start = time.monotonic()
            entry: dict[str, Any] = {"attempt": k + 1, "request_hash": request_hash}
            try:
                response = self._client_for().post(self.config.endpoint, content=encoded,
                                                   headers=headers)
            except httpx.TransportError as exc:
                entry.update(error=f"{type(exc).__name__}: {exc}",
                             latency_s=time.monotonic() - start)
                attempts.append(entry)
                self._log(p_hash, continuation, entry, None)
            else:
                entry.update(status=response.status_code, latency_s=time.monotonic() - start)
                attempts.append(entry)
                if response.status_code == 200:
                    try:
                        payload = response.json()
                    except ValueError as exc:
                        raise ProtocolError(f"response is not JSON: {exc}", attempts) from None
                    self._log(p_hash, continuation, entry, payload)
                    return payload
                self._log(p_hash, continuation, entry, response.text[:2000])
                if response.status_code != 429 and response.status_code < 500:
                    raise BackendError(f"backend returned HTTP {response.status_code}", attempts)
            if k + 1 < retry.max_attempts:
                self._sleep(retry.base_backoff * 2 ** k)
        raise BackendError(f"backend failed after {retry.max_attempts} attempt(s)", attempts)

    def _log(self, p_hash: str, continuation: str, entry: dict, response: Any) -> None:
        if not self.config.run_log:
            return
        record = {"prompt_hash": p_hash, "continuation": continuation, **entry,
                  "response": response}
        path = Path(self.config.run_log)
        path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock, path.open("a", encoding="utf-8") as fh:
            fh.write(line)


def continuation_tokens(payload: dict, prompt_length: int) -> tuple[list[str], list[float]]:
    """Tokens (and their logprobs) overlapping the text after `prompt_length`."""
    try:
        lp = payload["choices"][0]["logprobs"]
        tokens, values, offsets = lp["tokens"], lp["token_logprobs"], lp["text_offset"]
    except (KeyError, IndexError, TypeError):
        raise ProtocolError("response lacks choices[0].logprobs tokens/token_logprobs/text_offset")
    if not (len(tokens) == len(values) == len(offsets)):
        raise ProtocolError("logprobs arrays differ in length")
    picked_tokens, picked = [], []
    for tok, value, off in zip(tokens, values, offsets):
        if off + len(tok) > prompt_length:
            if value is None:
                raise ProtocolError(f"missing logprob for continuation token {tok!r}")
            picked_tokens.append(tok)
            picked.append(float(value))
    if not picked:
        raise ProtocolError("response contains no continuation tokens")
    return picked_tokens, picked


def make_backend(config: BackendConfig, **kwargs):
    if config.kind == "mock":
        return MockBackend(config)
    return HttpCompletionsBackend(config, **kwargs)
