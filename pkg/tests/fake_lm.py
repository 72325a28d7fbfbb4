"""A tiny deterministic completions server speaking the echo/logprobs protocol."""

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx

_TOKEN = re.compile(r"\s+|[()']|[^\s()']+")


def token_logprob(tok: str) -> float:
    try:
        x = float(tok)
    except ValueError:
        return -(0.05 + 0.01 * len(tok))
    return -((x - 60.0) ** 2) / (2 * 20.0 ** 2) - 0.5


def completion(body: dict) -> dict:
    text = body["prompt"]
    tokens, offsets, values = [], [], []
    for m in _TOKEN.finditer(text):
        tokens.append(m.group())
        offsets.append(m.start())
        values.append(token_logprob(m.group()))
    values[0] = None  # first token has no conditional logprob, as real APIs report
    return {"choices": [{"text": text, "logprobs": {
        "tokens": tokens, "token_logprobs": values, "text_offset": offsets}}]}


def expected_logprob(continuation: str) -> float:
    return sum(token_logprob(m.group()) for m in _TOKEN.finditer(continuation))


def mock_transport(fail_first: int = 0, status: int = 500, seen: list | None = None):
    state = {"calls": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        state["calls"] += 1
        if seen is not None:
            seen.append(request)
        if state["calls"] <= fail_first:
            return httpx.Response(status, text="unavailable")
        return httpx.Response(200, json=completion(json.loads(request.content)))
    return httpx.MockTransport(handler), state


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests += 1
        data = json.dumps(completion(body)).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class FakeServer:
    def __enter__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.requests = 0
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        return self

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/v1/completions"

    @property
    def requests(self) -> int:
        return self.httpd.requests

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
