"""Deterministic mock model server used by all offline tests and runs.

Serves the same wire protocol as the real endpoints. Chat responses are
selected by fixture key: a request matches fixture <key> when the literal
marker "FX:<key>" appears in any text part, or (so fixture corpora can bind
responses to region images without touching prompt text) anywhere in the
decoded bytes of an image part. Unmatched requests fall back to the fixture
named "default" when present. A fixture body of exactly "__ECHO__" answers
with the concatenated text parts of the request.

Embeddings are served by the same hashing embedder the store module uses,
so gateway-backed and local embeddings agree in tests.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..store import hashing_embed

ECHO_DIRECTIVE = "__ECHO__"
DEFAULT_KEY = "default"
MARKER_PREFIX = "FX:"


@dataclass(frozen=True)
class Fixture:
    key: str
    body: str
    logprobs: tuple[dict, ...] | None = None  # wire-shaped token entries


def load_fixtures(directory: Path | str) -> dict[str, Fixture]:
    """Fixtures from a directory: <key>.txt holds the body verbatim;
    <key>.json holds {"body": ..., "logprobs": [...]}."""
    directory = Path(directory)
    fixtures: dict[str, Fixture] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix not in (".txt", ".json") or not path.is_file():
            continue
        key = path.stem
        if key in fixtures:
            raise ValueError(f"duplicate fixture key {key!r} in {directory}")
        if path.suffix == ".txt":
            fixtures[key] = Fixture(key=key, body=path.read_text(encoding="utf-8"))
        else:
            raw = json.loads(path.read_text(encoding="utf-8"))
            logprobs = raw.get("logprobs")
            fixtures[key] = Fixture(
                key=key,
                body=str(raw["body"]),
                logprobs=tuple(logprobs) if logprobs is not None else None,
            )
    return fixtures


def _collect_parts(body: dict) -> tuple[list[str], list[bytes]]:
    texts: list[str] = []
    images: list[bytes] = []
    for message in body.get("messages", []):
        content = message.get("content", [])
        if isinstance(content, str):
            texts.append(content)
            continue
        for part in content:
            if part.get("type") == "text":
                texts.append(str(part.get("text", "")))
            elif part.get("type") == "image_url":
                url = str(part.get("image_url", {}).get("url", ""))
                marker = ";base64,"
                if marker in url:
                    try:
                        images.append(base64.b64decode(url.split(marker, 1)[1]))
                    except Exception:
                        pass
    return texts, images


class MockGateway:
    """Pure request->response logic; wrapped by MockTransport or FastAPI."""

    def __init__(self, fixtures: dict[str, Fixture], dims: int = 256) -> None:
        self.fixtures = dict(fixtures)
        self.dims = dims
        # longest key first so one key being a prefix of another cannot shadow it
        self._match_order = sorted(
            (k for k in self.fixtures if k != DEFAULT_KEY), key=lambda k: (-len(k), k)
        )

    def _select(self, texts: list[str], images: list[bytes]) -> Fixture | None:
        for key in self._match_order:
            marker = MARKER_PREFIX + key
            if any(marker in text for text in texts):
                return self.fixtures[key]
        for key in self._match_order:
            marker = (MARKER_PREFIX + key).encode("utf-8")
            if any(marker in image for image in images):
                return self.fixtures[key]
        return self.fixtures.get(DEFAULT_KEY)

    def handle_chat(self, body: dict) -> tuple[int, dict]:
        texts, images = _collect_parts(body)
        fixture = self._select(texts, images)
        if fixture is None:
            return 404, {"error": {"message": "no fixture matched", "type": "fixture_not_found"}}
        text = "\n".join(texts) if fixture.body == ECHO_DIRECTIVE else fixture.body
        logprobs = None
        if body.get("logprobs") and fixture.logprobs is not None:
            logprobs = {"content": list(fixture.logprobs)}
        return 200, {
            "id": "mock-chat",
            "object": "chat.completion",
            "created": 0,
            "model": body.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": text},
                    "logprobs": logprobs,
                    "finish_reason": "stop",
                }
            ],
        }

    def handle_embed(self, body: dict) -> tuple[int, dict]:
        raw = body.get("input", [])
        texts = [raw] if isinstance(raw, str) else [str(t) for t in raw]
        data = [
            {"object": "embedding", "index": i, "embedding": hashing_embed(t, self.dims)}
            for i, t in enumerate(texts)
        ]
        return 200, {"object": "list", "model": body.get("model", "mock"), "data": data}

    def handle(self, method: str, path: str, body: dict | None) -> tuple[int, dict]:
        if method == "GET" and path == "/health":
            return 200, {"status": "ok"}
        if method == "POST" and path == "/v1/chat/completions":
            return self.handle_chat(body or {})
        if method == "POST" and path == "/v1/embeddings":
            return self.handle_embed(body or {})
        return 404, {"error": {"message": f"no route {method} {path}", "type": "not_found"}}

    def httpx_handler(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content) if request.content else None
        status, payload = self.handle(request.method, request.url.path, body)
        return httpx.Response(status, json=payload)


def create_mock_app(mock: MockGateway) -> FastAPI:
    """FastAPI wrapper over the same handler, for serving on a real port."""
    app = FastAPI(title="docrag mock gateway")

    @app.get("/health")
    def health() -> JSONResponse:
        status, payload = mock.handle("GET", "/health", None)
        return JSONResponse(payload, status_code=status)

    @app.post("/v1/chat/completions")
    async def chat_completions(request: Request) -> JSONResponse:
        body = await request.json()
        status, payload = mock.handle("POST", "/v1/chat/completions", body)
        return JSONResponse(payload, status_code=status)

    @app.post("/v1/embeddings")
    async def embeddings(request: Request) -> JSONResponse:
        body = await request.json()
        status, payload = mock.handle("POST", "/v1/embeddings", body)
        return JSONResponse(payload, status_code=status)

    return app


class MockServer:
    def __init__(self, server, thread: threading.Thread, host: str, port: int) -> None:
        self._server = server
        self._thread = thread
        self.host = host
        self.port = port
        self.base_url = f"http://{host}:{port}"

    def stop(self, timeout: float = 5.0) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=timeout)


def mock_serve(
    fixtures: dict[str, Fixture],
    port: int = 0,
    host: str = "127.0.0.1",
    dims: int = 256,
) -> MockServer:
    """Run the mock gateway on a local port (0 picks a free one) in a
    background thread; returns a handle with .base_url and .stop()."""
    import uvicorn

    app = create_mock_app(MockGateway(fixtures, dims=dims))
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("mock server failed to start within 10s")
        if not thread.is_alive():
            raise RuntimeError("mock server thread exited during startup")
        time.sleep(0.01)
    bound_port = server.servers[0].sockets[0].getsockname()[1]
    return MockServer(server, thread, host, bound_port)
