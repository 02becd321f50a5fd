"""Chat-completions and embeddings wire client.

Speaks POST /v1/chat/completions and POST /v1/embeddings (JSON field names
documented in the README protocol reference). Prompt text is passed through
byte-exact; the client only wraps it in the wire envelope.
"""

from __future__ import annotations

import base64
import logging
import threading
import time
import uuid
from dataclasses import dataclass
from typing import Callable, Union

import httpx

from .config import ConfigError, GatewayConfig, RoleEndpoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    mime: str = "image/png"


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ChatMessage:
    parts: tuple[Part, ...]
    role: str = "user"


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 1.0
    max_tokens: int = 8192
    want_logprobs: bool = False
    top_logprobs: int = 5


@dataclass(frozen=True)
class TokenAlternative:
    token: str
    logprob: float


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float
    top_alternatives: tuple[TokenAlternative, ...] = ()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    token_logprobs: tuple[TokenLogprob, ...] | None = None


class GatewayError(RuntimeError):
    """Base for wire failures; carries the client-side request id."""

    retriable = False

    def __init__(self, message: str, request_id: str = "") -> None:
        super().__init__(f"[{request_id}] {message}" if request_id else message)
        self.request_id = request_id


class GatewayTimeout(GatewayError):
    retriable = True


class BadStatus(GatewayError):
    def __init__(self, status: int, message: str, request_id: str = "") -> None:
        super().__init__(f"status {status}: {message}", request_id)
        self.status = status
        self.retriable = status >= 500


class MalformedResponse(GatewayError):
    pass


class ImageTooLarge(GatewayError):
    pass


def _part_json(part: Part) -> dict:
    if isinstance(part, TextPart):
        return {"type": "text", "text": part.text}
    encoded = base64.b64encode(part.data).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:{part.mime};base64,{encoded}"}}


def _chat_body(request: ChatRequest) -> dict:
    body = {
        "model": request.model,
        "messages": [
            {"role": m.role, "content": [_part_json(p) for p in m.parts]}
            for m in request.messages
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    if request.want_logprobs:
        body["logprobs"] = True
        body["top_logprobs"] = request.top_logprobs
    return body


def _parse_logprobs(raw: object, request_id: str) -> tuple[TokenLogprob, ...] | None:
    if raw is None:
        return None
    try:
        entries = raw["content"]  # type: ignore[index]
        parsed = tuple(
            TokenLogprob(
                token=str(e["token"]),
                logprob=float(e["logprob"]),
                top_alternatives=tuple(
                    TokenAlternative(token=str(a["token"]), logprob=float(a["logprob"]))
                    for a in e.get("top_logprobs", [])
                ),
            )
            for e in entries
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad logprobs payload: {exc}", request_id) from exc
    return parsed


def _post_with_retries(
    client: httpx.Client,
    url: str,
    body: dict,
    headers: dict,
    *,
    retries: int,
    backoff_base: float,
    sleep: Callable[[float], None],
    request_id: str,
) -> dict:
    attempts = retries + 1
    last_error: GatewayError | None = None
    for attempt in range(attempts):
        try:
            response = client.post(url, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            last_error = GatewayTimeout(str(exc), request_id)
        except httpx.HTTPError as exc:
            raise GatewayError(f"transport failure: {exc}", request_id) from exc
        else:
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    raise MalformedResponse(f"response is not JSON: {exc}", request_id) from exc
            last_error = BadStatus(response.status_code, response.text[:200], request_id)
            if not last_error.retriable:
                raise last_error
        if attempt < attempts - 1:
            delay = backoff_base * (2**attempt)
            logger.warning("%s: attempt %d failed (%s); retrying in %.1fs",
                           request_id, attempt + 1, last_error, delay)
            sleep(delay)
    assert last_error is not None
    raise last_error


def chat(
    endpoint: RoleEndpoint,
    request: ChatRequest,
    *,
    client: httpx.Client,
    retries: int = 3,
    backoff_base: float = 1.0,
    max_image_bytes: int = 8 * 1024 * 1024,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    request_id = f"req-{uuid.uuid4().hex[:12]}"
    for message in request.messages:
        for part in message.parts:
            if isinstance(part, ImagePart) and len(part.data) > max_image_bytes:
                raise ImageTooLarge(
                    f"image part of {len(part.data)} bytes exceeds cap {max_image_bytes}",
                    request_id,
                )
    headers = {"Authorization": f"Bearer {endpoint.api_key}"} if endpoint.api_key else {}
    data = _post_with_retries(
        client,
        "/v1/chat/completions",
        _chat_body(request),
        headers,
        retries=retries,
        backoff_base=backoff_base,
        sleep=sleep,
        request_id=request_id,
    )
    try:
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"missing choices/message/content: {exc}", request_id) from exc
    if not isinstance(text, str):
        raise MalformedResponse(f"content is {type(text).__name__}, not str", request_id)
    return ChatResponse(
        text=text,
        token_logprobs=_parse_logprobs(choice.get("logprobs"), request_id),
    )


def embed(
    endpoint: RoleEndpoint,
    texts: list[str],
    *,
    client: httpx.Client,
    max_batch: int = 32,
    retries: int = 3,
    backoff_base: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> list[list[float]]:
    """Embeddings for texts, order preserved; batching is internal."""
    if not texts:
        return []
    headers = {"Authorization": f"Bearer {endpoint.api_key}"} if endpoint.api_key else {}
    vectors: list[list[float]] = []
    for start in range(0, len(texts), max_batch):
        batch = texts[start : start + max_batch]
        request_id = f"req-{uuid.uuid4().hex[:12]}"
        data = _post_with_retries(
            client,
            "/v1/embeddings",
            {"model": endpoint.model, "input": batch},
            headers,
            retries=retries,
            backoff_base=backoff_base,
            sleep=sleep,
            request_id=request_id,
        )
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            batch_vectors = [[float(v) for v in row["embedding"]] for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad embeddings payload: {exc}", request_id) from exc
        if len(batch_vectors) != len(batch):
            raise MalformedResponse(
                f"got {len(batch_vectors)} vectors for {len(batch)} inputs", request_id
            )
        vectors.extend(batch_vectors)
    dims = {len(v) for v in vectors}
    if len(dims) != 1 or 0 in dims:
        raise MalformedResponse(f"inconsistent embedding dimensions {sorted(dims)}")
    return vectors


class Gateway:
    """Shared, thread-safe access to the configured model roles.

    An endpoint whose base_url is "mock://<fixtures-dir>" is served by the
    in-process deterministic mock instead of the network; everything above
    the transport behaves identically.
    """

    def __init__(
        self,
        config: GatewayConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self._transport = transport
        self._sleep = sleep
        self._clients: dict[tuple[str, int | None], httpx.Client] = {}
        self._lock = threading.Lock()
        self._limiters: dict[str, threading.Semaphore] = {}

    def _client_for(self, endpoint: RoleEndpoint) -> httpx.Client:
        key = (endpoint.base_url, endpoint.dims)
        with self._lock:
            cached = self._clients.get(key)
            if cached is not None:
                return cached
            if endpoint.base_url.startswith("mock://"):
                from .mock import MockGateway, load_fixtures

                fixtures_dir = endpoint.base_url[len("mock://") :]
                mock = MockGateway(load_fixtures(fixtures_dir), dims=endpoint.dims or 256)
                client = httpx.Client(
                    transport=httpx.MockTransport(mock.httpx_handler),
                    base_url="http://mock.invalid",
                )
            else:
                client = httpx.Client(
                    base_url=endpoint.base_url,
                    timeout=endpoint.timeout,
                    transport=self._transport,
                )
            self._clients[key] = client
            return client

    def _limiter_for(self, endpoint: RoleEndpoint) -> threading.Semaphore:
        # in-flight requests are bounded per endpoint
        with self._lock:
            limiter = self._limiters.get(endpoint.base_url)
            if limiter is None:
                limiter = threading.Semaphore(self.config.concurrency)
                self._limiters[endpoint.base_url] = limiter
            return limiter

    def endpoint(self, role: str) -> RoleEndpoint:
        return self.config.role(role)

    def chat(self, role: str, request: ChatRequest) -> ChatResponse:
        endpoint = self.config.role(role)
        with self._limiter_for(endpoint):
            return chat(
                endpoint,
                request,
                client=self._client_for(endpoint),
                retries=self.config.retries,
                backoff_base=self.config.backoff_base,
                max_image_bytes=self.config.max_image_bytes,
                sleep=self._sleep,
            )

    def chat_parts(
        self,
        role: str,
        parts: list[Part],
        *,
        want_logprobs: bool = False,
        top_logprobs: int = 5,
    ) -> ChatResponse:
        """Single-user-message chat using the role's configured defaults."""
        endpoint = self.config.role(role)
        request = ChatRequest(
            model=endpoint.model,
            messages=(ChatMessage(parts=tuple(parts)),),
            temperature=endpoint.temperature,
            max_tokens=endpoint.max_tokens,
            want_logprobs=want_logprobs,
            top_logprobs=top_logprobs,
        )
        return self.chat(role, request)

    def embed(self, texts: list[str], role: str = "embedder") -> list[list[float]]:
        endpoint = self.config.role(role)
        with self._limiter_for(endpoint):
            return embed(
                endpoint,
                texts,
                client=self._client_for(endpoint),
                max_batch=self.config.max_batch,
                retries=self.config.retries,
                backoff_base=self.config.backoff_base,
                sleep=self._sleep,
            )

    def has_role(self, role: str) -> bool:
        try:
            self.config.role(role)
            return True
        except ConfigError:
            return False

    def close(self) -> None:
        with self._lock:
            for client in self._clients.values():
                client.close()
            self._clients.clear()

    def __enter__(self) -> "Gateway":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
