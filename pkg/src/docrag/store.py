"""Embedding store: deterministic hashing embedder, cosine top-k retrieval,
and the JSONL ragstore format.

Retrieval is an exact brute-force scan; corpora here are 10^2..10^4 records
and exactness keeps ranking metrics deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .types import PageRef, Rationale, RationaleMode, RegionOrigin

FNV_OFFSET_BASIS = 14695981039346656037
FNV_PRIME = 1099511628211
DEFAULT_DIMS = 256

STORE_SCHEMA = 1


class StoreMismatch(RuntimeError):
    """Query embedder does not match the embedder the store was built with."""


class LoadError(RuntimeError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _tokens(text: str) -> Iterable[str]:
    """Maximal alphanumeric runs of the lowercased text."""
    run: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            run.append(ch)
        elif run:
            yield "".join(run)
            run.clear()
    if run:
        yield "".join(run)


def _normalized(vector: list[float]) -> list[float]:
    norm = math.sqrt(sum(v * v for v in vector))
    if norm == 0.0:
        return vector
    return [v / norm for v in vector]


def hashing_embed(text: str, dims: int = DEFAULT_DIMS) -> list[float]:
    """Signed feature-hashing bag of tokens, L2-normalized (zero vector for
    token-free text). FNV-1a 64 decides both bucket and sign."""
    if dims < 1:
        raise ValueError(f"dims must be >= 1, got {dims}")
    vector = [0.0] * dims
    for token in _tokens(text):
        h = _fnv1a64(token.encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        vector[h % dims] += sign
    return _normalized(vector)


class Embedder(Protocol):
    @property
    def fingerprint(self) -> str: ...

    @property
    def dims(self) -> int | None: ...

    def embed_batch(self, texts: list[str]) -> list[list[float]]: ...


class HashingEmbedder:
    """Offline deterministic embedder; the mock gateway serves the same vectors."""

    def __init__(self, dims: int = DEFAULT_DIMS) -> None:
        self._dims = dims

    @property
    def dims(self) -> int:
        return self._dims

    @property
    def fingerprint(self) -> str:
        return f"hashing:{self._dims}:fnv1a64:{FNV_OFFSET_BASIS}:{FNV_PRIME}"

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        return [hashing_embed(t, self._dims) for t in texts]


class GatewayEmbedder:
    """Embeds through the configured embedder role of a Gateway."""

    def __init__(self, gateway, role: str = "embedder") -> None:
        self._gateway = gateway
        self._role = role
        endpoint = gateway.endpoint(role)
        self._model = endpoint.model
        self._dims: int | None = endpoint.dims

    @property
    def dims(self) -> int | None:
        return self._dims

    @property
    def fingerprint(self) -> str:
        if self._dims is None:
            raise RuntimeError("embedding dimension unknown before the first embed call")
        return f"gateway:{self._model}:{self._dims}"

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        vectors = self._gateway.embed(texts, role=self._role)
        if vectors and self._dims is None:
            self._dims = len(vectors[0])
        return vectors


@dataclass(frozen=True)
class StoreRecord:
    record_id: str
    rationale: Rationale
    vector: tuple[float, ...]


@dataclass(frozen=True)
class RetrievalHit:
    record_id: str
    score: float
    rank: int


@dataclass(eq=True)
class RagStore:
    """Immutable after build; records are kept sorted by record_id."""

    records: tuple[StoreRecord, ...]
    dims: int
    embedder_fingerprint: str

    @cached_property
    def _matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.dims))
        return np.array([r.vector for r in self.records], dtype=np.float64)

    @cached_property
    def _by_id(self) -> dict[str, StoreRecord]:
        return {r.record_id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def get(self, record_id: str) -> StoreRecord:
        return self._by_id[record_id]

    def records_for_page(self, page: PageRef) -> list[StoreRecord]:
        return [r for r in self.records if r.rationale.page == page]

    def pages(self) -> set[PageRef]:
        return {r.rationale.page for r in self.records}


def _find_failing_rationale(ordered: list[Rationale], embedder: Embedder) -> str:
    """Re-embed one by one to name the culprit after a batch failure."""
    for rationale in ordered:
        try:
            embedder.embed_batch([rationale.text])
        except Exception:
            return rationale.rationale_id
    return ordered[0].rationale_id


def build_store(rationales: list[Rationale], embedder: Embedder) -> RagStore:
    """One record per rationale, keyed and ordered by rationale_id."""
    seen: set[str] = set()
    for rationale in rationales:
        if rationale.rationale_id in seen:
            raise ValueError(f"duplicate rationale_id {rationale.rationale_id!r}")
        seen.add(rationale.rationale_id)

    ordered = sorted(rationales, key=lambda r: r.rationale_id)
    if not ordered:
        if embedder.dims is None:
            raise ValueError("cannot build an empty store without a known dimension")
        return RagStore(records=(), dims=embedder.dims, embedder_fingerprint=embedder.fingerprint)

    try:
        vectors = embedder.embed_batch([r.text for r in ordered])
    except Exception as exc:
        failing = _find_failing_rationale(ordered, embedder)
        raise RuntimeError(f"embedding failed at build (rationale {failing!r}): {exc}") from exc
    if len(vectors) != len(ordered):
        raise RuntimeError(f"embedder returned {len(vectors)} vectors for {len(ordered)} texts")
    dims = len(vectors[0])
    records = tuple(
        StoreRecord(
            record_id=rationale.rationale_id,
            rationale=rationale,
            vector=tuple(_normalized(vector)),
        )
        for rationale, vector in zip(ordered, vectors)
    )
    for record in records:
        if len(record.vector) != dims:
            raise RuntimeError(f"inconsistent vector dimension for {record.record_id!r}")
    return RagStore(records=records, dims=dims, embedder_fingerprint=embedder.fingerprint)


def retrieve_top_k(query: str, store: RagStore, k: int, embedder: Embedder) -> list[RetrievalHit]:
    """Top min(k, |store|) records by cosine similarity; ties break on
    ascending record_id. Pure in (query, store, k) for a fixed embedder."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not store.records:
        raise ValueError("cannot retrieve from an empty store")
    query_vector = np.array(_normalized(embedder.embed_batch([query])[0]), dtype=np.float64)
    if embedder.fingerprint != store.embedder_fingerprint:
        raise StoreMismatch(
            f"store built with {store.embedder_fingerprint!r}, queried with {embedder.fingerprint!r}"
        )
    if query_vector.shape[0] != store.dims:
        raise StoreMismatch(f"query dimension {query_vector.shape[0]} != store {store.dims}")
    scores = store._matrix @ query_vector
    order = sorted(range(len(store.records)), key=lambda i: (-scores[i], store.records[i].record_id))
    hits = []
    for rank, index in enumerate(order[: min(k, len(order))], start=1):
        score = min(1.0, max(-1.0, float(scores[index])))
        hits.append(RetrievalHit(record_id=store.records[index].record_id, score=score, rank=rank))
    return hits


def persist(store: RagStore, path: Path | str) -> None:
    """JSONL: a header line, then one record per line in record_id order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {"schema": STORE_SCHEMA, "dims": store.dims, "embedder": store.embedder_fingerprint}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for record in store.records:
            rationale = record.rationale
            row = {
                "record_id": record.record_id,
                "doc_id": rationale.page.doc_id,
                "page_index": rationale.page.page_index,
                "component_id": rationale.component_id,
                "origin": rationale.origin.value,
                "mode": rationale.mode.value,
                "text": rationale.text,
                "vector": list(record.vector),
            }
            fh.write(json.dumps(row, separators=(",", ":"), ensure_ascii=False) + "\n")


def load(path: Path | str) -> RagStore:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise LoadError(1, "empty ragstore file")

    def parse_line(number: int, text: str) -> dict:
        try:
            value = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LoadError(number, f"invalid JSON: {exc}") from exc
        if not isinstance(value, dict):
            raise LoadError(number, "expected a JSON object")
        return value

    header = parse_line(1, lines[0])
    if header.get("schema") != STORE_SCHEMA:
        raise LoadError(1, f"unsupported schema {header.get('schema')!r}")
    try:
        dims = int(header["dims"])
        fingerprint = str(header["embedder"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(1, f"bad header: {exc}") from exc

    records: list[StoreRecord] = []
    for number, text in enumerate(lines[1:], start=2):
        row = parse_line(number, text)
        try:
            vector = tuple(float(v) for v in row["vector"])
            rationale = Rationale(
                rationale_id=str(row["record_id"]),
                page=PageRef(doc_id=str(row["doc_id"]), page_index=int(row["page_index"])),
                component_id=str(row["component_id"]),
                origin=RegionOrigin(row["origin"]),
                text=str(row["text"]),
                mode=RationaleMode(row["mode"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(number, f"bad record: {exc}") from exc
        if len(vector) != dims:
            raise LoadError(number, f"vector length {len(vector)} != header dims {dims}")
        records.append(StoreRecord(record_id=rationale.rationale_id, rationale=rationale, vector=vector))

    ids = [r.record_id for r in records]
    if len(set(ids)) != len(ids):
        raise LoadError(len(lines), "duplicate record_id in store")
    records.sort(key=lambda r: r.record_id)
    return RagStore(records=tuple(records), dims=dims, embedder_fingerprint=fingerprint)
