"""End-to-end orchestration: ingest a page corpus into a ragstore, and
answer questions over it with retrieved evidence.

Page failures during ingest are isolated and reported; one bad page never
aborts the corpus.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .extraction import FallbackPolicy, extract_page
from .gateway.client import Gateway, TextPart
from .gateway.config import ConfigError
from .layout import LayoutProvider, LayoutUnavailable, detect_layout, group_components
from .rationale import rationalize
from .store import Embedder, RagStore, RetrievalHit, build_store, retrieve_top_k
from .types import PageRef, Rationale, RationaleMode, RegionOrigin

logger = logging.getLogger(__name__)

GENERATION_PROMPT = (
    "Use the information from the following documents to answer the question."
    " Documents:\n{documents}\nQuestion: {question}\nAnswer:"
)

DEFAULT_PARTITION_SIZE = 25


@dataclass(frozen=True)
class ManifestPage:
    page: PageRef
    image: Path


def load_manifest(path: Path | str) -> list[ManifestPage]:
    """Corpus manifest: {"pages": [{"doc_id", "page_index", "image"}, ...]}.
    Relative image paths resolve against the manifest's directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    entries = raw.get("pages")
    if not isinstance(entries, list):
        raise ConfigError(f"manifest {path} has no 'pages' list")
    pages: list[ManifestPage] = []
    for index, entry in enumerate(entries):
        try:
            page = PageRef(doc_id=str(entry["doc_id"]), page_index=int(entry["page_index"]))
            image = Path(entry["image"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"manifest {path} entry {index} invalid: {exc}") from exc
        if not image.is_absolute():
            image = path.parent / image
        pages.append(ManifestPage(page=page, image=image))
    return pages


def partition_pages(
    pages: list[ManifestPage], size: int = DEFAULT_PARTITION_SIZE
) -> list[list[ManifestPage]]:
    """Sort pages and split into retrieval groups of the given size."""
    if size < 1:
        raise ValueError(f"partition size must be >= 1, got {size}")
    ordered = sorted(pages, key=lambda p: (p.page.doc_id, p.page.page_index))
    return [ordered[i : i + size] for i in range(0, len(ordered), size)]


@dataclass
class PageOutcome:
    page: PageRef
    ok: bool
    error: str | None = None
    rationales: list[Rationale] = field(default_factory=list)
    regions_extracted: int = 0
    fallback_used: bool = False
    regions_failed: int = 0


@dataclass
class IngestReport:
    pages_ok: int = 0
    pages_failed: int = 0
    regions_extracted: int = 0
    regions_failed: int = 0
    fallbacks_used: int = 0
    records: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "pages_ok": self.pages_ok,
            "pages_failed": self.pages_failed,
            "regions_extracted": self.regions_extracted,
            "regions_failed": self.regions_failed,
            "fallbacks_used": self.fallbacks_used,
            "records": self.records,
            "failures": self.failures,
        }


def _process_page(
    entry: ManifestPage,
    provider: LayoutProvider,
    gateway: Gateway,
    policy: FallbackPolicy,
    rationale_mode: RationaleMode,
    vlm_role: str,
    llm_role: str,
) -> PageOutcome:
    outcome = PageOutcome(page=entry.page, ok=False)
    try:
        image = entry.image.read_bytes()
    except OSError as exc:
        outcome.error = f"unreadable image: {exc}"
        return outcome
    try:
        try:
            components = detect_layout(entry.page, image, provider)
        except LayoutUnavailable as exc:
            logger.info("%s: layout unavailable (%s); page fallback only", entry.page.page_name, exc)
            components = []
        components = group_components(components)
        regions = extract_page(entry.page, image, components, gateway, policy, vlm_role)
    except Exception as exc:
        outcome.error = str(exc)
        return outcome
    outcome.regions_extracted = len(regions)
    outcome.fallback_used = any(r.origin is RegionOrigin.PAGE_FALLBACK for r in regions)
    for region in regions:
        try:
            outcome.rationales.append(
                rationalize(region, entry.page, gateway, llm_role, rationale_mode)
            )
        except Exception as exc:
            logger.warning("%s: rationale failed: %s", region.component_id, exc)
            outcome.regions_failed += 1
    outcome.ok = True
    return outcome


def ingest(
    pages: list[ManifestPage],
    provider: LayoutProvider,
    gateway: Gateway,
    embedder: Embedder,
    *,
    policy: FallbackPolicy = FallbackPolicy.ALWAYS,
    rationale_mode: RationaleMode = RationaleMode.TEMPLATE,
    workers: int = 4,
    vlm_role: str = "vlm",
    llm_role: str = "llm",
) -> tuple[RagStore, IngestReport]:
    """Run layout -> extraction -> rationales over every page, then build
    one store over all rationales. Deterministic given the mock gateway and
    hashing embedder."""
    if not gateway.has_role(vlm_role):
        raise ConfigError(
            f"ingest requires a configured {vlm_role!r} endpoint"
            " (offline runs point it at the mock gateway)"
        )
    if rationale_mode is RationaleMode.MODEL and not gateway.has_role(llm_role):
        raise ConfigError(f"rationale mode 'model' requires a configured {llm_role!r} endpoint")

    report = IngestReport()
    outcomes: list[PageOutcome]
    if workers <= 1 or len(pages) <= 1:
        outcomes = [
            _process_page(p, provider, gateway, policy, rationale_mode, vlm_role, llm_role)
            for p in pages
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                pool.map(
                    lambda p: _process_page(
                        p, provider, gateway, policy, rationale_mode, vlm_role, llm_role
                    ),
                    pages,
                )
            )

    rationales: list[Rationale] = []
    for outcome in outcomes:
        if not outcome.ok:
            report.pages_failed += 1
            report.failures.append({"page": outcome.page.page_name, "error": outcome.error})
            continue
        report.pages_ok += 1
        report.regions_extracted += outcome.regions_extracted
        report.regions_failed += outcome.regions_failed
        if outcome.fallback_used:
            report.fallbacks_used += 1
        rationales.extend(outcome.rationales)

    store = build_store(rationales, embedder)
    report.records = len(store)
    return store, report


@dataclass(frozen=True)
class GroundedAnswer:
    text: str
    hits: list[RetrievalHit]


class AnswerUnavailable(RuntimeError):
    """Generation failed; the retrieval result is still attached."""

    def __init__(self, message: str, hits: list[RetrievalHit]) -> None:
        super().__init__(message)
        self.hits = hits


def build_generation_prompt(rationale_texts: list[str], question: str) -> str:
    documents = "\n\n".join(f"[{rank}] {text}" for rank, text in enumerate(rationale_texts, start=1))
    return GENERATION_PROMPT.format(documents=documents, question=question)


def answer(
    query: str,
    store: RagStore,
    gateway: Gateway,
    embedder: Embedder,
    k: int = 10,
    llm_role: str = "llm",
) -> GroundedAnswer:
    """Retrieve top-k rationales, then generate a grounded answer. The hit
    list is exactly the retrieval result; generation never re-ranks."""
    if not store.records:
        raise ValueError("cannot answer over an empty store")
    hits = retrieve_top_k(query, store, k, embedder)
    texts = [store.get(h.record_id).rationale.text for h in hits]
    prompt = build_generation_prompt(texts, query)
    try:
        response = gateway.chat_parts(llm_role, [TextPart(prompt)])
    except Exception as exc:
        raise AnswerUnavailable(f"generation failed: {exc}", hits) from exc
    return GroundedAnswer(text=response.text, hits=hits)
