"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class IngestRequest(BaseModel):
    manifest: str
    out_store: str
    config: str | None = None
    policy: str | None = None
    embedder: str | None = None
    rationale_mode: str | None = None
    workers: int | None = None
    dry_run: bool = False


class IngestReportModel(BaseModel):
    pages_ok: int
    pages_failed: int
    regions_extracted: int
    regions_failed: int
    fallbacks_used: int
    records: int
    failures: list[dict] = Field(default_factory=list)


class IngestResponse(BaseModel):
    stores: list[str]
    report: IngestReportModel


class IngestPlanResponse(BaseModel):
    dry_run: bool = True
    pages: int
    stores: list[str]
    policy: str
    embedder: str
    rationale_mode: str
    workers: int


class HitModel(BaseModel):
    record_id: str
    score: float
    rank: int
    doc_id: str
    page_index: int
    text: str


class QueryRequest(BaseModel):
    store: str
    question: str
    k: int = 10
    retrieve_only: bool = False
    config: str | None = None
    embedder: str | None = None


class QueryResponse(BaseModel):
    answer: str | None
    degraded: bool = False
    hits: list[HitModel]


class EvalRequest(BaseModel):
    mode: str  # "generation" | "retrieval"
    store: str
    qa: str
    config: str | None = None
    k: int | None = None
    metric: str | None = None  # generation only: "accuracy" | "l3score"
    context: str | None = None  # generation only: "gold_page" | "retrieval"
    embedder: str | None = None


class PerItemModel(BaseModel):
    index: int
    value: float
    rank: int | None = None
    matched: bool | None = None


class EvalResponse(BaseModel):
    metric: str
    value: float
    stderr: float
    count: int
    skipped: list[dict] = Field(default_factory=list)
    per_item: list[PerItemModel]
