"""HTTP service wrapping the pipeline: ingest, query, and evaluation.

The CLI talks to this app (in-process by default, over the network with
--server); the endpoints operate on paths visible to the service process.
"""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__, evaluation, pipeline, store as storemod
from ..gateway.config import ConfigError
from ..settings import RunSettings, load_settings, make_embedder, make_gateway
from .schemas import (
    EvalRequest,
    EvalResponse,
    HealthResponse,
    HitModel,
    IngestPlanResponse,
    IngestReportModel,
    IngestRequest,
    IngestResponse,
    QueryRequest,
    QueryResponse,
)

logger = logging.getLogger(__name__)


def _settings_for(config_path: str | None, **overrides) -> RunSettings:
    try:
        settings = load_settings(config_path)
        return settings.with_overrides(**overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _load_store(path: str) -> storemod.RagStore:
    try:
        return storemod.load(path)
    except (OSError, storemod.LoadError) as exc:
        raise HTTPException(status_code=400, detail=f"cannot load store {path}: {exc}") from exc


def _group_store_paths(out_store: str, groups: int) -> list[str]:
    if groups == 1:
        return [out_store]
    base = Path(out_store)
    return [str(base.with_name(f"{base.stem}_g{i:02d}{base.suffix}")) for i in range(groups)]


def create_app() -> FastAPI:
    app = FastAPI(title="docrag", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/ingest", response_model=None)
    def ingest(request: IngestRequest) -> IngestResponse | IngestPlanResponse:
        settings = _settings_for(
            request.config,
            policy=request.policy,
            embedder=request.embedder,
            rationale_mode=request.rationale_mode,
            workers=request.workers,
        )
        try:
            pages = pipeline.load_manifest(request.manifest)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        groups = (
            pipeline.partition_pages(pages, settings.partition)
            if settings.partition is not None
            else [pages]
        )
        store_paths = _group_store_paths(request.out_store, len(groups))

        if request.dry_run:
            return IngestPlanResponse(
                pages=len(pages),
                stores=store_paths,
                policy=settings.policy.value,
                embedder=settings.embedder_kind,
                rationale_mode=settings.rationale_mode.value,
                workers=settings.workers,
            )

        gateway = make_gateway(settings)
        embedder = make_embedder(settings, gateway)
        total = pipeline.IngestReport()
        try:
            with gateway:
                for group, path in zip(groups, store_paths):
                    built, report = pipeline.ingest(
                        group,
                        settings.layout,
                        gateway,
                        embedder,
                        policy=settings.policy,
                        rationale_mode=settings.rationale_mode,
                        workers=settings.workers,
                    )
                    storemod.persist(built, path)
                    total.pages_ok += report.pages_ok
                    total.pages_failed += report.pages_failed
                    total.regions_extracted += report.regions_extracted
                    total.regions_failed += report.regions_failed
                    total.fallbacks_used += report.fallbacks_used
                    total.records += report.records
                    total.failures.extend(report.failures)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return IngestResponse(
            stores=store_paths, report=IngestReportModel(**total.to_json_obj())
        )

    @app.post("/query", response_model=QueryResponse)
    def query(request: QueryRequest) -> QueryResponse:
        settings = _settings_for(request.config, embedder=request.embedder, k=request.k)
        loaded = _load_store(request.store)
        if not loaded.records:
            raise HTTPException(status_code=400, detail="store is empty")
        gateway = make_gateway(settings)
        embedder = make_embedder(settings, gateway)

        def hit_models(hits) -> list[HitModel]:
            out = []
            for hit in hits:
                rationale = loaded.get(hit.record_id).rationale
                out.append(
                    HitModel(
                        record_id=hit.record_id,
                        score=hit.score,
                        rank=hit.rank,
                        doc_id=rationale.page.doc_id,
                        page_index=rationale.page.page_index,
                        text=rationale.text,
                    )
                )
            return out

        with gateway:
            try:
                if request.retrieve_only:
                    hits = storemod.retrieve_top_k(request.question, loaded, settings.k, embedder)
                    return QueryResponse(answer=None, hits=hit_models(hits))
                grounded = pipeline.answer(
                    request.question, loaded, gateway, embedder, k=settings.k
                )
                return QueryResponse(answer=grounded.text, hits=hit_models(grounded.hits))
            except pipeline.AnswerUnavailable as exc:
                logger.warning("generation failed, returning hits only: %s", exc)
                return QueryResponse(answer=None, degraded=True, hits=hit_models(exc.hits))
            except (ConfigError, storemod.StoreMismatch, ValueError) as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/eval", response_model=EvalResponse)
    def run_eval(request: EvalRequest) -> EvalResponse:
        if request.mode not in ("generation", "retrieval"):
            raise HTTPException(status_code=400, detail=f"unknown eval mode {request.mode!r}")
        settings = _settings_for(request.config, embedder=request.embedder, k=request.k)
        loaded = _load_store(request.store)
        try:
            qa_items = evaluation.load_qa(request.qa)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        gateway = make_gateway(settings)
        embedder = make_embedder(settings, gateway)
        try:
            with gateway:
                if request.mode == "retrieval":
                    report = evaluation.run_retrieval_eval(
                        loaded, qa_items, embedder, k=settings.k
                    )
                else:
                    report = evaluation.run_generation_eval(
                        loaded,
                        qa_items,
                        gateway,
                        embedder,
                        metric=request.metric or "accuracy",
                        context=request.context or "gold_page",
                        k=settings.k,
                        workers=settings.workers,
                    )
        except (ConfigError, ValueError, storemod.StoreMismatch) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return EvalResponse(**report.to_json_obj())

    return app


app = create_app()
