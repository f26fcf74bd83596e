"""HTTP sidecar exposing classify / route / stats over a loaded index.

The gate and index are an immutable snapshot per app instance; request
handling never mutates them, so concurrent requests are safe without
locks. ``load_snapshot`` swaps the snapshot atomically for admin-style
reloads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .clients import EmbedderConfig, embed_texts
from .corpus import CorpusIndex
from .distribution import report
from .errors import ClientError, DimensionMismatchError, TemplateError, ZeroVectorError
from .gate import Gate, GateConfig, build_gate
from .router import TemplateSet, default_templates, route

log = logging.getLogger(__name__)


class ClassifyRequest(BaseModel):
    query: str | None = None
    embedding: list[float] | None = None
    threshold: float | None = None  # per-request risk override


class RouteRequest(ClassifyRequest):
    k: int = Field(default=3, ge=1)
    rag_template_id: str | None = None
    direct_template_id: str | None = None


@dataclass
class Snapshot:
    index: CorpusIndex
    gate: Gate
    templates: TemplateSet
    embedder: EmbedderConfig | None = None


def create_app(snapshot: Snapshot | None = None) -> FastAPI:
    app = FastAPI(title="ctxgate")
    app.state.snapshot = snapshot

    def current() -> Snapshot:
        snap = app.state.snapshot
        if snap is None:
            raise HTTPException(status_code=503, detail="index not loaded")
        return snap

    def resolve_embedding(req: ClassifyRequest, snap: Snapshot) -> np.ndarray:
        if (req.query is None) == (req.embedding is None):
            raise HTTPException(
                status_code=400,
                detail="exactly one of 'query' and 'embedding' must be set",
            )
        if req.embedding is not None:
            emb = np.asarray(req.embedding, dtype=np.float64)
            if emb.size != snap.index.dim:
                raise HTTPException(
                    status_code=409,
                    detail=f"embedding dim {emb.size} != index dim {snap.index.dim}",
                )
            return emb
        if snap.embedder is None:
            raise HTTPException(status_code=400, detail="no embedder configured for text queries")
        try:
            return embed_texts(snap.embedder, [req.query])[0]
        except ClientError as e:
            raise HTTPException(status_code=502, detail=f"embedder failure: {e}") from e

    def effective_gate(req: ClassifyRequest, snap: Snapshot) -> Gate:
        if req.threshold is None:
            return snap.gate
        return snap.gate.with_threshold(req.threshold)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "index_loaded": app.state.snapshot is not None}

    @app.post("/v1/classify")
    def classify_endpoint(req: ClassifyRequest):
        snap = current()
        emb = resolve_embedding(req, snap)
        try:
            decision = effective_gate(req, snap).classify(emb)
        except (ZeroVectorError, DimensionMismatchError) as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return decision.as_dict()

    @app.post("/v1/route")
    def route_endpoint(req: RouteRequest):
        snap = current()
        emb = resolve_embedding(req, snap)
        try:
            plan = route(
                effective_gate(req, snap), snap.index,
                query_text=req.query or "(embedding-only query)",
                query_embedding=emb, k=req.k, templates=snap.templates,
                rag_template_id=req.rag_template_id,
                direct_template_id=req.direct_template_id,
            )
        except TemplateError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        except (ZeroVectorError, DimensionMismatchError) as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return plan.as_dict()

    @app.get("/v1/stats")
    def stats_endpoint():
        snap = current()
        if not snap.index.fitted or snap.index.negative_samples is None:
            raise HTTPException(status_code=503, detail="index distributions not fitted")
        analysis = report(snap.index.positive_samples, snap.index.negative_samples)
        body = analysis.as_dict()
        body["gate"] = {
            "policy": str(snap.gate.config.policy),
            "threshold": snap.gate.config.threshold,
            "distribution_source": snap.gate.config.distribution_source,
            "cutoff": snap.gate.cutoff,
        }
        body["index_fingerprint"] = snap.index.embedder_fingerprint
        return body

    return app


def load_snapshot(
    index: CorpusIndex,
    gate_config: GateConfig = GateConfig(),
    templates: TemplateSet | None = None,
    embedder: EmbedderConfig | None = None,
) -> Snapshot:
    return Snapshot(
        index=index,
        gate=build_gate(index, gate_config),
        templates=templates or default_templates(),
        embedder=embedder,
    )
