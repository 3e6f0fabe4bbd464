"""Reference backend service speaking the extractor/embedder/judge wire protocol.

Serves the deterministic offline backends so remote clients can be exercised
end to end without a model provider::

    uvicorn linkrisk.service:app --port 8000
"""
from __future__ import annotations

from fastapi import FastAPI

from .datagen import default_lexicon
from .extract import FeatureSummary, OfflineExtractor, Refusal, parse_trait_list
from .reason import LexicalJudge
from .schemas import (
    CompareRequest,
    CompareResponse,
    EmbedRequest,
    EmbedResponse,
    SelectRequest,
    SelectResponse,
    SummarizeRequest,
    SummarizeResponse,
    VerifyRequest,
    VerifyResponse,
)
from .search import HashEmbedder


def _summary(text: str, pid: str) -> FeatureSummary:
    return FeatureSummary(pid, "traits", traits=tuple(parse_trait_list(text)))


def create_app(extractor=None, embedder=None, judge=None) -> FastAPI:
    extractor = extractor or OfflineExtractor(default_lexicon())
    embedder = embedder or HashEmbedder()
    judge = judge or LexicalJudge()
    app = FastAPI(title="linkrisk reference backends")

    @app.get("/health")
    def health():
        return {"status": "ok", "dim": embedder.dim}

    @app.post("/summarize", response_model=SummarizeResponse)
    def summarize(req: SummarizeRequest):
        out = extractor.summarize(req.template_id, req.documents)
        if isinstance(out, Refusal):
            return SummarizeResponse(refusal=out.reason)
        return SummarizeResponse(summary=out)

    @app.post("/embed", response_model=EmbedResponse)
    def embed(req: EmbedRequest):
        return EmbedResponse(vectors=embedder.embed(req.texts).tolist())

    @app.post("/select", response_model=SelectResponse)
    def select(req: SelectRequest):
        shortlist = [_summary(t, f"c{i}") for i, t in enumerate(req.candidates, 1)]
        choice, confidence = judge.select(_summary(req.query, "q"), shortlist)
        return SelectResponse(choice=choice, confidence=confidence)

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest):
        match, confidence = judge.verify(_summary(req.query, "q"), _summary(req.candidate, "c"))
        return VerifyResponse(match=match, confidence=confidence)

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest):
        a = (_summary(req.a.query, "qa"), _summary(req.a.candidate, "ca"))
        b = (_summary(req.b.query, "qb"), _summary(req.b.candidate, "cb"))
        return CompareResponse(winner=judge.compare(a, b))

    return app


app = create_app()
