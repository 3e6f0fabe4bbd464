"""Request/response models for the backend wire protocol."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SummarizeRequest(BaseModel):
    template_id: str
    documents: list[str]


class SummarizeResponse(BaseModel):
    summary: Optional[str] = None
    refusal: Optional[str] = None


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedResponse(BaseModel):
    vectors: list[list[float]]


class SelectRequest(BaseModel):
    query: str
    candidates: list[str] = Field(min_length=1)


class SelectResponse(BaseModel):
    choice: Optional[int] = None  # 1-based; null means abstain
    confidence: float = Field(ge=0.0, le=1.0)


class VerifyRequest(BaseModel):
    query: str
    candidate: str


class VerifyResponse(BaseModel):
    match: bool
    confidence: float = Field(ge=0.0, le=1.0)


class PairText(BaseModel):
    query: str
    candidate: str


class CompareRequest(BaseModel):
    a: PairText
    b: PairText


class CompareResponse(BaseModel):
    winner: Literal["A", "B"]
