"""HTTP clients for remote extractor, embedder and judge services."""
from __future__ import annotations

import os
import threading
import time
from typing import Sequence

import httpx
import numpy as np

from .errors import ProtocolError, TransportError
from .extract import FeatureSummary, Refusal

TOKEN_ENV = "LINKRISK_TOKEN"


class HttpBackend:
    """JSON-over-POST client with bounded in-flight requests and exponential backoff."""

    def __init__(
        self,
        base_url: str,
        client: httpx.Client | None = None,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        max_in_flight: int = 8,
    ):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    def _headers(self) -> dict:
        token = os.environ.get(TOKEN_ENV)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self.client.post(url, json=payload, headers=self._headers())
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise ProtocolError(f"POST {path} -> HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError:
                raise ProtocolError(f"POST {path} returned non-JSON body") from None
        raise TransportError(f"POST {url} failed after {self.retries + 1} attempts ({last})")


class HttpExtractor(HttpBackend):
    def summarize(self, template_id: str, documents: list[str]) -> str | Refusal:
        body = self.post("/summarize", {"template_id": template_id, "documents": list(documents)})
        if body.get("refusal") is not None:
            return Refusal(str(body["refusal"]))
        if not isinstance(body.get("summary"), str):
            raise ProtocolError("summarize response has neither summary nor refusal")
        return body["summary"]


class HttpEmbedder(HttpBackend):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.dim = None

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        body = self.post("/embed", {"texts": list(texts)})
        try:
            out = np.asarray(body["vectors"], dtype=np.float64)
        except (KeyError, ValueError, TypeError):
            raise ProtocolError("embed response lacks a rectangular 'vectors' array") from None
        if out.ndim != 2 or out.shape[0] != len(texts):
            raise ProtocolError(f"embed returned shape {out.shape} for {len(texts)} texts")
        if self.dim is None:
            self.dim = out.shape[1]
        elif out.shape[1] != self.dim:
            raise ProtocolError(f"embedding dimension changed from {self.dim} to {out.shape[1]}")
        return out


class HttpJudge(HttpBackend):
    def select(self, query: FeatureSummary, shortlist: Sequence[FeatureSummary]) -> tuple[int | None, float]:
        body = self.post("/select", {"query": query.text(), "candidates": [s.text() for s in shortlist]})
        return body.get("choice"), _confidence(body)

    def verify(self, query: FeatureSummary, candidate: FeatureSummary) -> tuple[bool, float]:
        body = self.post("/verify", {"query": query.text(), "candidate": candidate.text()})
        if not isinstance(body.get("match"), bool):
            raise ProtocolError("verify response lacks a boolean 'match'")
        return body["match"], _confidence(body)

    def compare(self, a, b) -> str:
        body = self.post("/compare", {
            "a": {"query": a[0].text(), "candidate": a[1].text()},
            "b": {"query": b[0].text(), "candidate": b[1].text()},
        })
        winner = body.get("winner")
        if winner not in ("A", "B"):
            raise ProtocolError(f"compare winner must be 'A' or 'B', got {winner!r}")
        return winner


def _confidence(body: dict) -> float:
    try:
        c = float(body["confidence"])
    except (KeyError, TypeError, ValueError):
        raise ProtocolError("response lacks a numeric 'confidence'") from None
    if not 0.0 <= c <= 1.0:
        raise ProtocolError(f"confidence {c} outside [0, 1]")
    return c
