"""Search stage: text embeddings and an exact cosine top-k index over candidates."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .extract import FeatureSummary
from .model import Dataset
from .text import tokens

INDEX_MAGIC = b"LRKX"
INDEX_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class EmbedderBackend(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _bucket(token: str, dim: int, seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=False)).digest()
    value = int.from_bytes(digest, "little")
    return value % dim, (1.0 if (value >> 63) & 1 else -1.0)


def hash_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Signed feature-hashing bag of tokens, L2-normalized.

    Text without tokens maps to the zero vector (see :func:`is_degenerate`).
    """
    if dim < 8:
        raise ValueError("dim must be at least 8")
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens(text):
        i, sign = _bucket(tok, dim, seed)
        vec[i] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def is_degenerate(vec: np.ndarray) -> bool:
    return not np.any(vec)


class HashEmbedder:
    """Deterministic offline embedder."""

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be at least 8")
        self.dim = dim
        self.seed = seed

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, t in enumerate(texts):
            out[i] = hash_embed(t, self.dim, self.seed)
        return out


@dataclass
class SearchIndex:
    ids: list[str]
    matrix: np.ndarray  # float32, unit rows, ordered by id
    excluded: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ValueError("index matrix must have one row per candidate id")
        self._row = {cid: i for i, cid in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, candidate_id: str) -> int | None:
        return self._row.get(candidate_id)

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, self.dim, len(self.ids)))
            for cid in self.ids:
                raw = cid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(self.matrix.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path: str | Path) -> "SearchIndex":
        data = Path(path).read_bytes()
        magic, version, dim, count = _HEADER.unpack_from(data, 0)
        if magic != INDEX_MAGIC:
            raise ValueError(f"{path}: not an index file")
        if version != INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        pos = _HEADER.size
        ids = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            ids.append(data[pos:pos + n].decode("utf-8"))
            pos += n
        matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=pos).reshape(count, dim)
        return cls(ids, matrix.astype(np.float32))


def embed_summaries(
    summaries: Sequence[FeatureSummary],
    backend: EmbedderBackend,
    batch_size: int = 256,
) -> tuple[dict[str, np.ndarray], list[str]]:
    """Embed non-empty summaries in batches; returns (vectors by id, excluded ids)."""
    vectors: dict[str, np.ndarray] = {}
    excluded = []
    live = []
    for s in summaries:
        if s.text().strip():
            live.append(s)
        else:
            excluded.append(s.profile_id)
    dim = None
    for start in range(0, len(live), batch_size):
        chunk = live[start:start + batch_size]
        out = np.asarray(backend.embed([s.text() for s in chunk]), dtype=np.float64)
        if out.ndim != 2 or out.shape[0] != len(chunk):
            raise ValueError(f"embedder returned shape {out.shape} for {len(chunk)} texts")
        if dim is None:
            dim = out.shape[1]
        elif out.shape[1] != dim:
            raise ValueError(f"embedding dimension changed from {dim} to {out.shape[1]} between batches")
        norms = np.linalg.norm(out, axis=1)
        for s, v, n in zip(chunk, out, norms):
            if n == 0:
                excluded.append(s.profile_id)
            else:
                vectors[s.profile_id] = v / n
    return vectors, sorted(excluded)


def build_index(summaries: Sequence[FeatureSummary], backend: EmbedderBackend, batch_size: int = 256) -> SearchIndex:
    if not summaries:
        raise ValueError("cannot build an index from no summaries")
    ordered = sorted(summaries, key=lambda s: s.profile_id)
    vectors, excluded = embed_summaries(ordered, backend, batch_size)
    ids = sorted(vectors)
    dim = getattr(backend, "dim", None) or (len(next(iter(vectors.values()))) if vectors else 1)
    matrix = np.stack([vectors[i] for i in ids]) if ids else np.zeros((0, dim))
    return SearchIndex(ids, matrix, excluded)


def _rank_scores(ids: Sequence[str], scores: np.ndarray, rows: np.ndarray, k: int) -> list[tuple[str, float]]:
    # rows are in id order, so a stable sort on -score breaks ties by id
    if k < len(rows):
        kth = np.partition(-scores, k - 1)[k - 1]
        keep = np.flatnonzero(-scores <= kth)
        rows, scores = rows[keep], scores[keep]
    order = np.argsort(-scores, kind="stable")[:k]
    return [(ids[rows[i]], float(scores[i])) for i in order]


def query_topk(
    index: SearchIndex,
    q: np.ndarray,
    k: int,
    pool: Iterable[str] | None = None,
) -> list[tuple[str, float]]:
    """Exact top-k candidates by cosine similarity, optionally within a sub-pool."""
    rows = np.arange(len(index)) if pool is None else np.array(
        sorted(r for r in (index.row(c) for c in pool) if r is not None), dtype=np.int64)
    if not 1 <= k <= len(rows):
        raise ValueError(f"k={k} outside 1..{len(rows)}")
    qv = np.asarray(q, dtype=np.float32)
    if qv.shape != (index.dim,):
        raise ValueError(f"query has shape {qv.shape}, index dim is {index.dim}")
    scores = index.matrix[rows] @ qv
    return _rank_scores(index.ids, scores, rows, k)


def search_all(
    index: SearchIndex,
    queries: Mapping[str, np.ndarray],
    k: int,
    pools: Mapping[str, Sequence[str]] | None = None,
    chunk: int = 1024,
) -> dict[str, list[tuple[str, float]]]:
    """Top-k for many queries; full-pool queries are scored in matrix chunks."""
    out = {}
    qids = sorted(queries)
    if pools is not None:
        for qid in qids:
            pool = pools.get(qid, ())
            if any(index.row(c) is not None for c in pool):
                out[qid] = query_topk(index, queries[qid], min(k, _live(index, pool)), pool)
            else:
                out[qid] = []
        return out
    rows = np.arange(len(index))
    kk = min(k, len(index))
    for start in range(0, len(qids), chunk):
        batch = qids[start:start + chunk]
        Q = np.stack([np.asarray(queries[q], dtype=np.float32) for q in batch])
        S = Q @ index.matrix.T
        for qid, scores in zip(batch, S):
            out[qid] = _rank_scores(index.ids, scores, rows, kk) if kk else []
    return out


def _live(index: SearchIndex, pool: Sequence[str]) -> int:
    return sum(1 for c in pool if index.row(c) is not None)


def topk_recall_curve(
    dataset: Dataset,
    index: SearchIndex,
    query_vectors: Mapping[str, np.ndarray],
    k_max: int,
) -> list[tuple[int, float]]:
    """Fraction of matchable queries whose true match is within the top-k, for k = 1..k_max."""
    if not dataset.truth:
        raise ValueError("top-k recall needs at least one matchable query")
    k_max = min(k_max, len(index))
    hits = np.zeros(k_max + 1)
    live = {q: v for q, v in query_vectors.items() if q in dataset.truth}
    ranked = search_all(index, live, k_max)
    for qid, target in dataset.truth.items():
        for rank, (cid, _) in enumerate(ranked.get(qid, []), 1):
            if cid == target:
                hits[rank] += 1
                break
    cumulative = np.cumsum(hits)[1:] / len(dataset.truth)
    return [(k, float(cumulative[k - 1])) for k in range(1, k_max + 1)]
