"""Classical rarity-weighted similarity baselines and candidate ranking."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

from .extract import Review

T = TypeVar("T")
DAY = 86400.0


def rarity_weight(count: float) -> float:
    if count < 1:
        raise ValueError(f"rarity weight needs count >= 1, got {count}")
    return 1.0 / math.log1p(count)


@dataclass(frozen=True)
class AttributeVocabulary:
    counts: Mapping[str, int]

    def __post_init__(self):
        bad = [f for f, c in self.counts.items() if c < 1]
        if bad:
            raise ValueError(f"vocabulary counts must be >= 1: {bad[:5]}")

    @property
    def size(self) -> int:
        return len(self.counts)

    @cached_property
    def weights(self) -> dict[str, float]:
        return {f: rarity_weight(c) for f, c in self.counts.items()}

    def weight(self, feature: str) -> float:
        try:
            return self.weights[feature]
        except KeyError:
            raise KeyError(f"feature {feature!r} not in vocabulary") from None

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[str]]) -> "AttributeVocabulary":
        counts = Counter()
        for s in sets:
            counts.update(set(s))
        return cls(dict(counts))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(dict(sorted(self.counts.items())), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "AttributeVocabulary":
        return cls(json.loads(Path(path).read_text()))


def weighted_jaccard(fa: Iterable[str], fb: Iterable[str], vocab: AttributeVocabulary) -> float:
    fa, fb = set(fa), set(fb)
    union = fa | fb
    if not union:
        return 0.0
    weights = {f: vocab.weight(f) for f in union}
    num = math.fsum(weights[f] for f in fa & fb)
    den = math.fsum(weights.values())
    return num / den


@dataclass(frozen=True)
class KernelParams:
    sigma_r: float = 1.0
    sigma_t: float = 40.0  # days
    beta: float = 0.5

    def __post_init__(self):
        if self.sigma_r <= 0 or self.sigma_t <= 0:
            raise ValueError("kernel scales must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


def collapse_reviews(reviews: Iterable[Review]) -> dict[str, Review]:
    """One review per title, keeping the earliest."""
    out: dict[str, Review] = {}
    for r in sorted(reviews, key=lambda r: (r.review_ts, r.title)):
        out.setdefault(r.title, r)
    return out


def review_kernel(a: Review, b: Review, params: KernelParams) -> float:
    k_r = math.exp(-abs(a.rating - b.rating) / params.sigma_r)
    k_t = math.exp(-abs(a.review_ts - b.review_ts) / DAY / params.sigma_t)
    return k_r ** params.beta * k_t ** (1.0 - params.beta)


def movie_similarity(
    ma: Iterable[Review],
    mb: Iterable[Review],
    params: KernelParams,
    counts: Mapping[str, int],
) -> float:
    ra, rb = collapse_reviews(ma), collapse_reviews(mb)
    union = ra.keys() | rb.keys()
    if not union:
        return 0.0
    try:
        weights = {m: rarity_weight(counts[m]) for m in union}
    except KeyError as exc:
        raise KeyError(f"no rating count for title {exc.args[0]!r}") from None
    num = math.fsum(weights[m] * review_kernel(ra[m], rb[m], params) for m in ra.keys() & rb.keys())
    return num / math.fsum(weights.values())


def title_counts(review_sets: Iterable[Iterable[Review]]) -> dict[str, int]:
    counts = Counter()
    for reviews in review_sets:
        counts.update(collapse_reviews(reviews).keys())
    return dict(counts)


@dataclass(frozen=True)
class SubredditUniverse:
    users: Mapping[str, int]  # community -> number of candidate users posting there

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[str]]) -> "SubredditUniverse":
        counts = Counter()
        for s in sets:
            counts.update(set(s))
        return cls(dict(counts))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(dict(sorted(self.users.items())), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "SubredditUniverse":
        return cls(json.loads(Path(path).read_text()))


def subreddit_score(sq: Iterable[str], sc: Iterable[str], universe: SubredditUniverse) -> float:
    # singleton (or unseen) communities are clamped to 2 users: 1/ln(1) is undefined
    shared = sorted(set(sq) & set(sc))
    return math.fsum(1.0 / math.log(max(universe.users.get(s, 1), 2)) for s in shared)


def rank_candidates(
    query: T,
    pool: Mapping[str, T] | Sequence[tuple[str, T]],
    scorer: Callable[[T, T], float],
) -> list[tuple[str, float]]:
    """Score every candidate against ``query``; highest first, ties by candidate id."""
    items = pool.items() if isinstance(pool, Mapping) else pool
    scored = [(cid, scorer(query, feats)) for cid, feats in items]
    scored.sort(key=lambda x: (-x[1], x[0]))
    return scored


def top2_gap(ranked: Sequence[tuple[str, float]]) -> float:
    if not ranked:
        raise ValueError("top2_gap of an empty ranking")
    if len(ranked) == 1:
        return ranked[0][1]
    return ranked[0][1] - ranked[1][1]


def write_rankings(rankings: Mapping[str, Sequence[tuple[str, float]]], path: str | Path, limit: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "rank", "candidate_id", "score"])
        for qid in sorted(rankings):
            for rank, (cid, score) in enumerate(rankings[qid][:limit], 1):
                w.writerow([qid, rank, cid, repr(score)])
