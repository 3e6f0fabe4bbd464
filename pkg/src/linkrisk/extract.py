"""Extract stage: comment pre-filtering and micro-data summaries per profile.

Offline runs use deterministic keyword/lexicon extractors; a remote
summarization backend can be plugged in through :class:`ExtractorBackend`.
"""
from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .model import Document, Profile
from .text import TitleMatcher, normalize_title, tokens

KINDS = ("traits", "reviews", "attributes")

_URL = r"(?:https?://|www\.)\S+"
_URL_ONLY = re.compile(rf"^{_URL}(?:\s+{_URL})*$", re.IGNORECASE)
_REMOVED = {"[deleted]", "[removed]"}


@dataclass(frozen=True)
class Review:
    title: str
    rating: float
    review_ts: int


@dataclass(frozen=True)
class FeatureSummary:
    profile_id: str
    kind: str
    traits: tuple[str, ...] = ()
    reviews: tuple[Review, ...] = ()
    attributes: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown summary kind {self.kind!r}")
        populated = {"traits": bool(self.traits), "reviews": bool(self.reviews),
                     "attributes": bool(self.attributes)}
        stray = [k for k, v in populated.items() if v and k != self.kind]
        if stray:
            raise ValueError(f"{self.kind} summary for {self.profile_id} also populates {stray}")

    @property
    def low_signal(self) -> bool:
        return not (self.traits or self.reviews or self.attributes)

    def features(self) -> frozenset[str]:
        """The summary viewed as a set, for set-based baselines."""
        if self.kind == "traits":
            return frozenset(self.traits)
        if self.kind == "reviews":
            return frozenset(r.title for r in self.reviews)
        return self.attributes

    def text(self) -> str:
        """Flat text rendering handed to embedders and judges."""
        if self.kind == "traits":
            return ", ".join(t.replace("_", " ") for t in self.traits)
        if self.kind == "reviews":
            return "; ".join(f"{r.title} rated {r.rating:g}" for r in self.reviews)
        return ", ".join(sorted(a.replace("_", " ") for a in self.attributes))

    def to_json(self) -> dict:
        obj = {"profile_id": self.profile_id, "kind": self.kind}
        if self.kind == "traits":
            obj["traits"] = list(self.traits)
        elif self.kind == "reviews":
            obj["reviews"] = [[r.title, r.rating, r.review_ts] for r in self.reviews]
        else:
            obj["attributes"] = sorted(self.attributes)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSummary":
        kind = obj["kind"]
        return cls(
            obj["profile_id"],
            kind,
            traits=tuple(obj.get("traits") or ()),
            reviews=tuple(Review(t, float(r), int(ts)) for t, r, ts in obj.get("reviews") or ()),
            attributes=frozenset(obj.get("attributes") or ()),
        )


def write_summaries(summaries: Iterable[FeatureSummary], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in summaries:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_summaries(path: str | Path) -> list[FeatureSummary]:
    with open(path, encoding="utf-8") as fh:
        return [FeatureSummary.from_json(json.loads(line)) for line in fh if line.strip()]


def prefilter_comments(docs: Sequence[Document]) -> list[Document]:
    """Drop deleted/removed comments, ultra-short ones (<= 3 chars) and bare URLs."""
    kept = []
    for d in docs:
        text = d.text.strip()
        if text in _REMOVED or len(text) <= 3 or _URL_ONLY.match(text):
            continue
        kept.append(d)
    return kept


def parse_trait_list(raw: str) -> list[str]:
    seen, out = set(), []
    for part in raw.split(","):
        tag = "_".join(part.strip().lower().split())
        if tag and tag not in seen:
            seen.add(tag)
            out.append(tag)
    return out


def _keyword_pattern(keyword: str) -> re.Pattern:
    words = [re.escape(w) for w in keyword.split()]
    return re.compile(r"(?<!\w)" + r"\s+".join(words) + r"(?!\w)", re.IGNORECASE)


class TraitLexicon:
    """Compiled tag -> keyword map; build once and reuse across profiles.

    Plain alphanumeric keywords are matched as token sequences; anything with
    punctuation falls back to a regex with word boundaries.
    """

    def __init__(self, lexicon: Mapping[str, str]):
        if not lexicon:
            raise ValueError("lexicon must not be empty")
        self.order = list(lexicon)
        self.by_first: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        self.patterns = []
        for tag, kw in lexicon.items():
            toks = tuple(tokens(kw))
            if toks and " ".join(toks) == " ".join(kw.lower().split()):
                self.by_first.setdefault(toks[0], []).append((toks, tag))
            else:
                self.patterns.append((tag, _keyword_pattern(kw)))

    def tags_in(self, texts: Iterable[str]) -> list[str]:
        found = set()
        texts = list(texts)
        for text in texts:
            words = tokens(text)
            for i, w in enumerate(words):
                for toks, tag in self.by_first.get(w, ()):
                    if tuple(words[i:i + len(toks)]) == toks:
                        found.add(tag)
        if self.patterns:
            blob = "\n".join(texts)
            found.update(tag for tag, pattern in self.patterns if pattern.search(blob))
        return [tag for tag in self.order if tag in found]


def extract_traits_deterministic(p: Profile, lexicon: Mapping[str, str] | TraitLexicon) -> FeatureSummary:
    if not isinstance(lexicon, TraitLexicon):
        lexicon = TraitLexicon(lexicon)
    traits = lexicon.tags_in(d.text for d in p.documents)
    return FeatureSummary(p.profile_id, "traits", traits=tuple(parse_trait_list(",".join(traits))))


def extract_communities(p: Profile) -> FeatureSummary:
    return FeatureSummary(p.profile_id, "attributes", attributes=p.communities)


# Offline stand-in for model-estimated ratings.
SENTIMENT_WORDS = {
    "masterpiece": 2, "brilliant": 2, "incredible": 2, "amazing": 2, "perfect": 2, "loved": 2,
    "good": 1, "great": 1, "enjoyed": 1, "fun": 1, "liked": 1, "solid": 1,
    "bad": -1, "boring": -1, "disappointing": -1, "meh": -1, "dull": -1, "weak": -1,
    "terrible": -2, "awful": -2, "hated": -2, "worst": -2, "garbage": -2,
}


def sentiment_rating(text: str) -> float:
    """Lexicon sentiment of ``text`` mapped onto the 0-10 rating scale."""
    score = sum(SENTIMENT_WORDS.get(w, 0) for w in tokens(text))
    if score >= 2:
        return 9.0
    if score == 1:
        return 7.0
    if score == 0:
        return 5.0
    if score == -1:
        return 3.0
    return 1.0


def extract_reviews(
    p: Profile,
    catalog: Sequence[str],
    rate: Callable[[str, str], float] | None = None,
) -> FeatureSummary:
    """One review per catalog title mentioned, dated by its earliest mention.

    ``rate(title, text)`` overrides the offline sentiment lexicon.
    """
    reviews = []
    docs = sorted(p.documents, key=lambda d: d.timestamp)
    words = [normalize_title(d.text).split() for d in docs]
    for title in catalog:
        matcher = TitleMatcher(title)
        first = next((d for d, w in zip(docs, words) if matcher.in_words(w)), None)
        if first is None:
            continue
        rating = rate(title, first.text) if rate else sentiment_rating(first.text)
        reviews.append(Review(normalize_title(title), float(rating), first.timestamp))
    reviews.sort(key=lambda r: r.title)
    return FeatureSummary(p.profile_id, "reviews", reviews=tuple(reviews))


# --- remote extraction -----------------------------------------------------

@dataclass(frozen=True)
class Refusal:
    reason: str
    profile_id: str = ""


class ExtractorBackend(Protocol):
    def summarize(self, template_id: str, documents: list[str]) -> str | Refusal: ...


class OfflineExtractor:
    """Extractor backend that answers with lexicon hits as a comma-separated tag list."""

    def __init__(self, lexicon: Mapping[str, str]):
        self.lexicon = TraitLexicon(lexicon)

    def summarize(self, template_id: str, documents: list[str]) -> str | Refusal:
        return ", ".join(self.lexicon.tags_in(documents))


def extract_remote(p: Profile, backend: ExtractorBackend, template_id: str) -> FeatureSummary | Refusal:
    """Summarize the pre-filtered documents of ``p`` with a backend template.

    Refusals come back as values so callers can drop the profile; transport
    failures raise :class:`linkrisk.errors.TransportError`.
    """
    texts = [d.text for d in prefilter_comments(p.documents)]
    answer = backend.summarize(template_id, texts)
    if isinstance(answer, Refusal):
        return Refusal(answer.reason, p.profile_id)
    return FeatureSummary(p.profile_id, "traits", traits=tuple(parse_trait_list(answer)))


def extract_many(
    profiles: Sequence[Profile],
    backend: ExtractorBackend,
    template_id: str,
    jobs: int = 4,
) -> tuple[list[FeatureSummary], list[Refusal]]:
    """Run :func:`extract_remote` with at most ``jobs`` requests in flight."""
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda p: extract_remote(p, backend, template_id), profiles))
    summaries = [r for r in results if isinstance(r, FeatureSummary)]
    refusals = [r for r in results if isinstance(r, Refusal)]
    return summaries, refusals
