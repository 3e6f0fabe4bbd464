"""Core data model: documents, profiles, datasets and match decisions.

Datasets live on disk as JSONL, one profile per line::

    {"profile_id": "q001", "side": "query", "bio": null,
     "documents": [{"ts": 1500000000, "community": "beekeeping", "text": "..."}],
     "truth": "c042"}

``truth`` is only meaningful on the query side and names the matching
candidate; queries without it are non-matchable distractors.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

QUERY = "query"
CANDIDATE = "candidate"
SIDES = (QUERY, CANDIDATE)

STAGES = ("search", "reason", "calibrate", "baseline")


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(DatasetError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class Document:
    timestamp: int
    community: str
    text: str

    def to_json(self) -> dict:
        return {"ts": self.timestamp, "community": self.community, "text": self.text}


@dataclass(frozen=True)
class Profile:
    profile_id: str
    side: str
    documents: tuple[Document, ...] = ()
    bio: str | None = None

    @property
    def communities(self) -> frozenset[str]:
        return frozenset(d.community for d in self.documents)


@dataclass(frozen=True)
class Dataset:
    queries: tuple[Profile, ...]
    candidates: tuple[Profile, ...]
    truth: Mapping[str, str] = field(default_factory=dict)

    @property
    def match_prior(self) -> float:
        """Fraction of queries that have a counterpart in the candidate pool."""
        if not self.queries:
            return 0.0
        return len(self.truth) / len(self.queries)

    @property
    def query_ids(self) -> list[str]:
        return [p.profile_id for p in self.queries]

    @property
    def candidate_ids(self) -> list[str]:
        return [p.profile_id for p in self.candidates]

    def query(self, profile_id: str) -> Profile:
        return self._by_id(self.queries)[profile_id]

    def candidate(self, profile_id: str) -> Profile:
        return self._by_id(self.candidates)[profile_id]

    @staticmethod
    def _by_id(profiles: Iterable[Profile]) -> dict[str, Profile]:
        return {p.profile_id: p for p in profiles}


@dataclass(frozen=True)
class MatchDecision:
    """Outcome for one query: a guessed candidate, or an abstention (guess=None).

    ``scores`` carries every confidence signal a stage produced (similarity,
    top2_gap, judge_confidence, rating) so the calibration source can be
    chosen after the fact.
    """

    query_id: str
    guess: str | None
    confidence: float | None
    stage: str
    scores: Mapping[str, float] = field(default_factory=dict)
    error: str | None = None

    def __post_init__(self):
        if self.guess is None and self.confidence is not None:
            raise ValueError(f"abstention for {self.query_id} carries a confidence")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")

    @property
    def abstained(self) -> bool:
        return self.guess is None

    def to_json(self) -> dict:
        out = {
            "query_id": self.query_id,
            "guess": self.guess,
            "confidence": self.confidence,
            "stage": self.stage,
            "scores": dict(self.scores),
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MatchDecision":
        return cls(
            query_id=obj["query_id"],
            guess=obj.get("guess"),
            confidence=obj.get("confidence"),
            stage=obj["stage"],
            scores=obj.get("scores") or {},
            error=obj.get("error"),
        )


def abstain(query_id: str, stage: str, error: str | None = None, **scores: float) -> MatchDecision:
    return MatchDecision(query_id, None, None, stage, scores, error)


def validate_dataset(d: Dataset) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    violations = []
    for side, profiles in ((QUERY, d.queries), (CANDIDATE, d.candidates)):
        counts = Counter(p.profile_id for p in profiles)
        for pid, n in counts.items():
            if n > 1:
                violations.append(f"duplicate {side} id {pid!r}")
        for p in profiles:
            if p.side != side:
                violations.append(f"profile {p.profile_id!r} has side {p.side!r}, listed as {side}")
            stamps = [doc.timestamp for doc in p.documents]
            if any(a > b for a, b in zip(stamps, stamps[1:])):
                violations.append(f"documents of {p.profile_id!r} not sorted by timestamp")
            if any(t < 0 for t in stamps):
                violations.append(f"negative timestamp in {p.profile_id!r}")
            if any(not doc.community for doc in p.documents):
                violations.append(f"empty community in {p.profile_id!r}")
    query_ids = {p.profile_id for p in d.queries}
    candidate_ids = {p.profile_id for p in d.candidates}
    for qid, cid in d.truth.items():
        if qid not in query_ids:
            violations.append(f"truth source {qid!r} is not a query")
        if cid not in candidate_ids:
            violations.append(f"truth target {cid!r} (from {qid!r}) is not a candidate")
    return violations


def _parse_document(obj, lineno: int) -> Document:
    try:
        ts, community, text = obj["ts"], obj["community"], obj["text"]
    except (KeyError, TypeError) as exc:
        raise ParseError(lineno, f"bad document record: {exc}") from None
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise ParseError(lineno, f"timestamp must be an integer, got {ts!r}")
    if not isinstance(community, str) or not isinstance(text, str):
        raise ParseError(lineno, "community and text must be strings")
    return Document(ts, community, text)


def _parse_line(line: str, lineno: int) -> tuple[Profile, str | None]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ParseError(lineno, "expected a JSON object")
    pid = obj.get("profile_id")
    side = obj.get("side")
    if not isinstance(pid, str) or not pid:
        raise ParseError(lineno, "missing profile_id")
    if side not in SIDES:
        raise ParseError(lineno, f"side must be one of {SIDES}, got {side!r}")
    docs = obj.get("documents") or []
    if not isinstance(docs, list):
        raise ParseError(lineno, "documents must be a list")
    documents = sorted((_parse_document(x, lineno) for x in docs), key=lambda doc: doc.timestamp)
    truth = obj.get("truth")
    if truth is not None and (side != QUERY or not isinstance(truth, str)):
        raise ParseError(lineno, "truth must be a candidate id on a query record")
    bio = obj.get("bio")
    if bio is not None and not isinstance(bio, str):
        raise ParseError(lineno, "bio must be a string or null")
    return Profile(pid, side, tuple(documents), bio), truth


def load_dataset(path: str | Path) -> Dataset:
    queries, candidates, truth = [], [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            profile, target = _parse_line(line, lineno)
            if profile.side == QUERY:
                queries.append(profile)
                if target is not None:
                    truth[profile.profile_id] = target
            else:
                candidates.append(profile)
    d = Dataset(tuple(queries), tuple(candidates), truth)
    violations = validate_dataset(d)
    if violations:
        raise ValidationError(violations)
    return d


def profile_to_json(p: Profile, truth: str | None = None) -> dict:
    obj = {
        "profile_id": p.profile_id,
        "side": p.side,
        "bio": p.bio,
        "documents": [doc.to_json() for doc in p.documents],
    }
    if p.side == QUERY:
        obj["truth"] = truth
    return obj


def write_dataset(d: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in d.queries:
            fh.write(json.dumps(profile_to_json(p, d.truth.get(p.profile_id)), ensure_ascii=False) + "\n")
        for p in d.candidates:
            fh.write(json.dumps(profile_to_json(p), ensure_ascii=False) + "\n")


def write_decisions(decisions: Iterable[MatchDecision], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for dec in decisions:
            fh.write(json.dumps(dec.to_json(), sort_keys=True) + "\n")


def read_decisions(path: str | Path) -> list[MatchDecision]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(MatchDecision.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, f"bad decision record: {exc}") from None
    return out
