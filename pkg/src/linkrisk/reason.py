"""Reason stage: pick a candidate from the search shortlist, then verify the pick."""
from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .baselines import top2_gap
from .errors import ProtocolError, TransportError
from .extract import FeatureSummary, Review
from .model import Dataset, MatchDecision, abstain
from .search import SearchIndex, search_all
from .text import tokens

Pair = tuple[FeatureSummary, FeatureSummary]  # (query summary, candidate summary)


class JudgeBackend(Protocol):
    def select(self, query: FeatureSummary, shortlist: Sequence[FeatureSummary]) -> tuple[int | None, float]:
        """1-based index into ``shortlist`` (None = abstain) and a confidence in [0, 1]."""

    def verify(self, query: FeatureSummary, candidate: FeatureSummary) -> tuple[bool, float]: ...

    def compare(self, a: Pair, b: Pair) -> str:
        """"A" or "B": whichever pair is the more plausible match."""


@dataclass(frozen=True)
class OracleJudgeConfig:
    seed: int = 0
    select_accuracy: float = 0.9
    verify_tpr: float = 0.95
    verify_fpr: float = 0.05
    confidence_noise: float = 0.05
    compare_accuracy: float = 1.0
    abstain_if_absent: bool = False

    def __post_init__(self):
        for name in ("select_accuracy", "verify_tpr", "verify_fpr", "compare_accuracy"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.confidence_noise < 0:
            raise ValueError("confidence_noise must be non-negative")


class OracleJudge:
    """Simulated judge that peeks at ground truth and errs at configured rates.

    Every call draws from its own RNG keyed by the seed and the profile ids
    involved, so results do not depend on call order or threading.
    """

    def __init__(self, truth: Mapping[str, str], cfg: OracleJudgeConfig = OracleJudgeConfig()):
        self.truth = dict(truth)
        self.cfg = cfg

    def _rng(self, *key: str) -> random.Random:
        return random.Random(":".join((str(self.cfg.seed),) + key))

    def _confidence(self, rng: random.Random, correct: bool) -> float:
        ideal = rng.uniform(0.8, 1.0) if correct else rng.uniform(0.0, 0.5)
        return min(1.0, max(0.0, ideal + rng.gauss(0.0, self.cfg.confidence_noise)))

    def is_match(self, query_id: str, candidate_id: str) -> bool:
        return self.truth.get(query_id) == candidate_id

    def select(self, query, shortlist):
        rng = self._rng("select", query.profile_id)
        ids = [s.profile_id for s in shortlist]
        target = self.truth.get(query.profile_id)
        if target in ids:
            if rng.random() < self.cfg.select_accuracy:
                return ids.index(target) + 1, self._confidence(rng, True)
            others = [i for i, c in enumerate(ids, 1) if c != target]
            if not others:
                return None, 0.0
            return rng.choice(others), self._confidence(rng, False)
        if self.cfg.abstain_if_absent:
            return None, 0.0
        return rng.randrange(len(ids)) + 1, self._confidence(rng, False)

    def verify(self, query, candidate):
        rng = self._rng("verify", query.profile_id, candidate.profile_id)
        correct = self.is_match(query.profile_id, candidate.profile_id)
        match = rng.random() < (self.cfg.verify_tpr if correct else self.cfg.verify_fpr)
        return match, self._confidence(rng, correct)

    def compare(self, a, b):
        ids = sorted([(a[0].profile_id, a[1].profile_id), (b[0].profile_id, b[1].profile_id)])
        rng = self._rng("compare", *ids[0], *ids[1])
        ca, cb = self.is_match(a[0].profile_id, a[1].profile_id), self.is_match(b[0].profile_id, b[1].profile_id)
        if ca == cb:
            return "A" if rng.random() < 0.5 else "B"
        better = "A" if ca else "B"
        if rng.random() < self.cfg.compare_accuracy:
            return better
        return "B" if better == "A" else "A"


def project_shared_titles(query: FeatureSummary, candidate: FeatureSummary) -> FeatureSummary:
    """Keep only candidate reviews of titles the query also reviewed."""
    if query.kind != "reviews" or candidate.kind != "reviews":
        return candidate
    titles = {r.title for r in query.reviews}
    kept: tuple[Review, ...] = tuple(r for r in candidate.reviews if r.title in titles)
    return FeatureSummary(candidate.profile_id, "reviews", reviews=kept)


def select_stage(
    query: FeatureSummary,
    shortlist: Sequence[tuple[str, float]],
    summaries: Mapping[str, FeatureSummary],
    judge: JudgeBackend,
    project: bool = False,
) -> tuple[str | None, float]:
    if not shortlist:
        raise ValueError("select_stage needs a non-empty shortlist")
    shown = [summaries[cid] for cid, _ in shortlist]
    if project:
        shown = [project_shared_titles(query, s) for s in shown]
    choice, confidence = judge.select(query, shown)
    if choice is None:
        return None, float(confidence)
    if isinstance(choice, bool) or not isinstance(choice, (int, np.integer)) or not 1 <= choice <= len(shortlist):
        raise ProtocolError(f"judge chose {choice!r} from a shortlist of {len(shortlist)}")
    return shortlist[int(choice) - 1][0], float(confidence)


def verify_stage(
    query: FeatureSummary,
    selected: str | None,
    summaries: Mapping[str, FeatureSummary],
    judge: JudgeBackend,
    **scores: float,
) -> MatchDecision:
    if selected is None:
        return abstain(query.profile_id, "reason", **scores)
    match, confidence = judge.verify(query, summaries[selected])
    if not 0.0 <= confidence <= 1.0:
        raise ProtocolError(f"verify confidence {confidence} outside [0, 1]")
    if not match:
        return abstain(query.profile_id, "reason", **scores)
    scores["judge_confidence"] = float(confidence)
    return MatchDecision(query.profile_id, selected, float(confidence), "reason", scores)


def _match_one(qid, shortlist, query_summaries, summaries, judge, verify, project):
    query = query_summaries.get(qid)
    if query is None or not shortlist:
        return abstain(qid, "reason", error="no searchable summary")
    scores = {"top2_gap": top2_gap(shortlist)}
    try:
        selected, sel_conf = select_stage(query, shortlist, summaries, judge, project)
        if selected is not None:
            scores["similarity"] = dict(shortlist)[selected]
            scores["select_confidence"] = sel_conf
        if verify:
            return verify_stage(query, selected, summaries, judge, **scores)
        if selected is None:
            return abstain(qid, "reason", **scores)
        scores["judge_confidence"] = sel_conf
        return MatchDecision(qid, selected, sel_conf, "reason", scores)
    except (TransportError, ProtocolError) as exc:
        return abstain(qid, "reason", error=f"{type(exc).__name__}: {exc}")


def match_shortlists(
    query_ids: Sequence[str],
    shortlists: Mapping[str, Sequence[tuple[str, float]]],
    query_summaries: Mapping[str, FeatureSummary],
    candidate_summaries: Mapping[str, FeatureSummary],
    judge: JudgeBackend,
    verify: bool = True,
    project: bool = False,
    jobs: int = 1,
) -> list[MatchDecision]:
    """Select-then-verify for every query; one decision per query, in query_id order.

    Per-query backend failures become abstentions with ``error`` set.
    """
    qids = sorted(query_ids)

    def run(qid):
        return _match_one(qid, list(shortlists.get(qid, ())), query_summaries, candidate_summaries,
                          judge, verify, project)

    if jobs <= 1:
        return [run(q) for q in qids]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, qids))


def two_stage_match(
    dataset: Dataset,
    index: SearchIndex,
    query_vectors: Mapping[str, np.ndarray],
    summaries: Mapping[str, FeatureSummary],
    judge: JudgeBackend,
    k: int = 15,
    pools: Mapping[str, Sequence[str]] | None = None,
    **kwargs,
) -> list[MatchDecision]:
    """Search top-k shortlists over ``index`` then run select/verify on each query.

    ``summaries`` holds both query and candidate summaries keyed by profile id.
    """
    shortlists = search_all(index, query_vectors, k, pools)
    return match_shortlists(dataset.query_ids, shortlists, summaries, summaries, judge, **kwargs)


def _token_set(s: FeatureSummary) -> frozenset[str]:
    return frozenset(tokens(s.text()))


def token_jaccard(a: FeatureSummary, b: FeatureSummary) -> float:
    ta, tb = _token_set(a), _token_set(b)
    union = ta | tb
    return len(ta & tb) / len(union) if union else 0.0


class LexicalJudge:
    """Text-only offline judge scoring pairs by token overlap of their summaries.

    Needs no ground truth, so it can sit behind the judge wire protocol.
    """

    def __init__(self, min_select: float = 0.05, verify_threshold: float = 0.2):
        self.min_select = min_select
        self.verify_threshold = verify_threshold

    def select(self, query, shortlist):
        scores = [token_jaccard(query, s) for s in shortlist]
        best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        if scores[best] < self.min_select:
            return None, float(scores[best])
        return best + 1, float(scores[best])

    def verify(self, query, candidate):
        score = token_jaccard(query, candidate)
        return score >= self.verify_threshold, float(score)

    def compare(self, a, b):
        return "A" if token_jaccard(*a) >= token_jaccard(*b) else "B"
