"""Calibrate stage: confidence orderings, including a Swiss-system Bradley-Terry tournament."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ProtocolError, TransportError
from .extract import FeatureSummary
from .model import MatchDecision
from .reason import JudgeBackend

SOURCES = ("similarity", "top2_gap", "judge_confidence", "rating")

BT_TOL = 1e-8
BT_MAX_ITER = 500
PSEUDO_COUNT = 0.5


@dataclass
class RatedPair:
    pair_id: str  # the query id; each query proposes at most one pair
    candidate_id: str
    rating: float = 0.0
    games: list[tuple[str, bool]] = field(default_factory=list)  # (opponent pair id, won)

    @property
    def opponents(self) -> set[str]:
        return {opp for opp, _ in self.games}


@dataclass(frozen=True)
class TournamentConfig:
    rounds: int = 15
    seed: int = 0
    avoid_rematches: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("a tournament needs at least one round")


def swiss_pairing(pairs: Sequence[RatedPair], avoid_rematches: bool = True) -> tuple[list[tuple[str, str]], str | None]:
    """Pair neighbours in rating order; returns (matchups, bye).

    A neighbour that would be a rematch is swapped for the next unpaired
    entry that is not, when one exists.
    """
    if len(pairs) < 2:
        raise ValueError("swiss pairing needs at least two entries")
    order = sorted(pairs, key=lambda p: (-p.rating, p.pair_id))
    unpaired = list(order)
    matchups = []
    while len(unpaired) >= 2:
        first = unpaired.pop(0)
        pick = 0
        if avoid_rematches:
            seen = first.opponents
            pick = next((i for i, p in enumerate(unpaired) if p.pair_id not in seen), 0)
        second = unpaired.pop(pick)
        matchups.append((first.pair_id, second.pair_id))
    bye = unpaired[0].pair_id if unpaired else None
    return matchups, bye


def bt_fit(outcomes: Iterable[tuple[str, str]], items: Iterable[str] = ()) -> dict[str, float]:
    """Bradley-Terry log-strengths from (winner, loser) outcomes via MM iterations.

    Every pair of opponents that met gets a 0.5 pseudo-win in each direction
    so unbeaten items stay finite. Log-strengths are centered to mean 0
    within each connected comparison component; items never compared get 0.
    """
    outcomes = list(outcomes)
    names = sorted(set(items) | {x for o in outcomes for x in o})
    if not names:
        return {}
    pos = {n: i for i, n in enumerate(names)}
    n = len(names)
    wins: dict[tuple[int, int], float] = {}
    for w, l in outcomes:
        if w == l:
            raise ValueError(f"{w!r} cannot play itself")
        key = (pos[w], pos[l])
        wins[key] = wins.get(key, 0.0) + 1.0
    pairs = sorted({(min(a, b), max(a, b)) for a, b in wins})
    if not pairs:
        return {name: 0.0 for name in names}
    i = np.array([a for a, _ in pairs])
    j = np.array([b for _, b in pairs])
    w_ij = np.array([wins.get((a, b), 0.0) + PSEUDO_COUNT for a, b in pairs])
    w_ji = np.array([wins.get((b, a), 0.0) + PSEUDO_COUNT for a, b in pairs])
    games = w_ij + w_ji
    total_wins = np.bincount(i, w_ij, n) + np.bincount(j, w_ji, n)

    adj = coo_matrix((np.ones(len(pairs)), (i, j)), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    played = np.bincount(np.concatenate([i, j]), minlength=n) > 0
    counts = np.bincount(label, minlength=label.max() + 1)

    def center(logp):
        means = np.bincount(label, logp, len(counts)) / counts
        out = logp - means[label]
        out[~played] = 0.0
        return out

    logp = np.zeros(n)
    for _ in range(BT_MAX_ITER):
        p = np.exp(logp)
        inv = games / (p[i] + p[j])
        denom = np.bincount(i, inv, n) + np.bincount(j, inv, n)
        new = logp.copy()
        new[played] = np.log(total_wins[played] / denom[played])
        new = center(new)
        delta = np.max(np.abs(new - logp))
        logp = new
        if delta < BT_TOL:
            break
    return {name: float(logp[pos[name]]) for name in names}


@dataclass
class TournamentResult:
    decisions: list[MatchDecision]
    ratings: dict[str, float]
    transcript: list[dict]
    comparisons_per_round: list[int]


def run_tournament(
    decisions: Sequence[MatchDecision],
    compare: Callable[[MatchDecision, MatchDecision], str],
    cfg: TournamentConfig = TournamentConfig(),
) -> TournamentResult:
    guesses = [d for d in decisions if not d.abstained]
    rest = sorted((d for d in decisions if d.abstained), key=lambda d: d.query_id)
    if len(guesses) < 2:
        raise ValueError("a tournament needs at least two non-abstaining decisions")
    by_id = {d.query_id: d for d in guesses}
    if len(by_id) != len(guesses):
        raise ValueError("duplicate query ids among decisions")
    pairs = {d.query_id: RatedPair(d.query_id, d.guess) for d in guesses}
    outcomes: list[tuple[str, str]] = []
    transcript, per_round = [], []

    def play(match):
        a, b = match
        try:
            winner = compare(by_id[a], by_id[b])
        except (TransportError, ProtocolError) as exc:
            return match, None, f"{type(exc).__name__}: {exc}"
        if winner not in ("A", "B"):
            return match, None, f"comparator returned {winner!r}"
        return match, winner, None

    for rnd in range(1, cfg.rounds + 1):
        matchups, _bye = swiss_pairing(list(pairs.values()), cfg.avoid_rematches)
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(play, matchups))
        else:
            results = [play(m) for m in matchups]
        played = 0
        for (a, b), winner, err in results:
            record = {"round": rnd, "pair_a": a, "pair_b": b, "winner": winner}
            if err:
                record["error"] = err
            transcript.append(record)
            if winner is None:
                continue
            played += 1
            w, l = (a, b) if winner == "A" else (b, a)
            outcomes.append((w, l))
            pairs[w].games.append((l, True))
            pairs[l].games.append((w, False))
        per_round.append(played)
        ratings = bt_fit(outcomes, pairs)
        for pid, r in ratings.items():
            pairs[pid].rating = r

    ratings = {pid: p.rating for pid, p in pairs.items()}
    ranked = sorted(guesses, key=lambda d: (-ratings[d.query_id], d.query_id))
    out = [
        replace(d, stage="calibrate", confidence=ratings[d.query_id],
                scores={**d.scores, "rating": ratings[d.query_id]})
        for d in ranked
    ]
    out += rest
    return TournamentResult(out, ratings, transcript, per_round)


def tournament_sort(
    decisions: Sequence[MatchDecision],
    compare: Callable[[MatchDecision, MatchDecision], str],
    cfg: TournamentConfig = TournamentConfig(),
) -> list[MatchDecision]:
    """Rank guesses by Swiss-system Bradley-Terry rating; abstentions trail unchanged."""
    return run_tournament(decisions, compare, cfg).decisions


def judge_comparator(judge: JudgeBackend, summaries: Mapping[str, FeatureSummary]) -> Callable[[MatchDecision, MatchDecision], str]:
    def compare(a: MatchDecision, b: MatchDecision) -> str:
        return judge.compare((summaries[a.query_id], summaries[a.guess]),
                             (summaries[b.query_id], summaries[b.guess]))
    return compare


def confidence_order(decisions: Sequence[MatchDecision], source: str) -> list[MatchDecision]:
    """Guesses sorted by the chosen score (descending, ties by query id), then abstentions.

    The chosen score becomes each guess's ``confidence``.
    """
    if source not in SOURCES:
        raise ValueError(f"unknown confidence source {source!r}; expected one of {SOURCES}")
    guesses = []
    for d in decisions:
        if d.abstained:
            continue
        if source not in d.scores:
            raise KeyError(f"decision for {d.query_id!r} has no {source!r} score")
        guesses.append(replace(d, confidence=float(d.scores[source])))
    guesses.sort(key=lambda d: (-d.confidence, d.query_id))
    abstentions = sorted((d for d in decisions if d.abstained), key=lambda d: d.query_id)
    return guesses + abstentions


def write_transcript(transcript: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in transcript:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
