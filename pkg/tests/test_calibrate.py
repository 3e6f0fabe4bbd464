import itertools
import math
import random

import pytest

from linkrisk.calibrate import (
    RatedPair, TournamentConfig, bt_fit, confidence_order, run_tournament, swiss_pairing, tournament_sort,
    write_transcript,
)
from linkrisk.errors import TransportError
from linkrisk.model import MatchDecision, abstain


def _d(qid, guess="c", conf=0.5, **scores):
    return MatchDecision(qid, guess, conf, "reason", scores or {"judge_confidence": conf})


def test_swiss_adjacent_pairing_and_bye():
    pairs = [RatedPair(f"p{i}", "c", rating=r) for i, r in enumerate([1, 3, 0, 2])]
    assert swiss_pairing(pairs) == ([("p1", "p3"), ("p0", "p2")], None)
    three = [RatedPair(f"p{i}", "c", rating=-i) for i in range(3)]
    assert swiss_pairing(three) == ([("p0", "p1")], "p2")
    with pytest.raises(ValueError):
        swiss_pairing(three[:1])


def test_swiss_avoids_rematches_exhaustively():
    # every first-round outcome on 4 equal-rated pairs: round two repeats nothing
    for first in [(("a", "b"), ("c", "d")), (("a", "c"), ("b", "d")), (("a", "d"), ("b", "c"))]:
        for winners in itertools.product([0, 1], repeat=2):
            pairs = {x: RatedPair(x, "c") for x in "abcd"}
            for (x, y), w in zip(first, winners):
                pairs[x].games.append((y, w == 0))
                pairs[y].games.append((x, w == 1))
            matchups, _ = swiss_pairing(list(pairs.values()))
            played = {frozenset(m) for m in first}
            assert not played & {frozenset(m) for m in matchups}


def test_bt_examples():
    r = bt_fit([("A", "B")] * 3)
    assert r["A"] > r["B"]
    split = bt_fit([("A", "B"), ("B", "A")])
    assert split["A"] == pytest.approx(split["B"], abs=1e-9)
    isolated = bt_fit([("A", "B"), ("C", "D"), ("C", "D")], items=["E"])
    assert isolated["E"] == 0.0
    assert isolated["A"] + isolated["B"] == pytest.approx(0.0, abs=1e-9)
    assert isolated["C"] > isolated["A"]
    with pytest.raises(ValueError):
        bt_fit([("A", "A")])


def test_bt_recovers_planted_order():
    planted = {"a": 2.0, "b": 1.0, "c": 0.0, "d": -1.0, "e": -2.0}
    rng = random.Random(7)
    outcomes = []
    names = list(planted)
    for _ in range(200):
        x, y = rng.sample(names, 2)
        p = 1 / (1 + math.exp(planted[y] - planted[x]))
        outcomes.append((x, y) if rng.random() < p else (y, x))
    fitted = bt_fit(outcomes)
    assert sorted(fitted, key=fitted.get, reverse=True) == names
    relabeled = bt_fit([(x.upper(), y.upper()) for x, y in outcomes])
    assert all(relabeled[k.upper()] == pytest.approx(v, abs=1e-6) for k, v in fitted.items())


def test_two_decisions_single_comparison():
    a, b = _d("q1"), _d("q2")
    res = run_tournament([a, b, abstain("q0", "reason")], lambda x, y: "B" if y.query_id == "q2" else "A",
                         TournamentConfig(rounds=3))
    assert [d.query_id for d in res.decisions] == ["q2", "q1", "q0"]
    assert res.decisions[0].stage == "calibrate" and res.decisions[2].abstained
    assert res.comparisons_per_round == [1, 1, 1]


def test_comparisons_per_round_bounded_and_failures_skipped(tmp_path):
    decisions = [_d(f"q{i:02d}") for i in range(11)]
    calls = {"n": 0}

    def flaky(x, y):
        calls["n"] += 1
        if calls["n"] % 4 == 0:
            raise TransportError("timeout")
        return "A"

    res = run_tournament(decisions, flaky, TournamentConfig(rounds=4))
    assert all(n <= 5 for n in res.comparisons_per_round)
    assert sum(1 for r in res.transcript if r.get("error")) == 4 * 5 - sum(res.comparisons_per_round)
    assert all(r["pair_a"] != r["pair_b"] for r in res.transcript)
    write_transcript(res.transcript, tmp_path / "t.jsonl")
    assert len((tmp_path / "t.jsonl").read_text().splitlines()) == len(res.transcript)


def test_tournament_sort_perfect_comparator_small():
    truth = {f"q{i}": i % 3 != 0 for i in range(12)}
    decisions = [_d(q) for q in truth]
    rng = random.Random(1)

    def perfect(a, b):
        ca, cb = truth[a.query_id], truth[b.query_id]
        if ca == cb:
            return rng.choice("AB")
        return "A" if ca else "B"

    ranked = tournament_sort(decisions, perfect, TournamentConfig(rounds=15))
    flags = [truth[d.query_id] for d in ranked]
    assert flags == sorted(flags, reverse=True)


def test_confidence_order():
    ds = [_d("q2", conf=0.85, judge_confidence=0.85, top2_gap=0.3), abstain("q0", "reason"),
          _d("q1", conf=0.94, judge_confidence=0.94, top2_gap=0.1), _d("q3", conf=0.85, judge_confidence=0.85, top2_gap=0.3)]
    out = confidence_order(ds, "judge_confidence")
    assert [d.query_id for d in out] == ["q1", "q2", "q3", "q0"]
    by_gap = confidence_order(ds, "top2_gap")
    assert [d.query_id for d in by_gap] == ["q2", "q3", "q1", "q0"]
    assert by_gap[0].confidence == 0.3
    with pytest.raises(KeyError, match="q2"):
        confidence_order(ds, "rating")
    with pytest.raises(ValueError):
        confidence_order(ds, "vibes")


def test_rating_order_matches_tournament_output():
    decisions = [_d(f"q{i}") for i in range(8)]
    out = tournament_sort(decisions, lambda a, b: "A" if a.query_id < b.query_id else "B", TournamentConfig(rounds=5))
    assert confidence_order(out, "rating") == out
