"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line in ``RESULTS``; the conftest hook
prints them at the end of the session.
"""
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest

from linkrisk.baselines import (
    AttributeVocabulary, KernelParams, SubredditUniverse, movie_similarity, rank_candidates, subreddit_score,
    weighted_jaccard,
)
from linkrisk.calibrate import TournamentConfig, tournament_sort
from linkrisk.datagen import SynthConfig
from linkrisk.evaluation import (
    EvalRates, count_outcomes, extrapolate, loglinear_fit, pr_curve, precision_of_pi, recall_at_precision, wilson_ci,
)
from linkrisk.extract import FeatureSummary, Review
from linkrisk.model import MatchDecision, abstain
from linkrisk.pipeline import Experiment, RunConfig
from linkrisk.reason import OracleJudge, OracleJudgeConfig

RESULTS: dict[str, str] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    RESULTS[criterion] = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    print(RESULTS[criterion])
    assert ok, detail


# --- 1. log-linear scaling fit ---------------------------------------------

REASON_POINTS = [(10, 90.0), (100, 82.0), (1_000, 68.3), (10_000, 63.2), (30_000, 59.0), (89_000, 55.2)]
SEARCH_POINTS = [(10, 80.0), (100, 74.0), (1_000, 47.6), (10_000, 40.3), (30_000, 35.1), (89_000, 26.6)]


def test_criterion_1_scaling_fit():
    cases = [("reason", REASON_POINTS, -8.88, 98.35, (45.1, 36.2, 27.4)),
             ("search", SEARCH_POINTS, -13.94, 95.73, (12.1, 0.0, 0.0))]
    ok, parts = True, []
    for name, points, a, b, starred in cases:
        fit = loglinear_fit(points)
        ext = [extrapolate(fit, n) for n in (1e6, 1e7, 1e8)]
        ok &= abs(fit.a - a) <= 0.02 and abs(fit.b - b) <= 0.05
        ok &= all(abs(x - y) <= 0.2 for x, y in zip(ext, starred))
        parts.append(f"{name} a={fit.a:.3f} b={fit.b:.3f} ext={[round(x, 2) for x in ext]}")
    record("1 scaling fit", ok, "; ".join(parts))


# --- 2. Wilson intervals ---------------------------------------------------

WILSON_CELLS = [  # (recall %, n, published lower %, published upper %)
    (45.1, 987, 42.1, 48.2),
    (4.4, 987, 3.3, 5.9),
    (26.3, 987, 23.7, 29.2),
    (54.2, 987, 51.1, 57.2),
    (16.1, 987, 13.9, 18.5),
    (36.0, 987, 33.1, 39.0),
]


def test_criterion_2_wilson():
    ok, parts = True, []
    for pct, n, lo_ref, hi_ref in WILSON_CELLS:
        lo, hi = (100 * x for x in wilson_ci(round(pct / 100 * n), n))
        ok &= abs(lo - lo_ref) <= 0.2 and abs(hi - hi_ref) <= 0.2
        parts.append(f"{pct}%: ({lo:.2f}, {hi:.2f}) vs ({lo_ref}, {hi_ref})")
    record("2 Wilson CI", ok, "; ".join(parts))


# --- 3. precision under the empirical prior ---------------------------------

def test_criterion_3_precision_consistency():
    rng = random.Random(3)
    worst_float, exact = 0.0, True
    for _ in range(50):
        m, n = rng.randint(1, 300), rng.randint(0, 300)
        p_right, p_wrong, p_fp = rng.random(), rng.random(), rng.random()
        truth, decisions = {}, []
        for i in range(m):
            truth[f"q{i}"] = f"c{i}"
            u = rng.random()
            if u < p_right * (1 - p_wrong):
                decisions.append(MatchDecision(f"q{i}", f"c{i}", 1.0, "reason"))
            elif u < p_right:
                decisions.append(MatchDecision(f"q{i}", "wrong", 1.0, "reason"))
            else:
                decisions.append(abstain(f"q{i}", "reason"))
        for i in range(n):
            decisions.append(MatchDecision(f"n{i}", "c0", 1.0, "reason") if rng.random() < p_fp
                             else abstain(f"n{i}", "reason"))
        c = count_outcomes(decisions, truth)
        guesses = c.correct + c.wrong_matchable + c.guesses_nonmatchable
        if not guesses:
            continue
        counted = Fraction(c.correct, guesses)
        pi = Fraction(m, m + n)
        frac_rates = EvalRates(Fraction(c.correct, m), Fraction(c.wrong_matchable, m),
                               Fraction(c.guesses_nonmatchable, n) if n else None, m, n)
        exact &= precision_of_pi(frac_rates, pi) == counted
        worst_float = max(worst_float, abs(precision_of_pi(c.rates(), m / (m + n)) - float(counted)))
    record("3 precision(pi)", exact and worst_float <= 1e-12,
           f"exact with fractions={exact}, worst float error={worst_float:.1e}")


# --- 4. baselines against independent references ----------------------------

def _ref_jaccard(fa, fb, counts):
    num = den = 0.0
    for f in sorted(counts):
        w = 1.0 / math.log(1.0 + counts[f])
        if f in fa and f in fb:
            num += w
        if f in fa or f in fb:
            den += w
    return num / den if den else 0.0


def _ref_movies(ma, mb, counts, sr=1.0, st=40.0, beta=0.5):
    def earliest(reviews):
        out = {}
        for r in reviews:
            if r.title not in out or (r.review_ts, r.title) < (out[r.title].review_ts, out[r.title].title):
                out[r.title] = r
        return out

    ea, eb = earliest(ma), earliest(mb)
    num = den = 0.0
    for t in sorted(set(ea) | set(eb)):
        w = 1.0 / math.log(1.0 + counts[t])
        den += w
        if t in ea and t in eb:
            kr = math.exp(-abs(ea[t].rating - eb[t].rating) / sr)
            kt = math.exp(-abs(ea[t].review_ts - eb[t].review_ts) / 86400.0 / st)
            num += w * math.exp(beta * math.log(kr) + (1 - beta) * math.log(kt))
    return num / den if den else 0.0


def _ref_subreddit(sq, sc, users):
    total = 0.0
    for s in sorted(set(sq) & set(sc)):
        total += 1.0 / math.log(max(users.get(s, 1), 2))
    return total


def _ref_rank(scores):
    # selection sort by (score desc, id asc)
    remaining = list(scores.items())
    out = []
    while remaining:
        best = remaining[0]
        for item in remaining[1:]:
            if item[1] > best[1] or (item[1] == best[1] and item[0] < best[0]):
                best = item
        remaining.remove(best)
        out.append(best)
    return out


def test_criterion_4_baseline_oracles():
    rng = random.Random(4)
    feats = [f"f{i}" for i in range(20)]
    titles = [f"t{i}" for i in range(20)]
    worst = {"jaccard": 0.0, "movies": 0.0, "subreddit": 0.0}
    rank_ok = True
    for _ in range(1000):
        counts = {f: rng.randint(1, 50) for f in feats}
        vocab = AttributeVocabulary(counts)
        fa, fb = set(rng.sample(feats, rng.randint(0, 20))), set(rng.sample(feats, rng.randint(0, 20)))
        worst["jaccard"] = max(worst["jaccard"], abs(weighted_jaccard(fa, fb, vocab) - _ref_jaccard(fa, fb, counts)))

        def reviews():
            return [Review(rng.choice(titles), float(rng.randint(0, 10)), rng.randint(0, 400 * 86400))
                    for _ in range(rng.randint(0, 20))]
        ma, mb = reviews(), reviews()
        tc = {t: rng.randint(1, 50) for t in titles}
        worst["movies"] = max(worst["movies"], abs(movie_similarity(ma, mb, KernelParams(), tc) - _ref_movies(ma, mb, tc)))

        users = {f: rng.randint(1, 500) for f in rng.sample(feats, 15)}
        sq, sc = rng.sample(feats, rng.randint(0, 20)), rng.sample(feats, rng.randint(0, 20))
        worst["subreddit"] = max(worst["subreddit"],
                                 abs(subreddit_score(sq, sc, SubredditUniverse(users)) - _ref_subreddit(sq, sc, users)))

        pool = {f"c{i:02d}": float(rng.randint(0, 5)) for i in rng.sample(range(40), rng.randint(1, 20))}
        rank_ok &= rank_candidates(None, pool, lambda q, s: s) == _ref_rank(pool)
    ok = rank_ok and all(v <= 1e-12 for v in worst.values())
    record("4 baseline oracles", ok,
           ", ".join(f"{k} max err={v:.1e}" for k, v in worst.items()) + f", ranking identical={rank_ok}")


# --- 5. kernel fixture -----------------------------------------------------

def test_criterion_5_kernel_fixture():
    a = [Review("heat", 6.0, 0)]
    b = [Review("heat", 7.0, 40 * 86400)]
    got = movie_similarity(a, b, KernelParams(sigma_r=1.0, sigma_t=40.0, beta=0.5), {"heat": 12})
    err = abs(got - math.exp(-1))
    record("5 kernel fixture", err <= 1e-12, f"value={got!r}, |err|={err:.1e}")


# --- 6. tournament separation ----------------------------------------------

def _instance(seed, n=50, p_correct=0.6):
    rng = random.Random(seed)
    truth, decisions, summaries = {}, [], {}
    for i in range(n):
        q, c = f"q{i:02d}", f"c{i:02d}"
        truth[q] = c
        guess = c if rng.random() < p_correct else f"x{i:02d}"
        decisions.append(MatchDecision(q, guess, rng.random(), "reason", {"judge_confidence": 0.0}))
        for pid in (q, guess):
            summaries[pid] = FeatureSummary(pid, "traits")
    return truth, decisions, summaries


def _comparator(judge, summaries):
    return lambda a, b: judge.compare((summaries[a.query_id], summaries[a.guess]),
                                      (summaries[b.query_id], summaries[b.guess]))


def _exhaustive_sort(decisions, compare):
    wins = {d.query_id: 0 for d in decisions}
    for i, a in enumerate(decisions):
        for b in decisions[i + 1:]:
            wins[a.query_id if compare(a, b) == "A" else b.query_id] += 1
    return sorted(decisions, key=lambda d: (-wins[d.query_id], d.query_id))


def test_criterion_6_tournament_separation():
    start = time.perf_counter()
    separated = 0
    seeds = range(20)
    for seed in seeds:
        truth, decisions, summ = _instance(seed)
        judge = OracleJudge(truth, OracleJudgeConfig(seed=seed, compare_accuracy=1.0))
        cmp = _comparator(judge, summ)
        ranked = tournament_sort(decisions, cmp, TournamentConfig(rounds=15))
        n_correct = sum(1 for d in decisions if truth[d.query_id] == d.guess)
        exhaustive = _exhaustive_sort(decisions, cmp)
        top = {d.query_id for d in ranked[:n_correct]}
        separated += (all(truth[q] == next(d.guess for d in decisions if d.query_id == q) for q in top)
                      and top == {d.query_id for d in exhaustive[:n_correct]})

    diffs = []
    for seed in range(20):
        truth, decisions, summ = _instance(1000 + seed, p_correct=0.85)
        coin = random.Random(seed)
        ranked = tournament_sort(decisions, lambda a, b: coin.choice("AB"), TournamentConfig(rounds=15))
        before = recall_at_precision(pr_curve(decisions, truth), 0.9)
        after = recall_at_precision(pr_curve(ranked, truth), 0.9)
        diffs.append(after - before)
    ups, downs = sum(d > 0 for d in diffs), sum(d < 0 for d in diffs)
    p = binomtest(ups, ups + downs, 0.5, alternative="greater").pvalue if ups + downs else 1.0
    elapsed = time.perf_counter() - start
    ok = separated == len(seeds) and p > 0.05 and elapsed < 60
    record("6 tournament separation", ok,
           f"perfect comparator separated {separated}/{len(seeds)} instances; coin flip: "
           f"{ups} up / {downs} down vs unsorted, sign-test p={p:.2f}, mean diff={np.mean(diffs):+.3f}; {elapsed:.1f}s")


# --- 7. end-to-end ordering -------------------------------------------------

def test_criterion_7_pipeline_ordering():
    start = time.perf_counter()
    synth = SynthConfig(seed=0, n_matchable=500, n_candidate_distractors=500, n_query_distractors=500,
                        trait_persistence=0.7)
    cfg = RunConfig(synth=synth, seed=0, k=15, offline=True,
                    oracle=OracleJudgeConfig(select_accuracy=0.9, verify_tpr=0.95, verify_fpr=0.02))
    exp = Experiment(cfg)
    recall = {}
    for name in ("baseline_jaccard", "search_only", "search_reason", "search_reason_calibrate"):
        recall[name] = recall_at_precision(pr_curve(exp.decisions(name), exp.dataset.truth), 0.9)
    elapsed = time.perf_counter() - start
    r = recall
    ok = (r["search_reason_calibrate"] >= r["search_reason"] >= r["search_only"] >= r["baseline_jaccard"]
          and r["search_only"] > r["baseline_jaccard"] and elapsed < 300)
    record("7 pipeline ordering", ok,
           ", ".join(f"{k}={v:.3f}" for k, v in recall.items()) + f" (recall@0.90, {elapsed:.0f}s)")


# --- 8. scope statement -----------------------------------------------------

def test_criterion_8_scope_statement():
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text(encoding="utf-8")
    ok = "not reproducible" in readme and "proprietary" in readme
    record("8 scope statement", ok,
           "README states that results obtained with proprietary models on real platform data are not "
           "reproducible here; criteria 1-7 stand in with fixtures, oracle equivalence and ordering properties")
