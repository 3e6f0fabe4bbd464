import pytest

from linkrisk.datagen import SynthConfig
from linkrisk.errors import ProtocolError, TransportError
from linkrisk.evaluation import compute_rates
from linkrisk.extract import FeatureSummary, Review
from linkrisk.pipeline import Experiment, RunConfig
from linkrisk.reason import (
    LexicalJudge, OracleJudge, OracleJudgeConfig, match_shortlists, project_shared_titles, select_stage,
    token_jaccard, two_stage_match,
)


def _s(pid, *traits):
    return FeatureSummary(pid, "traits", traits=traits)


SUMMARIES = {
    "q1": _s("q1", "welder", "brewing_mead"), "q2": _s("q2", "pilot"),
    "c1": _s("c1", "welder", "brewing_mead"), "c2": _s("c2", "pilot"), "c3": _s("c3", "baker"),
}


class _Fixed:
    def __init__(self, choice=1, match=True, conf=0.9, exc=None):
        self.choice, self.match, self.conf, self.exc = choice, match, conf, exc

    def select(self, q, shortlist):
        if self.exc:
            raise self.exc
        return self.choice, self.conf

    def verify(self, q, c):
        return self.match, self.conf


def test_select_stage_maps_index_and_rejects_out_of_range():
    shortlist = [("c2", 0.5), ("c1", 0.4)]
    assert select_stage(SUMMARIES["q1"], shortlist, SUMMARIES, _Fixed(choice=2)) == ("c1", 0.9)
    assert select_stage(SUMMARIES["q1"], shortlist, SUMMARIES, _Fixed(choice=None, conf=0.1)) == (None, 0.1)
    for bad in (0, 3, True, "1"):
        with pytest.raises(ProtocolError):
            select_stage(SUMMARIES["q1"], shortlist, SUMMARIES, _Fixed(choice=bad))


def test_match_shortlists_scores_and_failures():
    lists = {"q1": [("c1", 0.9), ("c3", 0.2)], "q2": [("c2", 0.8)], "q3": []}
    out = match_shortlists(["q2", "q1", "q3"], lists, SUMMARIES, SUMMARIES, _Fixed())
    assert [d.query_id for d in out] == ["q1", "q2", "q3"]
    first = out[0]
    assert first.guess == "c1" and first.confidence == 0.9
    assert first.scores["top2_gap"] == pytest.approx(0.7) and first.scores["similarity"] == 0.9
    assert out[2].abstained and out[2].error
    rejected = match_shortlists(["q1"], lists, SUMMARIES, SUMMARIES, _Fixed(match=False))
    assert rejected[0].abstained and rejected[0].error is None
    broken = match_shortlists(["q1"], lists, SUMMARIES, SUMMARIES, _Fixed(exc=TransportError("down")))
    assert broken[0].abstained and "TransportError" in broken[0].error
    no_verify = match_shortlists(["q1"], lists, SUMMARIES, SUMMARIES, _Fixed(match=False), verify=False)
    assert no_verify[0].guess == "c1"


def test_oracle_judge_is_order_independent():
    judge = OracleJudge({"q1": "c1"}, OracleJudgeConfig(seed=3))
    short = [SUMMARIES["c3"], SUMMARIES["c1"]]
    first = judge.select(SUMMARIES["q1"], short)
    judge.verify(SUMMARIES["q1"], SUMMARIES["c1"])
    assert judge.select(SUMMARIES["q1"], short) == first


def test_oracle_compare_prefers_true_pair():
    judge = OracleJudge({"q1": "c1", "q2": "c2"})
    good, bad = (SUMMARIES["q1"], SUMMARIES["c1"]), (SUMMARIES["q2"], SUMMARIES["c3"])
    assert judge.compare(good, bad) == "A" and judge.compare(bad, good) == "B"


def test_oracle_tpr_monte_carlo():
    cfg = RunConfig(synth=SynthConfig(seed=21, n_matchable=500, n_candidate_distractors=500), pipeline="search_reason")
    exp = Experiment(cfg)
    lists = exp.shortlists()
    truth = exp.dataset.truth
    hit = sum(1 for q, c in truth.items() if c in {x for x, _ in lists[q]}) / len(truth)
    summ = exp.summaries()
    tprs = []
    for seed in range(5):
        judge = OracleJudge(truth, OracleJudgeConfig(seed=seed, select_accuracy=0.9, verify_tpr=0.95))
        out = match_shortlists(exp.dataset.query_ids, lists, summ, summ, judge)
        tprs.append(compute_rates(out, truth).tpr)
    assert abs(sum(tprs) / len(tprs) - 0.9 * 0.95 * hit) <= 0.03


def test_two_stage_match_agrees_with_experiment(small_population):
    exp = Experiment(RunConfig(dataset="unused", pipeline="search_reason"), dataset=small_population.dataset,
                     lexicon=small_population.lexicon)
    direct = two_stage_match(exp.dataset, exp.index, exp.query_vectors, exp.summaries(), exp.judge, k=15)
    by_id = {d.query_id: d for d in exp.search_reason()}
    assert all(by_id[d.query_id].guess == d.guess for d in direct)
    assert {d.query_id for d in direct} == set(exp.dataset.query_ids)


def test_projection_keeps_shared_titles():
    q = FeatureSummary("q", "reviews", reviews=(Review("heat", 7, 0),))
    c = FeatureSummary("c", "reviews", reviews=(Review("heat", 5, 0), Review("alien", 9, 0)))
    assert project_shared_titles(q, c).reviews == (Review("heat", 5, 0),)
    assert project_shared_titles(SUMMARIES["q1"], SUMMARIES["c1"]) is SUMMARIES["c1"]


def test_lexical_judge():
    judge = LexicalJudge()
    assert token_jaccard(SUMMARIES["q1"], SUMMARIES["c1"]) == 1.0
    assert judge.select(SUMMARIES["q1"], [SUMMARIES["c3"], SUMMARIES["c1"]])[0] == 2
    assert judge.select(SUMMARIES["q2"], [SUMMARIES["c3"]])[0] is None
    assert judge.verify(SUMMARIES["q1"], SUMMARIES["c1"])[0]
    assert judge.compare((SUMMARIES["q1"], SUMMARIES["c3"]), (SUMMARIES["q1"], SUMMARIES["c1"])) == "B"
