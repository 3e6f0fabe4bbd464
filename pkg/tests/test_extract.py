import pytest

from linkrisk.extract import (
    FeatureSummary, OfflineExtractor, Refusal, Review, TraitLexicon, extract_communities, extract_many,
    extract_remote, extract_reviews, extract_traits_deterministic, parse_trait_list, prefilter_comments,
    read_summaries, sentiment_rating, write_summaries,
)
from linkrisk.model import Document, Profile
from tests.conftest import doc, profile


def test_prefilter_examples():
    docs = [doc(0, "[deleted]"), doc(1, "lol"), doc(2, "https://x.io/a  www.y.com"), doc(3, " ok! "), doc(3, " okay "),
            doc(4, "see https://x.io for details")]
    assert [d.text for d in prefilter_comments(docs)] == [" okay ", "see https://x.io for details"]


def test_parse_trait_list_normalizes_and_dedupes():
    assert parse_trait_list(" Brewing Mead, brewing  mead,,Lives in Cork ") == ["brewing_mead", "lives_in_cork"]


def test_lexicon_matching_is_word_bounded():
    lex = TraitLexicon({"cork": "Cork", "mead": "mead", "hot_sauce": "hot sauce", "cpp": "c++"})
    texts = ["Moved to cork last year", "meadow walks", "Hot\nsauce on everything", "I write C++ daily"]
    assert lex.tags_in(texts) == ["cork", "hot_sauce", "cpp"]
    with pytest.raises(ValueError):
        TraitLexicon({})


def test_deterministic_traits_in_lexicon_order():
    p = profile("u", texts=["I love brewing mead", "As a welder, hmm", "brewing mead again"])
    s = extract_traits_deterministic(p, {"works_as_welder": "welder", "brewing_mead": "brewing mead"})
    assert s.traits == ("works_as_welder", "brewing_mead")
    assert not s.low_signal
    assert extract_traits_deterministic(profile("v", texts=["nothing here"]), {"x": "mead"}).low_signal


def test_communities_summary():
    p = Profile("u", "query", (doc(0, community="a"), doc(1, community="b"), doc(2, community="a")))
    assert extract_communities(p).features() == {"a", "b"}


def test_reviews_use_earliest_mention():
    p = Profile("u", "query", (
        doc(5, "Just watched Rocky II, what a masterpiece"),
        doc(9, "rocky 2 was boring on rewatch"),
        doc(7, "Heat is okay"),
    ))
    s = extract_reviews(p, ["Rocky II", "Heat", "Alien"])
    assert s.reviews == (Review("heat", 5.0, 7 * 86400), Review("rocky 2", 9.0, 5 * 86400))
    custom = extract_reviews(p, ["Heat"], rate=lambda title, text: 6.5)
    assert custom.reviews[0].rating == 6.5


@pytest.mark.parametrize("text, rating", [
    ("absolutely brilliant", 9.0), ("pretty good", 7.0), ("it exists", 5.0), ("weak ending", 3.0), ("awful, worst", 1.0),
])
def test_sentiment_rating(text, rating):
    assert sentiment_rating(text) == rating


def test_summary_kind_guard_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        FeatureSummary("u", "traits", reviews=(Review("x", 1.0, 0),))
    items = [
        FeatureSummary("a", "traits", traits=("x", "y")),
        FeatureSummary("b", "reviews", reviews=(Review("heat", 7.0, 123),)),
        FeatureSummary("c", "attributes", attributes=frozenset({"p", "q"})),
    ]
    write_summaries(items, tmp_path / "s.jsonl")
    assert read_summaries(tmp_path / "s.jsonl") == items


class _Refuser:
    def summarize(self, template_id, documents):
        if any("secret" in d for d in documents):
            return Refusal("policy")
        return "Welder"


def test_remote_extraction_handles_refusals():
    good = profile("a", texts=["fine text here"])
    bad = profile("b", texts=["a secret thing"])
    assert extract_remote(good, _Refuser(), "traits").traits == ("welder",)
    assert extract_remote(bad, _Refuser(), "traits") == Refusal("policy", "b")
    summaries, refusals = extract_many([good, bad], _Refuser(), "traits", jobs=2)
    assert [s.profile_id for s in summaries] == ["a"] and [r.profile_id for r in refusals] == ["b"]


def test_offline_extractor_matches_deterministic_path(small_population):
    backend = OfflineExtractor(small_population.lexicon)
    for p in small_population.dataset.queries[:10]:
        remote = extract_remote(p, backend, "traits")
        cleaned = Profile(p.profile_id, p.side, tuple(prefilter_comments(p.documents)))
        assert remote == extract_traits_deterministic(cleaned, small_population.lexicon)
