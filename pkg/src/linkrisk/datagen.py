"""Ground-truth dataset construction: author filters, profile splits, distractors, synthetic users."""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .model import CANDIDATE, QUERY, Dataset, Document, Profile
from .text import TitleMatcher, normalize_title, title_overlap

DAY = 86400

MIN_SPAN_DAYS = 1095
MIN_COMMENTS = 200
MAX_DAILY_RATE = 24.0
BOT_SUFFIXES = ("bot", "gpt", "mods")


@dataclass(frozen=True)
class AuthorStats:
    total_comments: int
    first_ts: int
    last_ts: int

    @property
    def span_days(self) -> int:
        return (self.last_ts - self.first_ts) // DAY

    @property
    def mean_rate(self) -> float:
        return self.total_comments / max(self.span_days, 1)

    @classmethod
    def from_documents(cls, docs: Sequence[Document]) -> "AuthorStats":
        stamps = [d.timestamp for d in docs]
        return cls(len(stamps), min(stamps), max(stamps))


def author_passes_filters(stats: AuthorStats, name: str, excluded: Iterable[str] = ()) -> bool:
    """Activity/volume/rate filters plus the username-suffix bot heuristic.

    ``excluded`` is an optional curated list of account names to drop.
    """
    lowered = name.lower()
    if lowered.endswith(BOT_SUFFIXES):
        return False
    if lowered in {e.lower() for e in excluded}:
        return False
    return (
        stats.span_days >= MIN_SPAN_DAYS
        and stats.total_comments >= MIN_COMMENTS
        and stats.mean_rate <= MAX_DAILY_RATE
    )


def load_exclusion_list(path: str | Path) -> set[str]:
    with open(path, encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip() and not line.startswith("#")}


@dataclass(frozen=True)
class SplitSpec:
    gap_days: float = 365
    min_side: int = 100

    def __post_init__(self):
        if self.gap_days <= 0:
            raise ValueError("gap_days must be positive")
        if self.min_side < 1:
            raise ValueError("min_side must be at least 1")


def _side_counts(stamps: Sequence[int], t_star: float, half_gap: float) -> tuple[int, int]:
    before = sum(1 for t in stamps if t < t_star - half_gap)
    after = sum(1 for t in stamps if t > t_star + half_gap)
    return before, after


def best_split_time(stamps: Sequence[int], spec: SplitSpec) -> float | None:
    """Split time maximizing the smaller half, or None if no split is feasible.

    Both side counts only change where t* crosses a comment time shifted by
    half the gap, so evaluating the midpoint of every interval between those
    breakpoints covers every distinct outcome. Ties go to the earliest t*.
    """
    if not stamps:
        return None
    half_gap = spec.gap_days * DAY / 2
    stamps = sorted(stamps)
    points = sorted({t + half_gap for t in stamps} | {t - half_gap for t in stamps})
    best, best_t = -1, None
    for lo, hi in zip(points, points[1:]):
        t_star = (lo + hi) / 2
        before, after = _side_counts(stamps, t_star, half_gap)
        smaller = min(before, after)
        if smaller >= spec.min_side and smaller > best:
            best, best_t = smaller, t_star
    return best_t


def temporal_split(p: Profile, spec: SplitSpec = SplitSpec()) -> tuple[Profile, Profile] | None:
    """Split a profile into before/after halves around a discarded gap window.

    Returns None when no split leaves ``spec.min_side`` documents on both sides.
    Both halves keep the original profile_id; relabel before publishing.
    """
    t_star = best_split_time([d.timestamp for d in p.documents], spec)
    if t_star is None:
        return None
    half_gap = spec.gap_days * DAY / 2
    before = tuple(d for d in p.documents if d.timestamp < t_star - half_gap)
    after = tuple(d for d in p.documents if d.timestamp > t_star + half_gap)
    return (
        Profile(p.profile_id, QUERY, before, p.bio),
        Profile(p.profile_id, CANDIDATE, after, p.bio),
    )


def titles_mentioned(docs: Iterable[Document], catalog: Sequence[str]) -> list[str]:
    words = [normalize_title(d.text).split() for d in docs]
    return [t for t in catalog if any(TitleMatcher(t).in_words(w) for w in words)]


def community_split(
    p: Profile,
    main: set[str],
    alt: set[str],
    min_overlap: int = 1,
    catalog: Sequence[str] = (),
) -> tuple[Profile, Profile] | None:
    """Split by where the user posted: ``main`` communities form the query half."""
    if main & alt:
        raise ValueError(f"main and alt communities overlap: {sorted(main & alt)}")
    q_docs = tuple(d for d in p.documents if d.community in main)
    c_docs = tuple(d for d in p.documents if d.community in alt)
    if not q_docs or not c_docs:
        return None
    if min_overlap > 0:
        shared = title_overlap(titles_mentioned(q_docs, catalog), titles_mentioned(c_docs, catalog))
        if shared < min_overlap:
            return None
    return Profile(p.profile_id, QUERY, q_docs, p.bio), Profile(p.profile_id, CANDIDATE, c_docs, p.bio)


def build_split_dataset(
    profiles: Iterable[Profile],
    splitter: Callable[[Profile], tuple[Profile, Profile] | None],
    seed: int = 0,
) -> Dataset:
    """Split every profile and relabel halves with opaque, shuffled ids."""
    pairs = []
    for p in sorted(profiles, key=lambda p: p.profile_id):
        halves = splitter(p)
        if halves is not None:
            pairs.append(halves)
    rng = random.Random(seed)
    q_order = list(range(len(pairs)))
    c_order = list(range(len(pairs)))
    rng.shuffle(q_order)
    rng.shuffle(c_order)
    width = max(5, len(str(len(pairs))))
    queries, candidates, truth = [], [], {}
    for slot, i in enumerate(q_order):
        queries.append((slot, replace(pairs[i][0], profile_id=f"q{slot:0{width}d}")))
    c_ids = {}
    for slot, i in enumerate(c_order):
        c_ids[i] = f"c{slot:0{width}d}"
        candidates.append(replace(pairs[i][1], profile_id=c_ids[i]))
    for slot, i in enumerate(q_order):
        truth[f"q{slot:0{width}d}"] = c_ids[i]
    return Dataset(tuple(p for _, p in queries), tuple(candidates), truth)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_matchable: int = 100
    n_candidate_distractors: int = 100
    n_query_distractors: int = 0
    trait_pool_size: int = 400
    traits_per_user: int = 8
    trait_persistence: float = 0.7
    noise_traits_per_half: int = 2
    mentions_per_trait: int = 2
    filler_per_half: int = 4
    n_titles: int = 0
    titles_per_user: int = 3

    def __post_init__(self):
        counts = (self.n_matchable, self.n_candidate_distractors, self.n_query_distractors,
                  self.trait_pool_size, self.traits_per_user, self.noise_traits_per_half,
                  self.mentions_per_trait, self.filler_per_half, self.n_titles, self.titles_per_user)
        if any(c < 0 for c in counts):
            raise ValueError("SynthConfig counts must be non-negative")
        if not 0.0 <= self.trait_persistence <= 1.0:
            raise ValueError("trait_persistence must be in [0, 1]")
        if self.traits_per_user + self.noise_traits_per_half > self.trait_pool_size:
            raise ValueError("trait pool too small for traits_per_user + noise_traits_per_half")
        if self.n_titles and self.titles_per_user > self.n_titles:
            raise ValueError("titles_per_user exceeds n_titles")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SynthConfig":
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def inject_distractors(
    d: Dataset,
    cfg: SynthConfig,
    candidate_supply: Sequence[Profile] = (),
    query_supply: Sequence[Profile] = (),
) -> Dataset:
    """Add unmatched profiles to both sides; truth is left untouched.

    Distractors are sampled (seeded by ``cfg.seed``) from supplies that must
    come from users disjoint from the dataset's own.
    """
    if cfg.n_candidate_distractors > len(candidate_supply):
        raise ValueError(
            f"need {cfg.n_candidate_distractors} candidate distractors, supply has {len(candidate_supply)}")
    if cfg.n_query_distractors > len(query_supply):
        raise ValueError(f"need {cfg.n_query_distractors} query distractors, supply has {len(query_supply)}")
    rng = random.Random(cfg.seed)
    extra_c = rng.sample(list(candidate_supply), cfg.n_candidate_distractors)
    extra_q = rng.sample(list(query_supply), cfg.n_query_distractors)
    taken = {p.profile_id for p in d.queries} | {p.profile_id for p in d.candidates}
    for p in extra_c + extra_q:
        if p.profile_id in taken:
            raise ValueError(f"distractor id {p.profile_id!r} collides with an existing profile")
        taken.add(p.profile_id)
    return Dataset(
        d.queries + tuple(replace(p, side=QUERY) for p in extra_q),
        d.candidates + tuple(replace(p, side=CANDIDATE) for p in extra_c),
        dict(d.truth),
    )


# --- synthetic population -------------------------------------------------

_ACTIVITIES = [
    "brewing", "collecting", "restoring", "growing", "painting", "building", "repairing",
    "photographing", "sculpting", "smoking", "fermenting", "racing", "carving", "breeding",
    "sewing", "knitting", "baking", "drawing", "flying", "sailing",
]
_OBJECTS = [
    "mead", "orchids", "vinyl", "bonsai", "motorcycles", "synthesizers", "terrariums", "kites",
    "sourdough", "miniatures", "canoes", "clocks", "pythons", "tarantulas", "quilts", "sneakers",
    "drones", "aquariums", "telescopes", "typewriters", "cheese", "guitars", "chairs", "knives",
    "succulents", "watches", "bicycles", "model trains", "kombucha", "hot sauce",
]
_CITIES = [
    "Portland", "Nelson", "Duluth", "Tucson", "Halifax", "Boise", "Leeds", "Cork", "Ghent",
    "Tromso", "Dunedin", "Hobart", "Asheville", "Missoula", "Galway", "Bergen", "Graz",
    "Tampere", "Bozeman", "Flagstaff", "Kelowna", "Moncton", "Aarhus", "Lund", "Trondheim",
]
_JOBS = [
    "pediatric nurse", "welder", "actuary", "paramedic", "locksmith", "sommelier", "park ranger",
    "court reporter", "air traffic controller", "veterinarian", "luthier", "glassblower",
    "pharmacist", "electrician", "translator", "archivist", "surveyor", "machinist",
    "radiographer", "arborist", "stonemason", "cartographer", "midwife", "beekeeper",
]
_TEMPLATES = {
    "activity": [
        "Honestly {kw} has taken over my weekends.",
        "Been {kw} for a few years now, ask me anything.",
        "Spent the whole evening {kw} again, no regrets.",
        "My partner thinks {kw} is a weird hobby but I love it.",
    ],
    "place": [
        "Traffic in {kw} is getting worse every year.",
        "Anyone know a decent mechanic around {kw}?",
        "Living in {kw} has its perks, winter is not one of them.",
        "Rent in {kw} went up again this month.",
    ],
    "job": [
        "As a {kw} I can tell you the night shifts are brutal.",
        "Working as a {kw} taught me a lot of patience.",
        "Day twelve of being a {kw} this month, so tired.",
        "People never believe how much paperwork a {kw} does.",
    ],
}
_FILLER = [
    "lol", "Great point, thanks for sharing.", "This is the way.", "Source?", "Can confirm.",
    "Came here to say this.", "That's hilarious.", "Agreed, well said.", "What a time to be alive.",
    "Underrated comment.", "Why is this so relatable.", "Take my upvote.", "[deleted]",
    "https://example.com/watch", "Not sure I follow, can you explain?", "Same here honestly.",
]
_FILLER_COMMUNITIES = ["AskReddit", "funny", "pics", "videos", "gaming", "news", "worldnews", "aww"]
_TITLE_ADJ = ["Silent", "Crimson", "Last", "Hollow", "Broken", "Golden", "Distant", "Savage",
              "Frozen", "Hidden", "Electric", "Lonely", "Burning", "Quiet", "Iron", "Velvet"]
_TITLE_NOUN = ["Harbor", "Frontier", "Empire", "Garden", "Signal", "Orchard", "Tide", "Circuit",
               "Monarch", "Canyon", "Lantern", "Station", "Meridian", "Voyage", "Citadel", "Echo"]
_REVIEW_PHRASES = {
    9: ["what a masterpiece", "absolutely brilliant", "incredible from start to finish"],
    7: ["really enjoyed it", "pretty good overall", "solid and fun"],
    5: ["it was okay", "watched it once", "it exists I guess"],
    3: ["kind of boring", "pretty disappointing", "weak ending"],
    1: ["absolutely terrible", "worst thing I saw all year", "awful, just awful"],
}

_EPOCH = 1420070400  # 2015-01-01
_HALF_DAYS = 365
_GAP_DAYS = 365


@dataclass(frozen=True)
class Trait:
    tag: str
    keyword: str
    family: str
    community: str


def _all_traits() -> list[Trait]:
    out = []
    for verb in _ACTIVITIES:
        for obj in _OBJECTS:
            kw = f"{verb} {obj}"
            out.append(Trait(kw.replace(" ", "_"), kw, "activity", obj.replace(" ", "")))
    for city in _CITIES:
        out.append(Trait(f"lives_in_{city.lower()}", city, "place", city.lower()))
    for job in _JOBS:
        out.append(Trait(f"works_as_{job.replace(' ', '_')}", job, "job", job.replace(" ", "") + "s"))
    return out


def trait_pool(cfg: SynthConfig) -> list[Trait]:
    traits = _all_traits()
    if cfg.trait_pool_size > len(traits):
        raise ValueError(f"trait_pool_size {cfg.trait_pool_size} exceeds the {len(traits)} available traits")
    random.Random(f"{cfg.seed}:pool").shuffle(traits)
    return traits[: cfg.trait_pool_size]


def synth_lexicon(cfg: SynthConfig) -> dict[str, str]:
    """Tag -> keyword map covering every trait the generator can plant."""
    return {t.tag: t.keyword for t in sorted(trait_pool(cfg), key=lambda t: t.tag)}


def default_lexicon() -> dict[str, str]:
    """Lexicon over every trait the synthetic generator knows, regardless of pool size."""
    return {t.tag: t.keyword for t in sorted(_all_traits(), key=lambda t: t.tag)}


def attribute_lexicon(traits: Iterable[Trait] | None = None) -> dict[str, str]:
    """Coarse attribute -> keyword map: the object, city or job behind each trait.

    This is the fixed structured vocabulary a classical matcher works with;
    it cannot tell "brewing mead" from "fermenting mead".
    """
    out = {}
    for t in traits if traits is not None else _all_traits():
        if t.family == "activity":
            obj = t.keyword.split(" ", 1)[1]
            out["likes_" + obj.replace(" ", "_")] = obj
        else:
            out[t.tag] = t.keyword
    return dict(sorted(out.items()))


def synth_catalog(cfg: SynthConfig) -> list[str]:
    titles = [f"The {a} {n}" for a in _TITLE_ADJ for n in _TITLE_NOUN]
    if cfg.n_titles > len(titles):
        raise ValueError(f"n_titles {cfg.n_titles} exceeds the {len(titles)} available titles")
    random.Random(f"{cfg.seed}:titles").shuffle(titles)
    return sorted(titles[: cfg.n_titles])


@dataclass
class Population:
    dataset: Dataset
    lexicon: dict[str, str]
    catalog: list[str]
    planted: dict[str, set[str]] = field(default_factory=dict)  # profile_id -> base trait tags
    attributes: dict[str, str] = field(default_factory=dict)


def _half_documents(rng, traits, titles, ratings, cfg, start_day, community_for_reviews):
    docs = []
    lo = _EPOCH + start_day * DAY
    hi = lo + _HALF_DAYS * DAY
    for t in traits:
        for _ in range(cfg.mentions_per_trait):
            text = rng.choice(_TEMPLATES[t.family]).format(kw=t.keyword)
            docs.append(Document(rng.randrange(lo, hi), t.community, text))
    for title in titles:
        phrase = rng.choice(_REVIEW_PHRASES[ratings[title]])
        docs.append(Document(rng.randrange(lo, hi), community_for_reviews, f"Just watched {title}, {phrase}."))
    for _ in range(cfg.filler_per_half):
        docs.append(Document(rng.randrange(lo, hi), rng.choice(_FILLER_COMMUNITIES), rng.choice(_FILLER)))
    return docs


def _user(rng, cfg, pool, catalog, halves):
    base = rng.sample(pool, cfg.traits_per_user)
    titles = rng.sample(catalog, cfg.titles_per_user) if catalog else []
    ratings = {t: rng.choice([1, 3, 5, 7, 9]) for t in titles}
    start = rng.randrange(0, 2 * 365)
    out = {}
    if "query" in halves:
        noise = rng.sample([t for t in pool if t not in base], cfg.noise_traits_per_half)
        docs = _half_documents(rng, base + noise, titles, ratings, cfg, start, "movies")
        out["query"] = docs
    if "candidate" in halves:
        kept = [t for t in base if rng.random() < cfg.trait_persistence]
        kept_titles = [t for t in titles if rng.random() < cfg.trait_persistence]
        noise = rng.sample([t for t in pool if t not in base], cfg.noise_traits_per_half)
        docs = _half_documents(rng, kept + noise, kept_titles, ratings, cfg,
                               start + _HALF_DAYS + _GAP_DAYS, "truefilm")
        out["candidate"] = docs
    # pin the span so split users cover at least three years of activity
    if len(out) == 2 and out["query"] and out["candidate"]:
        first = _EPOCH + start * DAY
        last = _EPOCH + (start + 2 * _HALF_DAYS + _GAP_DAYS) * DAY
        q, c = out["query"], out["candidate"]
        q[0] = replace(q[0], timestamp=first)
        c[0] = replace(c[0], timestamp=last)
    return {k: tuple(sorted(v, key=lambda d: (d.timestamp, d.text))) for k, v in out.items()}, {t.tag for t in base}


def synth_population(cfg: SynthConfig) -> Population:
    rng = random.Random(cfg.seed)
    pool = trait_pool(cfg)
    catalog = synth_catalog(cfg)
    users = []
    for _ in range(cfg.n_matchable):
        users.append(_user(rng, cfg, pool, catalog, ("query", "candidate")))
    for _ in range(cfg.n_candidate_distractors):
        users.append(_user(rng, cfg, pool, catalog, ("candidate",)))
    for _ in range(cfg.n_query_distractors):
        users.append(_user(rng, cfg, pool, catalog, ("query",)))

    n_q = cfg.n_matchable + cfg.n_query_distractors
    n_c = cfg.n_matchable + cfg.n_candidate_distractors
    width = max(5, len(str(max(n_q, n_c))))
    q_slots, c_slots = list(range(n_q)), list(range(n_c))
    rng.shuffle(q_slots)
    rng.shuffle(c_slots)
    q_iter, c_iter = iter(q_slots), iter(c_slots)

    queries, candidates, truth, planted = [], [], {}, {}
    for halves, base in users:
        qid = cid = None
        if "query" in halves:
            qid = f"q{next(q_iter):0{width}d}"
            queries.append(Profile(qid, QUERY, halves["query"]))
            planted[qid] = base
        if "candidate" in halves:
            cid = f"c{next(c_iter):0{width}d}"
            candidates.append(Profile(cid, CANDIDATE, halves["candidate"]))
            planted[cid] = base
        if qid and cid:
            truth[qid] = cid
    queries.sort(key=lambda p: p.profile_id)
    candidates.sort(key=lambda p: p.profile_id)
    dataset = Dataset(tuple(queries), tuple(candidates), dict(sorted(truth.items())))
    return Population(dataset, synth_lexicon(cfg), catalog, planted, attribute_lexicon(pool))


def synth_generate(cfg: SynthConfig) -> Dataset:
    return synth_population(cfg).dataset
