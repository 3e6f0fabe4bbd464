"""End-to-end runs: dataset -> extract -> match -> calibrate -> evaluate -> report files."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import urlparse

import numpy as np

from . import __version__
from .baselines import (
    AttributeVocabulary,
    KernelParams,
    SubredditUniverse,
    movie_similarity,
    rank_candidates,
    subreddit_score,
    title_counts,
    top2_gap,
    weighted_jaccard,
)
from .calibrate import TournamentConfig, confidence_order, judge_comparator, run_tournament, write_transcript
from .datagen import SynthConfig, attribute_lexicon, default_lexicon, synth_population
from .errors import ConfigError
from .evaluation import (
    DEFAULT_TARGETS,
    PI_SWEEP,
    count_outcomes,
    pr_curve,
    precision_of_pi,
    rates_curve,
    recall_at_precision,
    wilson_ci,
    write_pr_csv,
)
from .extract import (
    FeatureSummary,
    OfflineExtractor,
    TraitLexicon,
    extract_many,
    extract_reviews,
    extract_traits_deterministic,
    prefilter_comments,
    write_summaries,
)
from .model import Dataset, MatchDecision, Profile, abstain, load_dataset, write_dataset, write_decisions
from .reason import LexicalJudge, OracleJudge, OracleJudgeConfig, match_shortlists
from .search import HashEmbedder, SearchIndex, build_index, embed_summaries, search_all

log = logging.getLogger(__name__)

PIPELINES = (
    "baseline_jaccard",
    "baseline_movies",
    "baseline_subreddit",
    "search_only",
    "search_reason",
    "search_reason_calibrate",
)
ENDPOINT_ROLES = ("extractor", "embedder", "judge")


def stage_seed(root: int, stage: str) -> int:
    digest = hashlib.blake2b(f"{root}:{stage}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class RunConfig:
    pipeline: str = "search_reason_calibrate"
    dataset: str | None = None
    synth: SynthConfig | None = None
    k: int = 15
    tournament: TournamentConfig = field(default_factory=TournamentConfig)
    oracle: OracleJudgeConfig = field(default_factory=OracleJudgeConfig)
    judge: str = "oracle"  # offline judge: oracle | lexical
    endpoints: dict = field(default_factory=dict)
    offline: bool = True
    seed: int = 0
    out: str = "run-out"
    jobs: int = 1
    precision_targets: tuple = DEFAULT_TARGETS
    embed_dim: int = 256
    features: str = "traits"  # summary kind searched: traits | reviews
    lexicon: str | None = None
    attributes: str | None = None  # attribute lexicon for baseline_jaccard
    catalog: str | None = None
    template_id: str = "traits"
    search_confidence: str = "top2_gap"
    baseline_confidence: str = "top2_gap"
    verify: bool = True
    project_titles: bool = False
    kernel: KernelParams = field(default_factory=KernelParams)

    def validate(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; expected one of {PIPELINES}")
        if (self.dataset is None) == (self.synth is None):
            raise ConfigError("give exactly one of 'dataset' or 'synth'")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.judge not in ("oracle", "lexical"):
            raise ConfigError(f"unknown offline judge {self.judge!r}")
        if self.features not in ("traits", "reviews"):
            raise ConfigError(f"unknown feature kind {self.features!r}")
        for name in ("search_confidence", "baseline_confidence"):
            if getattr(self, name) not in ("top2_gap", "similarity"):
                raise ConfigError(f"{name} must be 'top2_gap' or 'similarity'")
        unknown = set(self.endpoints) - set(ENDPOINT_ROLES)
        if unknown:
            raise ConfigError(f"unknown endpoint roles {sorted(unknown)}")
        if self.offline and any(self.endpoints.values()):
            raise ConfigError("offline mode forbids network endpoints: " + ", ".join(sorted(self.endpoints)))
        for role, url in self.endpoints.items():
            parsed = urlparse(url or "")
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise ConfigError(f"{role} endpoint {url!r} is not an http(s) URL")
        if not self.offline:
            needed = {"search_only": ("extractor", "embedder"),
                      "search_reason": ENDPOINT_ROLES,
                      "search_reason_calibrate": ENDPOINT_ROLES}.get(self.pipeline, ())
            missing = [r for r in needed if not self.endpoints.get(r)]
            if missing:
                raise ConfigError(f"online {self.pipeline} run needs endpoints for {missing}")
        if self.pipeline == "baseline_movies" and self.catalog is None and (self.synth is None or not self.synth.n_titles):
            raise ConfigError("baseline_movies needs a title catalog (or a synth config with n_titles)")

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["precision_targets"] = list(self.precision_targets)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        obj = dict(obj.get("config", obj))  # a run manifest is a valid config
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        nested = {"synth": SynthConfig, "tournament": TournamentConfig, "oracle": OracleJudgeConfig, "kernel": KernelParams}
        for key, typ in nested.items():
            if obj.get(key) is not None:
                obj[key] = typ(**obj[key])
        if "precision_targets" in obj:
            obj["precision_targets"] = tuple(obj["precision_targets"])
        try:
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _read_list(path: str) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return list(json.loads(text))
    return [line.strip() for line in text.splitlines() if line.strip()]


class Experiment:
    """Lazily built materials shared by every pipeline on one dataset."""

    def __init__(self, cfg: RunConfig, dataset: Dataset | None = None,
                 lexicon: Mapping[str, str] | None = None, catalog: Sequence[str] | None = None):
        cfg.validate()
        self.cfg = cfg
        self._dataset = dataset
        self._lexicon = dict(lexicon) if lexicon is not None else None
        self._catalog = list(catalog) if catalog is not None else None
        self.refused: list[str] = []
        self.transcript: list[dict] = []

    # -- data ---------------------------------------------------------------
    @cached_property
    def _population(self):
        synth = replace(self.cfg.synth, seed=stage_seed(self.cfg.seed, "datagen"))
        return synth_population(synth)

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = self._population.dataset if self.cfg.synth else load_dataset(self.cfg.dataset)
        return self._dataset

    @property
    def lexicon(self) -> dict[str, str]:
        if self._lexicon is None:
            if self.cfg.lexicon:
                self._lexicon = json.loads(Path(self.cfg.lexicon).read_text(encoding="utf-8"))
            elif self.cfg.synth:
                self._lexicon = self._population.lexicon
            else:
                self._lexicon = default_lexicon()
        return self._lexicon

    @cached_property
    def attribute_lexicon(self) -> dict[str, str]:
        if self.cfg.attributes:
            return json.loads(Path(self.cfg.attributes).read_text(encoding="utf-8"))
        if self.cfg.synth:
            return self._population.attributes
        return attribute_lexicon()

    @property
    def catalog(self) -> list[str]:
        if self._catalog is None:
            if self.cfg.catalog:
                self._catalog = _read_list(self.cfg.catalog)
            elif self.cfg.synth:
                self._catalog = self._population.catalog
            else:
                self._catalog = []
        return self._catalog

    @property
    def profiles(self) -> list[Profile]:
        return list(self.dataset.queries) + list(self.dataset.candidates)

    # -- extract ------------------------------------------------------------
    @cached_property
    def trait_summaries(self) -> dict[str, FeatureSummary]:
        if self.cfg.offline or not self.cfg.endpoints.get("extractor"):
            lex = TraitLexicon(self.lexicon)
            out = {}
            for p in self.profiles:
                cleaned = replace(p, documents=tuple(prefilter_comments(p.documents)))
                out[p.profile_id] = extract_traits_deterministic(cleaned, lex)
            return out
        from .remote import HttpExtractor

        backend = HttpExtractor(self.cfg.endpoints["extractor"], max_in_flight=self.cfg.jobs)
        summaries, refusals = extract_many(self.profiles, backend, self.cfg.template_id, self.cfg.jobs)
        self.refused = sorted(r.profile_id for r in refusals)
        return {s.profile_id: s for s in summaries}

    @cached_property
    def attribute_summaries(self) -> dict[str, FeatureSummary]:
        lex = TraitLexicon(self.attribute_lexicon)
        out = {}
        for p in self.profiles:
            found = lex.tags_in(d.text for d in prefilter_comments(p.documents))
            out[p.profile_id] = FeatureSummary(p.profile_id, "attributes", attributes=frozenset(found))
        return out

    @cached_property
    def review_summaries(self) -> dict[str, FeatureSummary]:
        return {p.profile_id: extract_reviews(p, self.catalog) for p in self.profiles}

    def summaries(self) -> dict[str, FeatureSummary]:
        return self.review_summaries if self.cfg.features == "reviews" else self.trait_summaries

    # -- search -------------------------------------------------------------
    @cached_property
    def embedder(self):
        if self.cfg.offline or not self.cfg.endpoints.get("embedder"):
            return HashEmbedder(self.cfg.embed_dim, stage_seed(self.cfg.seed, "search") % (2 ** 32))
        from .remote import HttpEmbedder

        return HttpEmbedder(self.cfg.endpoints["embedder"], max_in_flight=self.cfg.jobs)

    @cached_property
    def index(self) -> SearchIndex:
        summ = self.summaries()
        cands = [summ[c] for c in self.dataset.candidate_ids if c in summ]
        return build_index(cands, self.embedder)

    @cached_property
    def query_vectors(self) -> dict[str, np.ndarray]:
        summ = self.summaries()
        vectors, _ = embed_summaries([summ[q] for q in self.dataset.query_ids if q in summ], self.embedder)
        return vectors

    # -- reason -------------------------------------------------------------
    @cached_property
    def judge(self):
        if not self.cfg.offline and self.cfg.endpoints.get("judge"):
            from .remote import HttpJudge

            return HttpJudge(self.cfg.endpoints["judge"], max_in_flight=self.cfg.jobs)
        if self.cfg.judge == "lexical":
            return LexicalJudge()
        return OracleJudge(self.dataset.truth, replace(self.cfg.oracle, seed=stage_seed(self.cfg.seed, "reason")))

    # -- matching -----------------------------------------------------------
    def _pool(self, qid, pools):
        return self.dataset.candidate_ids if pools is None else pools.get(qid, ())

    def _ranked_decisions(self, rank, pools, source) -> list[MatchDecision]:
        out = []
        for qid in sorted(self.dataset.query_ids):
            ranked = rank(qid, self._pool(qid, pools))
            if not ranked:
                out.append(abstain(qid, "baseline", error="empty pool"))
                continue
            scores = {"similarity": ranked[0][1], "top2_gap": top2_gap(ranked)}
            out.append(MatchDecision(qid, ranked[0][0], scores[source], "baseline", scores))
        return confidence_order(out, source)

    def baseline(self, kind: str, pools=None) -> list[MatchDecision]:
        source = self.cfg.baseline_confidence
        if kind == "jaccard":
            feats = {pid: s.attributes for pid, s in self.attribute_summaries.items()}
            vocab = AttributeVocabulary.from_sets(feats.values())

            def rank(qid, pool):
                q = feats.get(qid, frozenset())
                return rank_candidates(q, [(c, feats.get(c, frozenset())) for c in pool],
                                       lambda a, b: weighted_jaccard(a, b, vocab))
        elif kind == "movies":
            revs = {pid: s.reviews for pid, s in self.review_summaries.items()}
            counts = title_counts(revs.values())
            kernel = self.cfg.kernel

            def rank(qid, pool):
                return rank_candidates(revs[qid], [(c, revs[c]) for c in pool],
                                       lambda a, b: movie_similarity(a, b, kernel, counts))
        elif kind == "subreddit":
            comms = {p.profile_id: frozenset(d.community for d in prefilter_comments(p.documents))
                     for p in self.profiles}
            universe = SubredditUniverse.from_sets(comms[c] for c in self.dataset.candidate_ids)

            def rank(qid, pool):
                return rank_candidates(comms[qid], [(c, comms[c]) for c in pool],
                                       lambda a, b: subreddit_score(a, b, universe))
        else:
            raise ValueError(f"unknown baseline {kind!r}")
        return self._ranked_decisions(rank, pools, source)

    def shortlists(self, pools=None) -> dict[str, list[tuple[str, float]]]:
        return search_all(self.index, self.query_vectors, self.cfg.k, pools)

    def search_only(self, pools=None) -> list[MatchDecision]:
        source = self.cfg.search_confidence
        lists = self.shortlists(pools)
        out = []
        for qid in sorted(self.dataset.query_ids):
            ranked = lists.get(qid)
            if not ranked:
                out.append(abstain(qid, "search", error="no searchable summary"))
                continue
            scores = {"similarity": ranked[0][1], "top2_gap": top2_gap(ranked)}
            out.append(MatchDecision(qid, ranked[0][0], scores[source], "search", scores))
        return confidence_order(out, source)

    def search_reason(self, pools=None) -> list[MatchDecision]:
        summ = self.summaries()
        decisions = match_shortlists(self.dataset.query_ids, self.shortlists(pools), summ, summ, self.judge,
                                     verify=self.cfg.verify, project=self.cfg.project_titles, jobs=self.cfg.jobs)
        return confidence_order(decisions, "judge_confidence")

    def search_reason_calibrate(self, pools=None) -> list[MatchDecision]:
        reasoned = self.search_reason(pools)
        if sum(1 for d in reasoned if not d.abstained) < 2:
            return reasoned
        cfg = replace(self.cfg.tournament, seed=stage_seed(self.cfg.seed, "calibrate"),
                      jobs=max(self.cfg.tournament.jobs, self.cfg.jobs))
        result = run_tournament(reasoned, judge_comparator(self.judge, self.summaries()), cfg)
        self.transcript = result.transcript
        return result.decisions

    def decisions(self, pipeline: str | None = None, pools=None) -> list[MatchDecision]:
        """Decisions of ``pipeline`` in descending confidence order, abstentions last."""
        name = pipeline or self.cfg.pipeline
        if name.startswith("baseline_"):
            return self.baseline(name.removeprefix("baseline_"), pools)
        if name not in PIPELINES:
            raise ValueError(f"unknown pipeline {name!r}")
        return getattr(self, name)(pools)


# --- reporting ---------------------------------------------------------------

def report(
    decisions: Sequence[MatchDecision],
    dataset: Dataset,
    targets: Sequence[float] = DEFAULT_TARGETS,
) -> dict:
    """Metrics bundle: rates, recall@precision with Wilson CIs, and a match-prior sweep."""
    query_ids = set(dataset.query_ids)
    stray = sorted({d.query_id for d in decisions} - query_ids)
    if stray:
        raise ValueError(f"decisions reference unknown queries: {stray[:5]}")
    counts = count_outcomes(decisions, dataset.truth, query_ids)
    m, n = counts.m_matchable, counts.n_nonmatchable
    curve = pr_curve(decisions, dataset.truth, m)
    bundle = {
        "m_matchable": m,
        "n_nonmatchable": n,
        "match_prior": dataset.match_prior,
        "rates": asdict(counts.rates()),
        "guesses": sum(1 for d in decisions if not d.abstained),
        "recall_at_precision": [],
    }
    for p in targets:
        r = recall_at_precision(curve, p)
        correct = round(r * m)
        row = {"precision": p, "recall": r, "correct": correct}
        if m:
            row["ci95"] = list(wilson_ci(correct, m))
        bundle["recall_at_precision"].append(row)
    if n:
        per_threshold = rates_curve(decisions, dataset.truth, query_ids)
        sweep = []
        for pi in PI_SWEEP:
            row = {"pi": pi, "precision_all": precision_of_pi(counts.rates(), pi)}
            for p in targets:
                ok = [r.tpr or 0.0 for _, r in per_threshold
                      if (prec := precision_of_pi(r, pi)) is not None and prec >= p]
                row[f"recall@{p}"] = max(ok, default=0.0)
            sweep.append(row)
        bundle["pi_sweep"] = sweep
    return bundle


def write_report(decisions: Sequence[MatchDecision], dataset: Dataset, out: Path,
                 targets: Sequence[float] = DEFAULT_TARGETS) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    bundle = report(decisions, dataset, targets)
    write_pr_csv(pr_curve(decisions, dataset.truth, bundle["m_matchable"]), out / "pr_curve.csv")
    (out / "rates.json").write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    return bundle


@dataclass
class RunResult:
    status: int
    out: Path
    report: dict | None
    manifest: dict


def run(cfg: RunConfig) -> RunResult:
    """Execute one configured pipeline and write decisions, PR curve, rates and manifest."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": __version__, "config": cfg.to_json(), "status": "running",
                "outputs": {}, "partial": False}
    stage = "load"
    bundle = None
    try:
        exp = Experiment(cfg)
        dataset = exp.dataset
        if cfg.synth is not None:
            write_dataset(dataset, out / "dataset.jsonl")
            manifest["outputs"]["dataset"] = "dataset.jsonl"
        stage = "extract"
        if cfg.pipeline.startswith("search"):
            summ = exp.summaries()
            write_summaries((summ[k] for k in sorted(summ)), out / "summaries.jsonl")
            manifest["outputs"]["summaries"] = "summaries.jsonl"
            stage = "search"
            exp.index.save(out / "index.bin")
            manifest["outputs"]["index"] = "index.bin"
            manifest["excluded_candidates"] = exp.index.excluded
            manifest["refused_profiles"] = exp.refused
        stage = "match"
        decisions = exp.decisions()
        write_decisions(decisions, out / "decisions.jsonl")
        manifest["outputs"]["decisions"] = "decisions.jsonl"
        if exp.transcript:
            write_transcript(exp.transcript, out / "transcript.jsonl")
            manifest["outputs"]["transcript"] = "transcript.jsonl"
        stage = "eval"
        bundle = write_report(decisions, dataset, out, cfg.precision_targets)
        manifest["outputs"].update({"pr_curve": "pr_curve.csv", "rates": "rates.json"})
        manifest["status"] = "ok"
        status = 0
    except Exception as exc:  # noqa: BLE001 - any stage failure is reported in the manifest
        log.exception("stage %s failed", stage)
        manifest.update(status="failed", failed_stage=stage, error=f"{type(exc).__name__}: {exc}", partial=True)
        status = 1
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(status, out, bundle, manifest)
