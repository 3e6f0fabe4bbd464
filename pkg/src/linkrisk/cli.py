"""Command-line entry point; every stage reads and writes plain files."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .calibrate import SOURCES, TournamentConfig, confidence_order, judge_comparator, run_tournament, write_transcript
from .datagen import SynthConfig, synth_population
from .errors import ConfigError
from .evaluation import DEFAULT_TARGETS, extrapolate, loglinear_fit
from .extract import read_summaries, write_summaries
from .model import DatasetError, load_dataset, read_decisions, write_dataset, write_decisions
from .pipeline import PIPELINES, Experiment, RunConfig, run, stage_seed, write_report


def _targets(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad precision list {text!r}") from None
    if not vals or any(not 0 <= v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("precision targets must be in [0, 1]")
    return vals


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="root seed (u64)")
    p.add_argument("--offline", action="store_true", default=None, help="forbid network backends")
    p.add_argument("--jobs", type=int, default=None, help="cap on concurrent workers")
    p.add_argument("--out", default=None, help="output path")


def _config(args, **overrides) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig(**overrides.pop("_base", {}))
    for key in ("seed", "offline", "jobs", "out", "pipeline", "k", "precision_targets"):
        val = getattr(args, key, None)
        if val is not None:
            cfg = replace(cfg, **{key: val})
    for key, val in overrides.items():
        if val is not None:
            cfg = replace(cfg, **{key: val})
    return cfg


def cmd_datagen(args) -> int:
    synth = SynthConfig.load(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)
    pop = synth_population(synth)
    out = Path(args.out or "dataset.jsonl")
    write_dataset(pop.dataset, out)
    if args.lexicon_out:
        Path(args.lexicon_out).write_text(json.dumps(pop.lexicon, indent=1) + "\n")
    print(f"wrote {len(pop.dataset.queries)} queries, {len(pop.dataset.candidates)} candidates "
          f"(pi={pop.dataset.match_prior:.3f}) to {out}")
    return 0


def _experiment(args, pipeline="search_only") -> Experiment:
    cfg = _config(args, _base={"pipeline": pipeline}, features=getattr(args, "features", None))
    if getattr(args, "dataset", None):
        cfg = replace(cfg, dataset=args.dataset, synth=None)
    for key in ("lexicon", "catalog", "attributes"):
        if getattr(args, key, None):
            cfg = replace(cfg, **{key: getattr(args, key)})
    return Experiment(cfg)


def cmd_extract(args) -> int:
    exp = _experiment(args)
    summ = exp.summaries()
    out = Path(args.out or "summaries.jsonl")
    write_summaries((summ[k] for k in sorted(summ)), out)
    low = sum(1 for s in summ.values() if s.low_signal)
    print(f"wrote {len(summ)} summaries ({low} low-signal, {len(exp.refused)} refused) to {out}")
    return 0


def _with_summaries(exp: Experiment, path: str | None) -> None:
    if path:
        summ = {s.profile_id: s for s in read_summaries(path)}
        kind = "review_summaries" if exp.cfg.features == "reviews" else "trait_summaries"
        exp.__dict__[kind] = summ


def cmd_match(args) -> int:
    exp = _experiment(args, args.pipeline or "search_reason")
    _with_summaries(exp, args.summaries)
    decisions = exp.decisions()
    out = Path(args.out or "decisions.jsonl")
    write_decisions(decisions, out)
    if args.index_out and exp.cfg.pipeline.startswith("search"):
        exp.index.save(args.index_out)
    print(f"wrote {len(decisions)} decisions to {out}")
    return 0


def cmd_calibrate(args) -> int:
    decisions = read_decisions(args.decisions)
    if args.source != "tournament":
        ordered = confidence_order(decisions, args.source)
    else:
        exp = _experiment(args, "search_reason_calibrate")
        _with_summaries(exp, args.summaries)
        seed = stage_seed(exp.cfg.seed, "calibrate")
        cfg = TournamentConfig(rounds=args.rounds, seed=seed, jobs=exp.cfg.jobs)
        guesses = [d for d in decisions if not d.abstained]
        if len(guesses) < 2:
            ordered = confidence_order(decisions, "judge_confidence")
        else:
            result = run_tournament(decisions, judge_comparator(exp.judge, exp.summaries()), cfg)
            ordered = result.decisions
            if args.transcript:
                write_transcript(result.transcript, args.transcript)
    out = Path(args.out or "calibrated.jsonl")
    write_decisions(ordered, out)
    print(f"wrote {len(ordered)} decisions to {out}")
    return 0


def cmd_report(args) -> int:
    dataset = load_dataset(args.dataset)
    decisions = read_decisions(args.decisions)
    out = Path(args.out or "report")
    bundle = write_report(decisions, dataset, out, args.precision_targets or DEFAULT_TARGETS)
    if args.command == "report":
        json.dump(bundle, sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        for row in bundle["recall_at_precision"]:
            print(f"recall@{row['precision']:.2f} = {row['recall']:.4f}")
    return 0


def cmd_fit(args) -> int:
    points = []
    for item in args.points.split(","):
        size, recall = item.split(":")
        points.append((float(size), float(recall)))
    fit = loglinear_fit(points)
    out = {"a": fit.a, "b": fit.b, "extrapolated": {str(int(n)): extrapolate(fit, n) for n in args.at}}
    print(json.dumps(out, indent=2))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run(cfg)
    status = result.manifest["status"]
    print(f"{cfg.pipeline}: {status}, outputs in {result.out}")
    if result.report:
        for row in result.report["recall_at_precision"]:
            print(f"  recall@{row['precision']:.2f} = {row['recall']:.4f}")
    return result.status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkrisk", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic split-profile dataset")
    p.add_argument("--config", help="SynthConfig JSON")
    p.add_argument("--lexicon-out", help="also write the trait lexicon JSON")
    _common(p)
    p.set_defaults(func=cmd_datagen)

    for name, func, help_ in (("extract", cmd_extract, "summarize profiles"),
                              ("match", cmd_match, "match queries against candidates")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--dataset", required=True)
        p.add_argument("--config", help="RunConfig JSON supplying backends and options")
        p.add_argument("--lexicon", help="trait lexicon JSON (tag -> keyword)")
        p.add_argument("--attributes", help="attribute lexicon JSON for baseline_jaccard")
        p.add_argument("--catalog", help="title catalog (.json list or one per line)")
        p.add_argument("--features", choices=("traits", "reviews"))
        _common(p)
        if name == "match":
            p.add_argument("--summaries", help="summaries JSONL from `extract`")
            p.add_argument("--pipeline", choices=PIPELINES)
            p.add_argument("--k", type=int)
            p.add_argument("--index-out", help="persist the search index here")
        p.set_defaults(func=func)

    p = sub.add_parser("calibrate", help="reorder decisions by a confidence source or a tournament")
    p.add_argument("--decisions", required=True)
    p.add_argument("--source", choices=SOURCES[:3] + ("tournament",), default="judge_confidence")
    p.add_argument("--dataset", help="needed for --source tournament")
    p.add_argument("--summaries")
    p.add_argument("--config")
    p.add_argument("--lexicon")
    p.add_argument("--rounds", type=int, default=15)
    p.add_argument("--transcript", help="write the tournament transcript JSONL here")
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    for name in ("eval", "report"):
        p = sub.add_parser(name, help="metrics for a decisions file" if name == "eval" else
                           "metrics bundle (recall@precision with CIs, match-prior sweep) as JSON")
        p.add_argument("--decisions", required=True)
        p.add_argument("--dataset", required=True, help="dataset JSONL carrying the ground truth")
        p.add_argument("--precision-targets", type=_targets)
        _common(p)
        p.set_defaults(func=cmd_report)

    p = sub.add_parser("fit", help="log-linear recall-vs-pool-size fit and extrapolation")
    p.add_argument("--points", required=True, help="size:recall%% pairs, e.g. 10:90,100:82")
    p.add_argument("--at", type=float, nargs="*", default=[1e6, 1e7, 1e8])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("run", help="full pipeline from a RunConfig")
    p.add_argument("--config", required=True)
    p.add_argument("--pipeline", choices=PIPELINES)
    p.add_argument("--k", type=int)
    p.add_argument("--precision-targets", type=_targets)
    _common(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
