"""Matching metrics: error rates, precision under a match prior, PR curves, Wilson CIs, pool scaling."""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, pstdev
from typing import Callable, Iterable, Mapping, Sequence

from .model import Dataset, MatchDecision

DEFAULT_TARGETS = (0.90, 0.98, 0.99)
PI_SWEEP = (1.0, 0.5, 0.1, 0.01, 0.001, 0.0001)


@dataclass(frozen=True)
class EvalRates:
    tpr: float | None
    fmr: float | None
    fpir: float | None
    m_matchable: int
    n_nonmatchable: int


@dataclass(frozen=True)
class Counts:
    correct: int
    wrong_matchable: int
    guesses_nonmatchable: int
    m_matchable: int
    n_nonmatchable: int

    def rates(self) -> EvalRates:
        m, n = self.m_matchable, self.n_nonmatchable
        return EvalRates(
            self.correct / m if m else None,
            self.wrong_matchable / m if m else None,
            self.guesses_nonmatchable / n if n else None,
            m,
            n,
        )


def count_outcomes(
    decisions: Iterable[MatchDecision],
    truth: Mapping[str, str],
    query_ids: Iterable[str] | None = None,
) -> Counts:
    decisions = list(decisions)
    seen = set()
    for d in decisions:
        if d.query_id in seen:
            raise ValueError(f"query {d.query_id!r} has more than one decision")
        seen.add(d.query_id)
    queries = set(query_ids) if query_ids is not None else seen | set(truth)
    correct = wrong = fp = 0
    for d in decisions:
        if d.abstained:
            continue
        if d.query_id in truth:
            if truth[d.query_id] == d.guess:
                correct += 1
            else:
                wrong += 1
        else:
            fp += 1
    m = sum(1 for q in queries if q in truth)
    return Counts(correct, wrong, fp, m, len(queries) - m)


def compute_rates(
    decisions: Iterable[MatchDecision],
    truth: Mapping[str, str],
    query_ids: Iterable[str] | None = None,
) -> EvalRates:
    """TPR/FMR over matchable queries, FPIR over non-matchable ones.

    ``query_ids`` is the full query set; by default it is every decided query
    plus every matchable one.
    """
    return count_outcomes(decisions, truth, query_ids).rates()


def precision_of_pi(r: EvalRates, pi: float) -> float | None:
    """Precision implied by the error rates when a fraction ``pi`` of queries is matchable.

    Exact when the rates and ``pi`` are ``Fraction`` instances.
    """
    if not 0 <= pi <= 1:
        raise ValueError("pi must be in [0, 1]")
    tpr, fmr, fpir = r.tpr or 0, r.fmr or 0, r.fpir or 0
    denom = pi * tpr + pi * fmr + (1 - pi) * fpir
    if denom <= 0:
        return None
    return pi * tpr / denom


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def _guesses_by_threshold(decisions: Iterable[MatchDecision]) -> list[list[MatchDecision]]:
    guesses = sorted((d for d in decisions if not d.abstained), key=lambda d: -d.confidence)
    groups: list[list[MatchDecision]] = []
    for d in guesses:
        if groups and groups[-1][0].confidence == d.confidence:
            groups[-1].append(d)
        else:
            groups.append([d])
    return groups


def pr_curve(decisions: Sequence[MatchDecision], truth: Mapping[str, str], m_matchable: int | None = None) -> list[PRPoint]:
    """Precision/recall when accepting every guess with confidence >= each distinct threshold."""
    m = len(truth) if m_matchable is None else m_matchable
    points, accepted, correct = [], 0, 0
    for group in _guesses_by_threshold(decisions):
        accepted += len(group)
        correct += sum(1 for d in group if truth.get(d.query_id) == d.guess)
        points.append(PRPoint(group[0].confidence, correct / accepted, correct / m if m else 0.0))
    return points


def rates_curve(decisions: Sequence[MatchDecision], truth: Mapping[str, str], query_ids: Iterable[str]) -> list[tuple[float, EvalRates]]:
    """Error rates at every distinct confidence threshold."""
    queries = set(query_ids)
    m = sum(1 for q in queries if q in truth)
    n = len(queries) - m
    out, correct, wrong, fp = [], 0, 0, 0
    for group in _guesses_by_threshold(decisions):
        for d in group:
            if d.query_id not in truth:
                fp += 1
            elif truth[d.query_id] == d.guess:
                correct += 1
            else:
                wrong += 1
        out.append((group[0].confidence, Counts(correct, wrong, fp, m, n).rates()))
    return out


def recall_at_precision(curve: Sequence[PRPoint], p: float) -> float:
    """Largest recall among points whose precision is at least ``p`` (0 if none)."""
    return max((pt.recall for pt in curve if pt.precision >= p), default=0.0)


def wilson_ci(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n < 1:
        raise ValueError("Wilson interval needs n >= 1")
    if not 0 <= successes <= n:
        raise ValueError("successes must be within 0..n")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    # the bounds are exactly 0 / 1 at the extremes; avoid cancellation residue
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class ScalingFit:
    a: float  # recall points per decade of pool size
    b: float


def loglinear_fit(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Ordinary least squares of recall (%) on log10(pool size)."""
    if len({n for n, _ in points}) < 2:
        raise ValueError("need at least two distinct pool sizes")
    xs = [math.log10(n) for n, _ in points]
    ys = [r for _, r in points]
    mx, my = mean(xs), mean(ys)
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    a = sxy / sxx
    return ScalingFit(a, my - a * mx)


def extrapolate(fit: ScalingFit, n: float) -> float:
    return min(100.0, max(0.0, fit.a * math.log10(n) + fit.b))


# --- pool-size study -------------------------------------------------------

Method = Callable[[Mapping[str, Sequence[str]]], Sequence[MatchDecision]]


def nested_pools(dataset: Dataset, sizes: Sequence[int], rng: random.Random) -> dict[int, dict[str, list[str]]]:
    """Per-query candidate pools for each size; smaller pools nest inside larger ones.

    A matchable query's true candidate is always in its pool.
    """
    if list(sizes) != sorted(sizes):
        raise ValueError("pool sizes must be ascending")
    cids = sorted(dataset.candidate_ids)
    if sizes and sizes[-1] > len(cids):
        raise ValueError(f"pool size {sizes[-1]} exceeds the {len(cids)} candidates")
    if sizes and sizes[0] < 1:
        raise ValueError("pool sizes must be positive")
    order = list(cids)
    rng.shuffle(order)
    pools = {s: {} for s in sizes}
    for qid in dataset.query_ids:
        target = dataset.truth.get(qid)
        ranked = ([target] if target else []) + [c for c in order if c != target]
        for s in sizes:
            pools[s][qid] = ranked[:s]
    return pools


@dataclass(frozen=True)
class ScalingRow:
    size: int
    draw: int
    recall: Mapping[float, float]


def pool_scaling_study(
    dataset: Dataset,
    method: Method,
    sizes: Sequence[int],
    draws: int,
    seed: int,
    targets: Sequence[float] = DEFAULT_TARGETS,
) -> list[ScalingRow]:
    """Re-run ``method`` on nested random candidate pools and record recall@precision.

    ``method`` gets per-query pools and returns decisions in confidence order.
    """
    rows = []
    for draw in range(draws):
        pools = nested_pools(dataset, sizes, random.Random(f"{seed}:pool-draw:{draw}"))
        for size in sizes:
            curve = pr_curve(method(pools[size]), dataset.truth)
            rows.append(ScalingRow(size, draw, {p: recall_at_precision(curve, p) for p in targets}))
    return rows


def summarize_scaling(rows: Sequence[ScalingRow]) -> list[dict]:
    out = []
    for size in sorted({r.size for r in rows}):
        group = [r for r in rows if r.size == size]
        for p in group[0].recall:
            vals = [r.recall[p] for r in group]
            out.append({"size": size, "precision": p, "mean": mean(vals), "std": pstdev(vals), "draws": len(vals)})
    return out


def fit_scaling_rows(rows: Sequence[ScalingRow], precision: float, exclude_sizes: Iterable[int] = ()) -> ScalingFit:
    skip = set(exclude_sizes)
    points = [(r.size, 100.0 * r.recall[precision]) for r in rows if r.size not in skip]
    return loglinear_fit(points)


# --- output ----------------------------------------------------------------

def write_pr_csv(curve: Sequence[PRPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for pt in curve:
            w.writerow([repr(pt.threshold), repr(pt.precision), repr(pt.recall)])


def write_long_csv(rows: Iterable[Mapping], path: str | Path) -> None:
    rows = list(rows)
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
