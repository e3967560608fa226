"""Corpus-level scoring: hierarchical precision/recall/F-beta, flat binary
micro/macro F1, per-class diagnostics and percentile-bootstrap intervals.

Hierarchical scores are ratios of corpus-wide sums over extended label
sets (gold and predicted sets are both closed upward before any set
arithmetic), not averages of per-instance scores.  The virtual root never
enters a label set, so it earns no credit.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .hierarchy import LabelHierarchy

__all__ = [
    "HierarchicalScore",
    "ClassTally",
    "ClassScore",
    "FlatScore",
    "BootstrapInterval",
    "fbeta",
    "hierarchical_score",
    "per_class_hierarchical_diagnostics",
    "flat_binary_score",
    "bootstrap_ci",
    "POSITIVE_CLASS",
    "NEGATIVE_CLASS",
]

POSITIVE_CLASS = "positive"
NEGATIVE_CLASS = "negative"


@dataclass(frozen=True)
class HierarchicalScore:
    hp: float
    hr: float
    hf_beta: float
    beta: float
    overlap_total: int  # sum_i |ext(gold_i) & ext(pred_i)|
    pred_total: int     # sum_i |ext(pred_i)|
    gold_total: int     # sum_i |ext(gold_i)|
    n_instances: int
    missing_pred_ids: tuple[str, ...]


@dataclass(frozen=True)
class ClassTally:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class FlatScore:
    micro_f1: float
    macro_f1: float
    per_class: dict[str, ClassScore]
    n_instances: int


@dataclass(frozen=True)
class BootstrapInterval:
    point: float
    lower: float
    upper: float
    resamples: int
    seed: int
    confidence: float


def fbeta(precision: float, recall: float, beta: float = 1.0) -> float:
    """(beta^2 + 1) * P * R / (beta^2 * P + R), and 0 when that denominator is 0.

    beta < 1 leans toward precision, beta > 1 toward recall; beta = 1 is
    the harmonic mean.  Equal arguments are returned unchanged.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (beta * beta + 1.0) * precision * recall / denom


def _as_label_sets(
    h: LabelHierarchy, labels: Iterable[str], where: str
) -> frozenset[str]:
    try:
        return h.extend(labels)
    except Exception as exc:
        raise type(exc)(f"{where}: {exc}") from None


def hierarchical_score(
    h: LabelHierarchy,
    gold: Mapping[str, Iterable[str]],
    pred: Mapping[str, Iterable[str]],
    beta: float = 1.0,
) -> HierarchicalScore:
    """Hierarchical precision, recall and F-beta over a corpus.

    ``gold`` and ``pred`` map instance id -> label set.  Prediction ids
    must be a subset of gold ids; ids missing from ``pred`` are scored as
    empty predictions and reported in ``missing_pred_ids``.  Both sides
    are extended (ancestor-closed) before the sums are taken.

    Zero-denominator policy: an empty total on one side with a nonempty
    total on the other scores that component 0; when both corpus-wide
    extended totals are empty the task is vacuous and HP = HR = HF := 1.
    """
    if not gold:
        raise ValueError("empty corpus: no gold instances")
    extra = sorted(set(pred) - set(gold))
    if extra:
        raise ValueError(f"prediction ids not present in gold: {extra[:5]}")
    missing = tuple(sorted(set(gold) - set(pred)))

    overlap = pred_total = gold_total = 0
    empty: tuple[str, ...] = ()
    for iid in gold:
        g = _as_label_sets(h, gold[iid], f"gold[{iid}]")
        p = _as_label_sets(h, pred.get(iid, empty), f"pred[{iid}]")
        overlap += len(g & p)
        pred_total += len(p)
        gold_total += len(g)

    if pred_total == 0:
        hp = 1.0 if gold_total == 0 else 0.0
    else:
        hp = overlap / pred_total
    if gold_total == 0:
        hr = 1.0 if pred_total == 0 else 0.0
    else:
        hr = overlap / gold_total
    return HierarchicalScore(
        hp=hp,
        hr=hr,
        hf_beta=fbeta(hp, hr, beta),
        beta=beta,
        overlap_total=overlap,
        pred_total=pred_total,
        gold_total=gold_total,
        n_instances=len(gold),
        missing_pred_ids=missing,
    )


def per_class_hierarchical_diagnostics(
    h: LabelHierarchy,
    gold: Mapping[str, Iterable[str]],
    pred: Mapping[str, Iterable[str]],
) -> dict[str, ClassTally]:
    """Per-label tp/fp/fn over extended sets, for every non-root label.

    Labels untouched by both sides get an explicit (0, 0, 0) row.  The tp
    column sums to the overlap total of :func:`hierarchical_score`.
    """
    tallies = {label: [0, 0, 0] for label in sorted(h.non_root_labels())}
    empty: tuple[str, ...] = ()
    for iid in gold:
        g = h.extend(gold[iid])
        p = h.extend(pred.get(iid, empty))
        for label in g & p:
            tallies[label][0] += 1
        for label in p - g:
            tallies[label][1] += 1
        for label in g - p:
            tallies[label][2] += 1
    return {lab: ClassTally(*t) for lab, t in tallies.items()}


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2.0 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def flat_binary_score(
    gold: Mapping[str, bool], pred: Mapping[str, bool]
) -> FlatScore:
    """Binary micro/macro F1 for the propagandistic-or-not task.

    micro_f1 pools the positive class across instances; macro_f1 is the
    unweighted mean of the positive-class and negative-class F1.
    """
    if not gold:
        raise ValueError("empty corpus: no gold instances")
    if set(gold) != set(pred):
        diff = sorted(set(gold) ^ set(pred))
        raise ValueError(f"gold/pred instance ids differ: {diff[:5]}")

    tp = fp = fn = tn = 0
    for iid, g in gold.items():
        p = pred[iid]
        if g and p:
            tp += 1
        elif not g and p:
            fp += 1
        elif g and not p:
            fn += 1
        else:
            tn += 1

    pos = ClassScore(*_prf(tp, fp, fn), support=tp + fn)
    neg = ClassScore(*_prf(tn, fn, fp), support=tn + fp)
    micro = pos.f1
    macro = (pos.f1 + neg.f1) / 2.0
    return FlatScore(
        micro_f1=micro,
        macro_f1=macro,
        per_class={POSITIVE_CLASS: pos, NEGATIVE_CLASS: neg},
        n_instances=len(gold),
    )


def bootstrap_ci(
    score_fn: Callable[[Mapping[str, object], Mapping[str, object]], float],
    gold: Mapping[str, object],
    pred: Mapping[str, object],
    resamples: int = 1000,
    seed: int = 0,
    confidence: float = 0.95,
) -> BootstrapInterval:
    """Percentile bootstrap over instance resampling.

    ``score_fn`` must accept (gold_map, pred_map) and return a float; the
    point estimate is score_fn on the full sample.  Resample ``i`` draws
    its indices from ``numpy.random.default_rng([seed, i])``, so runs are
    reproducible and resamples are order-independent.  The interval is
    widened, if needed, to contain the point estimate.
    """
    if len(gold) < 2:
        raise ValueError("bootstrap needs at least 2 instances")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")

    extra = sorted(set(pred) - set(gold))
    if extra:
        raise ValueError(f"prediction ids not present in gold: {extra[:5]}")
    ids = sorted(gold)
    gold_list = [gold[i] for i in ids]
    # ids absent from pred ride along as empty label sets, mirroring the
    # missing-prediction policy of hierarchical_score.
    pred_list = [pred[i] if i in pred else frozenset() for i in ids]
    n = len(ids)

    point = float(score_fn(gold, pred))
    stats = np.empty(resamples, dtype=np.float64)
    for i in range(resamples):
        rng = np.random.default_rng([seed, i])
        idx = rng.integers(0, n, size=n)
        g = {str(j): gold_list[k] for j, k in enumerate(idx)}
        p = {str(j): pred_list[k] for j, k in enumerate(idx)}
        stats[i] = score_fn(g, p)

    alpha = (1.0 - confidence) / 2.0
    lower, upper = np.percentile(stats, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    lower = min(float(lower), point)
    upper = max(float(upper), point)
    if math.isnan(lower) or math.isnan(upper):
        raise ValueError("score function produced NaN during resampling")
    return BootstrapInterval(
        point=point,
        lower=lower,
        upper=upper,
        resamples=resamples,
        seed=seed,
        confidence=confidence,
    )
