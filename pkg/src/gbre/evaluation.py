"""Held-out ranking evaluation: PR curve, AUC, P@N and best F1."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class RankedPrediction:
    bag_key: tuple
    relation: int
    probability: float


@dataclass(frozen=True)
class PRPoint:
    precision: float
    recall: float


def rank_predictions(bag_keys: Sequence, probs: np.ndarray, na_id: int = 0) -> list:
    """Pool every non-NA (bag, relation) score and sort by descending probability.

    Ties are broken by bag key, then relation id.
    """
    probs = np.asarray(probs, dtype=float)
    if len(bag_keys) == 0:
        return []
    if probs.shape[0] != len(bag_keys):
        raise ValueError(f"{len(bag_keys)} bag keys but {probs.shape[0]} probability rows")
    preds = [RankedPrediction(key, r, float(probs[i, r]))
             for i, key in enumerate(bag_keys)
             for r in range(probs.shape[1]) if r != na_id]
    preds.sort(key=lambda p: (-p.probability, p.bag_key, p.relation))
    return preds


def gold_facts(bags, na_id: int = 0) -> set:
    """(bag key, relation) pairs for every non-NA label of the evaluation bags."""
    facts = set()
    for b in bags:
        for r in (b.labels or {b.label}):
            if r != na_id:
                facts.add((b.key, r))
    return facts


def hits(ranked: Sequence[RankedPrediction], gold: set) -> np.ndarray:
    return np.array([(p.bag_key, p.relation) in gold for p in ranked], dtype=bool)


def pr_curve(ranked: Sequence[RankedPrediction], gold: set) -> list:
    """Precision and recall after each rank cutoff 1..len(ranked)."""
    if not gold:
        raise ValueError("pr_curve: no gold facts")
    h = np.cumsum(hits(ranked, gold))
    seen = np.arange(1, len(ranked) + 1)
    return [PRPoint(float(a / n), float(a / len(gold))) for a, n in zip(h, seen)]


def auc(points: Sequence[PRPoint]) -> float:
    """Trapezoidal area under precision over recall in [0, 1].

    The curve starts at recall 0 with the first point's precision; recall
    never reached contributes nothing.
    """
    if not points:
        raise ValueError("auc: empty curve")
    r = np.array([0.0] + [p.recall for p in points])
    p = np.array([points[0].precision] + [p.precision for p in points])
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def precision_at_n(ranked: Sequence[RankedPrediction], gold: set, n: int) -> float:
    if n < 1 or n > len(ranked):
        raise ValueError(f"precision_at_n: N={n} outside 1..{len(ranked)}")
    return float(hits(ranked[:n], gold).sum() / n)


def best_f1(points: Iterable[PRPoint]) -> float:
    best = 0.0
    for pt in points:
        s = pt.precision + pt.recall
        if s > 0:
            best = max(best, 2 * pt.precision * pt.recall / s)
    return best


@dataclass
class Metrics:
    auc: float
    f1: float
    p_at: dict
    mean_p_at: float | None

    def to_dict(self) -> dict:
        return {"auc": self.auc, "f1": self.f1,
                "p_at": {str(k): v for k, v in self.p_at.items()},
                "mean_p_at": self.mean_p_at}


def evaluate(ranked: Sequence[RankedPrediction], gold: set, p_at_n=(100, 200, 300)) -> Metrics:
    """All metrics at once; P@N cutoffs longer than the ranked list are skipped."""
    points = pr_curve(ranked, gold)
    p_at = {n: precision_at_n(ranked, gold, n) for n in p_at_n if n <= len(ranked)}
    mean = float(np.mean(list(p_at.values()))) if p_at else None
    return Metrics(auc(points), best_f1(points), p_at, mean)


def write_metrics(path, metrics: Metrics, extra: dict | None = None):
    payload = {**metrics.to_dict(), **(extra or {})}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_pr_csv(path, ranked: Sequence[RankedPrediction], points: Sequence[PRPoint]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rank", "precision", "recall", "probability"])
        for i, (pred, pt) in enumerate(zip(ranked, points), 1):
            w.writerow([i, repr(pt.precision), repr(pt.recall), repr(pred.probability)])
