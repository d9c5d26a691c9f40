"""One-to-one maximum matching of gold vs predicted records.

Edges connect gold/predicted pairs whose record similarity reaches the
threshold. The matching maximizes cardinality first, total similarity
second, and resolves remaining ties toward the lexicographically
smallest (gold_index, pred_index) pairs so reports are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .records import Record
from .similarity import SimilarityWeights, record_similarity

_EPS = 1e-9


@dataclass(frozen=True)
class MatchGraph:
    gold_count: int
    pred_count: int
    edges: tuple[tuple[int, int, float], ...]
    threshold: float

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold out of (0,1]: {self.threshold}")
        seen: set[tuple[int, int]] = set()
        for g, p, sim in self.edges:
            if not (0 <= g < self.gold_count and 0 <= p < self.pred_count):
                raise ValueError(f"edge index out of range: ({g},{p})")
            if (g, p) in seen:
                raise ValueError(f"duplicate edge ({g},{p})")
            seen.add((g, p))
            if sim < self.threshold - _EPS or sim > 1.0 + _EPS:
                raise ValueError(f"edge similarity {sim} below threshold or above 1")


@dataclass(frozen=True)
class MatchReport:
    matching: tuple[tuple[int, int], ...]
    gold_count: int
    pred_count: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    matched_similarity: float = 0.0

    def to_dict(self) -> dict:
        return {
            "matching": [list(pair) for pair in self.matching],
            "gold_count": self.gold_count,
            "pred_count": self.pred_count,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "matched_similarity": self.matched_similarity,
        }


def build_match_graph(
    gold: list[Record],
    pred: list[Record],
    threshold: float = 0.65,
    weights: SimilarityWeights | None = None,
) -> MatchGraph:
    """All-pairs similarity filter: keep exactly the pairs scoring at or
    above the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold out of (0,1]: {threshold}")
    edges = []
    for gi, g in enumerate(gold):
        for pi, p in enumerate(pred):
            sim = record_similarity(g, p, weights)
            if sim >= threshold:
                edges.append((gi, pi, sim))
    return MatchGraph(
        gold_count=len(gold),
        pred_count=len(pred),
        edges=tuple(edges),
        threshold=threshold,
    )


def _profit_matrix(graph: MatchGraph) -> tuple[np.ndarray, float]:
    """Profit matrix where each edge is worth BIG + similarity, so
    cardinality dominates total similarity."""
    big = float(max(graph.gold_count, graph.pred_count, 1) + 1)
    profit = np.zeros((graph.gold_count, graph.pred_count))
    for g, p, sim in graph.edges:
        profit[g, p] = big + sim
    return profit, big


def _best_value(profit: np.ndarray) -> float:
    if profit.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(profit, maximize=True)
    return float(profit[rows, cols].sum())


def max_matching(graph: MatchGraph) -> MatchReport:
    """Maximum-cardinality one-to-one matching over threshold edges,
    maximizing total similarity among maximum-cardinality matchings."""
    profit, _big = _profit_matrix(graph)
    target = _best_value(profit)

    # Fix edges one at a time in lexicographic order, keeping only those
    # whose forced inclusion still allows an optimal completion.
    chosen: list[tuple[int, int, float]] = []
    used_g: set[int] = set()
    used_p: set[int] = set()
    fixed_value = 0.0
    for g, p, sim in sorted(graph.edges):
        if g in used_g or p in used_p:
            continue
        rows = [i for i in range(graph.gold_count) if i not in used_g and i != g]
        cols = [j for j in range(graph.pred_count) if j not in used_p and j != p]
        remainder = profit[np.ix_(rows, cols)] if rows and cols else np.zeros((0, 0))
        candidate = fixed_value + profit[g, p] + _best_value(remainder)
        if candidate >= target - _EPS:
            chosen.append((g, p, sim))
            used_g.add(g)
            used_p.add(p)
            fixed_value += profit[g, p]

    matching = tuple((g, p) for g, p, _ in chosen)
    tp = len(matching)
    fp = graph.pred_count - tp
    fn = graph.gold_count - tp
    precision = tp / graph.pred_count if graph.pred_count else 0.0
    recall = tp / graph.gold_count if graph.gold_count else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return MatchReport(
        matching=matching,
        gold_count=graph.gold_count,
        pred_count=graph.pred_count,
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        matched_similarity=sum(sim for _, _, sim in chosen),
    )


def evaluate(
    gold: list[Record],
    pred: list[Record],
    threshold: float = 0.65,
    weights: SimilarityWeights | None = None,
) -> MatchReport:
    """Convenience wrapper: build the threshold graph and match it."""
    return max_matching(build_match_graph(gold, pred, threshold, weights))
