"""Property prediction: rank the true relation of an ``(h, r)`` test pair
against every relation, scoring each candidate ``r'`` by its best (or mean)
triple ``(h, r', t')`` over all entities ``t'``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kgeval.graph import TRAIN, KnowledgeGraph
from kgeval.linkpred import MetricBundle, average_rank, bundle_from_ranks
from kgeval.models import ModelParams, score_tails

AGGREGATES = ("max", "mean")


@dataclass(frozen=True, order=True)
class PropertyTestCase:
    head: int
    relation: int


@dataclass(frozen=True)
class PropertyRank:
    case: PropertyTestCase
    rank: float


def build_property_testset(g: KnowledgeGraph) -> list[PropertyTestCase]:
    """Distinct test ``(h, r)`` pairs with no train triple ``(h, r, *)``,
    sorted by head then relation."""
    train = g.train
    seen = set(map(tuple, train[:, :2].tolist()))
    cases = {(h, r) for h, r, _ in g.test.tolist() if (h, r) not in seen}
    return [PropertyTestCase(h, r) for h, r in sorted(cases)]


def relation_scores(p: ModelParams, h: int, aggregate: str = "max") -> np.ndarray:
    """Score of every relation for head ``h``: reduction over tails of
    ``score(h, r', t')``."""
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}")
    rels = np.arange(p.num_relations)
    full = score_tails(p, np.full(len(rels), h), rels)
    return full.max(axis=1) if aggregate == "max" else full.mean(axis=1)


def rank_properties(
    p: ModelParams,
    g: KnowledgeGraph,
    cases: Sequence[PropertyTestCase],
    aggregate: str = "max",
    filter_known: bool = True,
) -> tuple[list[PropertyRank], MetricBundle]:
    """Average-tie rank of each case's relation among all relations.

    With ``filter_known`` every other relation ``r'`` for which a train
    triple ``(h, r', *)`` exists is dropped from the candidates.
    """
    if not cases:
        raise ValueError("no property test cases")
    known: dict[int, np.ndarray] = {}
    if filter_known:
        train = g.split(TRAIN)
        for h in {c.head for c in cases}:
            known[h] = np.unique(train[train[:, 0] == h, 1])
    cache: dict[int, np.ndarray] = {}
    ranks = []
    for case in cases:
        if case.head not in cache:
            cache[case.head] = relation_scores(p, case.head, aggregate)
        ranks.append(PropertyRank(case, average_rank(cache[case.head], case.relation, known.get(case.head))))
    return ranks, bundle_from_ranks([x.rank for x in ranks])


def write_cases(path, cases: Sequence[PropertyTestCase], g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in cases:
            fh.write(f"{g.entities[c.head]}\t{g.relations[c.relation]}\n")


def write_property_ranks(path, ranks: Sequence[PropertyRank], g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x in ranks:
            fh.write(f"{g.entities[x.case.head]}\t{g.relations[x.case.relation]}\t{x.rank:g}\n")
