"""Entity-pair ranking: per-relation AP@K and P@K over all (head, tail) pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from kgeval.graph import TEST, TRAIN, VALID, KnowledgeGraph
from kgeval.models import ModelParams, score_tails

DEFAULT_BUDGET = 10**8


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class PairRankResult:
    relation: int
    ap_at_k: float
    p_at_k: float
    num_test_pairs: int
    k: int


def expected_precision_stats(scores: np.ndarray, relevant: np.ndarray, k: int) -> tuple[float, float]:
    """AP@k numerator and hits@k, as expectations over uniformly random
    orderings of tied scores.

    Returns ``(sum_j P@j * relv[j] for j <= k, expected #relevant in top k)``.
    For a tie block of ``m`` items holding ``q`` relevant ones that covers
    positions ``a+1..a+m``, position ``j`` is relevant with probability
    ``q/m`` and two positions of the block are jointly relevant with
    probability ``q(q-1) / (m(m-1))``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevant = np.asarray(relevant, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    rel = relevant[order]
    n = len(s)
    k = min(k, n)
    ap_sum, before, pos = 0.0, 0.0, 0
    while pos < k:
        end = pos + 1
        while end < n and s[end] == s[pos]:
            end += 1
        m = end - pos
        q = float(rel[pos:end].sum())
        pq = q / m
        joint = q * (q - 1) / (m * (m - 1)) if m > 1 else 0.0
        for o in range(min(end, k) - pos):
            j = pos + o + 1  # 1-based position
            ap_sum += (pq * (1.0 + before) + o * joint) / j
        covered = min(end, k) - pos
        before += pq * covered
        pos = end
    return ap_sum, before


def _top_candidates(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of every item scoring at least the k-th largest score."""
    if len(scores) <= k:
        return np.arange(len(scores))
    kth = np.partition(scores, len(scores) - k)[len(scores) - k]
    return np.flatnonzero(scores >= kth)


def pair_rank(
    p: ModelParams,
    g: KnowledgeGraph,
    r: int,
    k: int = 100,
    candidates: tuple[np.ndarray, np.ndarray] | None = None,
    budget: int = DEFAULT_BUDGET,
    block: int = 256,
) -> PairRankResult:
    """Rank all ``(h, t)`` pairs for relation ``r``.

    Pairs already in train or valid are removed; a pair is relevant when
    ``(h, r, t)`` is a test triple.  ``AP@K = (1/NP) sum_k P@k * relv[k]``
    with ``NP = min(K, |T_r|)``; ``P@K`` counts test pairs among the top
    ``K``.  Ties are resolved by expectation over random tie order.
    ``candidates`` restricts heads and tails; without it ``|E|^2`` pair scores
    must fit the ``budget``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    test = g.test
    test = test[test[:, 1] == r]
    pairs_test = {(h, t) for h, _, t in test.tolist()}
    if not pairs_test:
        raise ValueError(f"relation {g.relations[r]!r} has no test triples")
    if candidates is None:
        if g.num_entities**2 > budget:
            raise BudgetExceeded(
                f"{g.num_entities}^2 pair scores exceed the budget of {budget}; "
                "pass candidate head/tail sets (e.g. type_candidates) to restrict"
            )
        heads = tails = np.arange(g.num_entities)
    else:
        heads, tails = (np.unique(np.asarray(c, dtype=np.int64)) for c in candidates)
        if len(heads) * len(tails) > budget:
            raise BudgetExceeded(f"{len(heads)}x{len(tails)} candidate pairs exceed the budget of {budget}")

    known = g.triples[(g.triples[:, 1] == r) & ((g.splits == TRAIN) | (g.splits == VALID))]
    tail_pos = {int(e): i for i, e in enumerate(tails)}
    blocked = {}
    for h, _, t in known.tolist():
        if t in tail_pos:
            blocked.setdefault(h, []).append(tail_pos[t])
    relevant_by_head = {}
    for h, t in pairs_test:
        if t in tail_pos:
            relevant_by_head.setdefault(h, []).append(tail_pos[t])

    # keep a running pool of the best >=k pair scores
    pool_scores = np.empty(0)
    pool_rel = np.empty(0, dtype=bool)
    for lo in range(0, len(heads), block):
        hb = heads[lo : lo + block]
        sc = score_tails(p, hb, np.full(len(hb), r), tails).astype(np.float64)
        rel = np.zeros(sc.shape, dtype=bool)
        keep = np.ones(sc.shape, dtype=bool)
        for i, h in enumerate(hb.tolist()):
            if h in blocked:
                keep[i, blocked[h]] = False
            if h in relevant_by_head:
                rel[i, relevant_by_head[h]] = True
        s = np.concatenate([pool_scores, sc[keep]])
        rv = np.concatenate([pool_rel, rel[keep]])
        top = _top_candidates(s, k)
        pool_scores, pool_rel = s[top], rv[top]

    ap_sum, hits = expected_precision_stats(pool_scores, pool_rel, k)
    n_test = len(pairs_test)
    return PairRankResult(
        relation=int(r),
        ap_at_k=ap_sum / min(k, n_test),
        p_at_k=hits / k,
        num_test_pairs=n_test,
        k=k,
    )


def type_candidates(g: KnowledgeGraph, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Entities sharing a type with some observed train head (tail) of ``r``.

    Falls back to the observed heads (tails) themselves when no type
    information covers them.
    """
    train = g.train
    train = train[train[:, 1] == r]
    out = []
    for col in (0, 2):
        seen = np.unique(train[:, col])
        seen_types = set().union(*(g.entity_types(e) for e in seen)) if len(seen) else set()
        if seen_types:
            match = [e for e, ts in g.types.items() if ts & seen_types]
            out.append(np.unique(np.concatenate([seen, np.array(match, dtype=np.int64)])))
        else:
            out.append(seen)
    return out[0], out[1]


def pair_rank_macro(
    p: ModelParams,
    g: KnowledgeGraph,
    k: int = 100,
    candidates: Mapping[int, tuple[np.ndarray, np.ndarray]] | None = None,
    budget: int = DEFAULT_BUDGET,
    relations: Sequence[int] | None = None,
) -> dict:
    """Mean AP@K and P@K over the relations of the test split.

    The unweighted per-relation sums are reported as means so that the
    values stay in ``[0, 1]``.
    """
    if relations is None:
        relations = np.unique(g.split(TEST)[:, 1]).tolist()
    if not relations:
        raise ValueError("test split is empty")
    results = [
        pair_rank(p, g, r, k, (candidates or {}).get(r), budget)
        for r in relations
    ]
    return {
        "map": float(np.mean([x.ap_at_k for x in results])),
        "p": float(np.mean([x.p_at_k for x in results])),
        "k": k,
        "per_relation": results,
    }


def write_pair_ranks(path, results: Sequence[PairRankResult], g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x in results:
            fh.write(f"{g.relations[x.relation]}\t{x.ap_at_k:.6f}\t{x.p_at_k:.6f}\t{x.num_test_pairs}\n")
