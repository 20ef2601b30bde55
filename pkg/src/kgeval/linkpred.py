"""Link prediction: raw and filtered ranks, and their aggregations."""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from kgeval.graph import TEST, KnowledgeGraph
from kgeval.models import ModelParams, score_heads, score_tails
from kgeval.training import max_workers
from kgeval.transform import CATEGORIES, RelationMeta

HITS_AT = (1, 3, 10)
MACRO_KEY = "macro_average"


@dataclass(frozen=True)
class RankRecord:
    triple: tuple[int, int, int]
    rank_head_raw: float
    rank_head_filtered: float
    rank_tail_raw: float
    rank_tail_filtered: float

    @property
    def relation(self) -> int:
        return self.triple[1]


@dataclass
class MetricBundle:
    mrr: float
    mr: float
    hits: dict[int, float] = field(default_factory=dict)
    count: int = 0

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "hits": {f"@{k}": v for k, v in sorted(self.hits.items())},
            "mr": self.mr,
            "mrr": self.mrr,
        }

    def check(self, tol: float = 1e-12) -> None:
        ks = sorted(self.hits)
        for a, b in zip(ks, ks[1:]):
            assert self.hits[a] <= self.hits[b] + tol, "hits@k must be non-decreasing in k"
        if 1 in self.hits:
            assert self.hits[1] <= self.mrr + tol, "hits@1 must not exceed mrr"
        assert self.mrr <= 1 + tol and self.mr >= 1 - tol


def bundle_from_ranks(ranks: Iterable[float], ks: Sequence[int] = HITS_AT) -> MetricBundle:
    ranks = np.asarray(list(ranks) if not isinstance(ranks, np.ndarray) else ranks, dtype=np.float64)
    if not len(ranks):
        raise ValueError("cannot aggregate an empty rank list")
    return MetricBundle(
        mrr=float(np.mean(1.0 / ranks)),
        mr=float(np.mean(ranks)),
        hits={k: float(np.mean(ranks <= k)) for k in ks},
        count=len(ranks),
    )


def mean_bundle(bundles: Sequence[MetricBundle]) -> MetricBundle:
    """Unweighted mean of bundles (macro-averaging)."""
    if not bundles:
        raise ValueError("cannot average zero bundles")
    ks = sorted(set.intersection(*(set(b.hits) for b in bundles)))
    return MetricBundle(
        mrr=float(np.mean([b.mrr for b in bundles])),
        mr=float(np.mean([b.mr for b in bundles])),
        hits={k: float(np.mean([b.hits[k] for b in bundles])) for k in ks},
        count=sum(b.count for b in bundles),
    )


def average_rank(scores: np.ndarray, true_idx: int, exclude: np.ndarray | None = None) -> float:
    """``1 + #strictly better + #ties among the others / 2``; ``exclude``
    lists candidate ids removed from the ranking (the true id is never removed)."""
    s = scores[true_idx]
    better = np.count_nonzero(scores > s)
    equal = np.count_nonzero(scores == s) - 1
    if exclude is not None and len(exclude):
        exclude = exclude[exclude != true_idx]
        ex = scores[exclude]
        better -= np.count_nonzero(ex > s)
        equal -= np.count_nonzero(ex == s)
    return 1.0 + better + equal / 2.0


# ranking ----------------------------------------------------------------------------


def _translated_index(g: KnowledgeGraph, filter_graph: KnowledgeGraph):
    """``(h, r) -> tails`` and ``(r, t) -> heads`` of ``filter_graph`` in ``g``'s ids."""
    if filter_graph is g:
        return g.tails_of, g.heads_of
    ent = np.array([g.entity_index.get(n, -1) for n in filter_graph.entities], dtype=np.int64)
    rel = np.array([g.relation_index.get(n, -1) for n in filter_graph.relations], dtype=np.int64)
    ft = filter_graph.triples
    mapped = np.stack([ent[ft[:, 0]], rel[ft[:, 1]], ent[ft[:, 2]]], axis=1) if len(ft) else ft
    mapped = mapped[(mapped >= 0).all(axis=1)]
    tails, heads = defaultdict(list), defaultdict(list)
    for h, r, t in mapped.tolist():
        tails[(h, r)].append(t)
        heads[(r, t)].append(h)
    return (
        {k: np.unique(np.array(v, dtype=np.int64)) for k, v in tails.items()},
        {k: np.unique(np.array(v, dtype=np.int64)) for k, v in heads.items()},
    )


def _check_subset(g: KnowledgeGraph, filter_graph: KnowledgeGraph) -> None:
    if filter_graph is g or not len(g):
        return
    fe, fr = filter_graph.entity_index, filter_graph.relation_index
    rows = []
    for h, r, t in g.triples.tolist():
        ids = (fe.get(g.entities[h], -1), fr.get(g.relations[r], -1), fe.get(g.entities[t], -1))
        if min(ids) < 0:
            raise ValueError(f"triple {g.decode((h, r, t))} missing from the filter graph")
        rows.append(ids)
    present = filter_graph.contains_many(np.array(rows))
    if not present.all():
        i = int(np.flatnonzero(~present)[0])
        raise ValueError(f"triple {g.decode(g.triples[i])} missing from the filter graph")


def _check_embedded(p: ModelParams, g: KnowledgeGraph, triples: np.ndarray) -> None:
    if not len(triples):
        return
    ents = np.concatenate([triples[:, 0], triples[:, 2]])
    bad = ents[ents >= p.num_entities]
    if len(bad):
        raise ValueError(f"entity {g.entities[int(bad[0])]!r} has no embedding in the model")
    bad = triples[:, 1][triples[:, 1] >= p.num_relations]
    if len(bad):
        raise ValueError(f"relation {g.relations[int(bad[0])]!r} has no embedding in the model")


def rank_all(
    p: ModelParams,
    g: KnowledgeGraph,
    filter_graph: KnowledgeGraph | None = None,
    split: int | str = TEST,
    workers: int | None = None,
    chunk: int = 256,
) -> list[RankRecord]:
    """Raw and filtered ranks for every triple of one split of ``g``.

    Candidates are all entities of ``g``.  The filtered rank drops candidates
    forming a triple of ``filter_graph`` (default ``g`` itself, all splits);
    passing a superset of ``g`` gives the closed-world comparison.
    """
    filter_graph = g if filter_graph is None else filter_graph
    _check_subset(g, filter_graph)
    triples = g.split(split)
    _check_embedded(p, g, triples)
    tails_of, heads_of = _translated_index(g, filter_graph)
    empty = np.empty(0, dtype=np.int64)

    def work(lo):
        block = triples[lo : lo + chunk]
        ts = score_tails(p, block[:, 0], block[:, 1])
        hs = score_heads(p, block[:, 1], block[:, 2])
        out = []
        for i, (h, r, t) in enumerate(block.tolist()):
            out.append(
                RankRecord(
                    (h, r, t),
                    average_rank(hs[i], h),
                    average_rank(hs[i], h, heads_of.get((r, t), empty)),
                    average_rank(ts[i], t),
                    average_rank(ts[i], t, tails_of.get((h, r), empty)),
                )
            )
        return out

    starts = range(0, len(triples), chunk)
    n = min(workers or max_workers(), max(1, len(starts)))
    if n <= 1:
        parts = [work(lo) for lo in starts]
    else:
        with ThreadPoolExecutor(n) as pool:
            parts = list(pool.map(work, starts))
    return [rec for part in parts for rec in part]


# aggregation -------------------------------------------------------------------------


def _ranks(records, filtered=True, side="both") -> np.ndarray:
    if filtered:
        head = [r.rank_head_filtered for r in records]
        tail = [r.rank_tail_filtered for r in records]
    else:
        head = [r.rank_head_raw for r in records]
        tail = [r.rank_tail_raw for r in records]
    if side == "left":
        return np.asarray(head)
    if side == "right":
        return np.asarray(tail)
    return np.asarray(head + tail)


def micro_metrics(records: Sequence[RankRecord], filtered: bool = True) -> MetricBundle:
    """Pooled over both directions: ``2|T|`` rank terms."""
    if not records:
        raise ValueError("micro_metrics needs at least one record")
    return bundle_from_ranks(_ranks(records, filtered))


def group_by_relation(records: Sequence[RankRecord]) -> dict[int, list[RankRecord]]:
    groups: dict[int, list[RankRecord]] = defaultdict(list)
    for rec in records:
        groups[rec.relation].append(rec)
    return dict(sorted(groups.items()))


def per_relation(records: Sequence[RankRecord], filtered: bool = True, side: str = "both") -> dict[int, MetricBundle]:
    return {
        rel: bundle_from_ranks(_ranks(recs, filtered, side))
        for rel, recs in group_by_relation(records).items()
    }


def macro_by_relation(records: Sequence[RankRecord], filtered: bool = True, side: str = "both") -> MetricBundle:
    """Unweighted mean of per-relation bundles over the relations in ``records``."""
    if not records:
        raise ValueError("macro_by_relation needs at least one record")
    return mean_bundle(list(per_relation(records, filtered, side).values()))


def _meta_lookup(records, meta: Sequence[RelationMeta]) -> dict[int, RelationMeta]:
    lookup = {m.relation: m for m in meta}
    missing = sorted({rec.relation for rec in records} - set(lookup))
    if missing:
        raise ValueError(f"no relation metadata for relation id(s) {missing[:10]}")
    return lookup


def macro_by_domain(
    records: Sequence[RankRecord], meta: Sequence[RelationMeta], filtered: bool = True
) -> dict[str, MetricBundle]:
    """Micro bundle per domain, plus their unweighted mean under ``MACRO_KEY``."""
    if not records:
        raise ValueError("macro_by_domain needs at least one record")
    lookup = _meta_lookup(records, meta)
    groups: dict[str, list[RankRecord]] = defaultdict(list)
    for rec in records:
        groups[lookup[rec.relation].domain].append(rec)
    out = {dom: micro_metrics(recs, filtered) for dom, recs in sorted(groups.items())}
    out[MACRO_KEY] = mean_bundle(list(out.values()))
    return out


def direction_split(
    records: Sequence[RankRecord], filtered: bool = True, macro: bool = False
) -> dict[str, MetricBundle]:
    """``left`` scores head prediction ``(?, r, t)``, ``right`` tail prediction."""
    if not records:
        raise ValueError("direction_split needs at least one record")
    if macro:
        return {side: macro_by_relation(records, filtered, side) for side in ("left", "right")}
    return {side: bundle_from_ranks(_ranks(records, filtered, side)) for side in ("left", "right")}


def category_split(
    records: Sequence[RankRecord], meta: Sequence[RelationMeta], filtered: bool = True
) -> dict[str, MetricBundle]:
    """Micro bundles per relation category present, plus ``all``."""
    if not records:
        raise ValueError("category_split needs at least one record")
    lookup = _meta_lookup(records, meta)
    groups: dict[str, list[RankRecord]] = defaultdict(list)
    for rec in records:
        groups[lookup[rec.relation].category].append(rec)
    out = {cat: micro_metrics(groups[cat], filtered) for cat in CATEGORIES if cat in groups}
    out["all"] = micro_metrics(records, filtered)
    return out


def pct_improvement(subset_value: float, full_value: float) -> float:
    """Relative change in percent, ``(full - subset) / subset * 100``."""
    if subset_value == 0:
        return float("inf") if full_value > 0 else 0.0
    return (full_value - subset_value) / subset_value * 100.0


def closed_world(p: ModelParams, g: KnowledgeGraph, full: KnowledgeGraph, **kwargs) -> dict:
    """Filtered metrics of ``g``'s test split with ``g`` vs ``full`` as ground truth."""
    sub = micro_metrics(rank_all(p, g, g, **kwargs))
    wide = micro_metrics(rank_all(p, g, full, **kwargs))
    return {
        "subset_bundle": sub,
        "full_bundle": wide,
        "pct_improvement": pct_improvement(sub.mrr, wide.mrr),
    }


def write_ranks(path, records: Sequence[RankRecord], g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            h, r, t = g.decode(rec.triple)
            fh.write(
                f"{h}\t{r}\t{t}\t{rec.rank_head_raw:g}\t{rec.rank_head_filtered:g}"
                f"\t{rec.rank_tail_raw:g}\t{rec.rank_tail_filtered:g}\n"
            )

