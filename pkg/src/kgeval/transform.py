"""Dataset construction: CVT binarization, subsets, splits, relation labels."""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from kgeval.graph import TEST, TRAIN, VALID, GraphError, KnowledgeGraph, SplitSpec, rebuild

DEFAULT_SEPARATOR = "-/"
REVERSE_MARK = "!"

BINARY, NARY, CONCATENATED = "binary", "nary", "concatenated"
CATEGORIES = (BINARY, NARY, CONCATENATED)


@dataclass(frozen=True)
class RelationMeta:
    relation: int
    name: str
    category: str
    domain: str


def reverse(name: str) -> str:
    """Flip the traversal marker on a relation name."""
    if name.startswith(REVERSE_MARK):
        return name[len(REVERSE_MARK):]
    return REVERSE_MARK + name


def concat_relation(first: str, second: str, separator: str = DEFAULT_SEPARATOR) -> str:
    # "…/source" + "-/" + "/location/…" -> "…/source-/location/…"
    if separator.endswith("/") and second.startswith("/"):
        second = second[1:]
    return first + separator + second


def binarize_cvt(g: KnowledgeGraph, separator: str = DEFAULT_SEPARATOR) -> KnowledgeGraph:
    """Replace every mediator node by pairwise concatenated relations.

    A mediator ``c`` with incident edges ``e_1..e_n`` produces one triple per
    unordered edge pair ``(i, j)``: ``(e_i, reverse(o_i) + sep + o_j, e_j)``,
    where ``o_k`` is edge ``k`` read from ``c`` outward (prefixed with ``!``
    when the stored triple points into ``c``) and ``i`` is the endpoint with
    the smaller entity id.  A derived triple inherits the later split of its
    two source edges.
    """
    if not g.mediators.any():
        raise GraphError("binarize_cvt: graph has no mediator entities")
    med = g.mediators
    h, r, t = g.triples[:, 0], g.triples[:, 1], g.triples[:, 2]
    chained = med[h] & med[t]
    if chained.any():
        i = int(np.flatnonzero(chained)[0])
        raise GraphError(
            "chained mediators unsupported: "
            + "\t".join(g.decode(g.triples[i]))
        )

    # (mediator, neighbor, outward relation name, split)
    incident: dict[int, list[tuple[int, str, int]]] = {}
    for idx in np.flatnonzero(med[h] | med[t]):
        hh, rr, tt = (int(x) for x in g.triples[idx])
        tag = int(g.splits[idx])
        if med[hh]:
            incident.setdefault(hh, []).append((tt, g.relations[rr], tag))
        else:
            incident.setdefault(tt, []).append((hh, reverse(g.relations[rr]), tag))

    names: list[tuple[str, str, str]] = []
    tags: list[int] = []
    for c in sorted(incident):
        edges = sorted(incident[c], key=lambda e: e[0])
        for i in range(len(edges)):
            for j in range(i + 1, len(edges)):
                (ei, oi, si), (ej, oj, sj) = edges[i], edges[j]
                names.append((g.entities[ei], concat_relation(reverse(oi), oj, separator), g.entities[ej]))
                tags.append(max(si, sj))

    keep = ~(med[h] | med[t])
    out_rows = [g.decode(row) for row in g.triples[keep]]
    out_tags = g.splits[keep].tolist()
    seen = set(out_rows)
    duplicates = 0
    for triple, tag in zip(names, tags):
        if triple in seen:
            duplicates += 1
            continue
        seen.add(triple)
        out_rows.append(triple)
        out_tags.append(tag)
    return _from_names(
        g,
        out_rows,
        out_tags,
        meta={**g.meta, "binarized_pairs": len(names), "binarize_duplicates": duplicates},
        drop_mediators=True,
    )


def mediator_degrees(g: KnowledgeGraph) -> dict[int, int]:
    """Number of incident edges per mediator id."""
    med = g.mediators
    h, t = g.triples[:, 0], g.triples[:, 2]
    deg = Counter(h[med[h]].tolist()) + Counter(t[med[t]].tolist())
    return {int(c): deg.get(int(c), 0) for c in np.flatnonzero(med)}


def _from_names(g, rows, tags, meta, drop_mediators=False) -> KnowledgeGraph:
    ent: dict[str, int] = {}
    rel: dict[str, int] = {}
    enc = [
        (ent.setdefault(a, len(ent)), rel.setdefault(b, len(rel)), ent.setdefault(c, len(ent)))
        for a, b, c in rows
    ]
    old = g.entity_index
    types = {}
    flags = np.zeros(len(ent), dtype=bool)
    for name, i in ent.items():
        j = old[name]
        if j in g.types:
            types[i] = g.types[j]
        flags[i] = False if drop_mediators else bool(g.mediators[j])
    return KnowledgeGraph(
        triples=np.array(enc, dtype=np.int64).reshape(-1, 3),
        entities=tuple(ent),
        relations=tuple(rel),
        splits=np.array(tags, dtype=np.int8),
        types=types,
        mediators=flags,
        meta=meta,
    )


def subset_size(fraction: float, n: int) -> int:
    # floor(f * n), guarded against binary representation error (0.1 * 30 = 3.0000000000000004)
    return math.floor(round(fraction * n, 9))


def sample_subset(g: KnowledgeGraph, fraction: float, seed: int) -> KnowledgeGraph:
    """Uniform sample of ``floor(fraction * N)`` triples without replacement.

    The sample keeps the original triple order, drops symbols that no longer
    occur and tags every triple train; re-split with :func:`split`.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = subset_size(fraction, len(g))
    if n < 1:
        raise ValueError(f"fraction {fraction} of {len(g)} triples selects nothing")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(g), size=n, replace=False))
    return rebuild(
        g,
        g.triples[idx],
        np.zeros(n, dtype=np.int8),
        meta={**g.meta, "subset_fraction": fraction, "subset_seed": seed, "subset_of": len(g)},
    )


def split(g: KnowledgeGraph, spec: SplitSpec) -> KnowledgeGraph:
    """Assign train/valid/test tags by a seeded shuffle, then repair
    transductive closure.

    Held-out triples whose entities or relation are missing from train move
    to train; valid/test are then topped up from train triples whose symbols
    all occur at least twice in train.  Achieved sizes land in ``meta``.
    """
    n = len(g)
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)
    n_valid = math.floor(round(spec.valid_frac * n, 9))
    n_test = math.floor(round(spec.test_frac * n, 9))
    tags = np.full(n, TRAIN, dtype=np.int8)
    tags[order[n - n_valid - n_test : n - n_test]] = VALID
    tags[order[n - n_test :]] = TEST

    ent_count = np.zeros(g.num_entities, dtype=np.int64)
    rel_count = np.zeros(g.num_relations, dtype=np.int64)
    trip = g.triples

    def add(i, sign):
        h, r, t = trip[i]
        ent_count[h] += sign
        if t != h:
            ent_count[t] += sign
        rel_count[r] += sign

    for i in np.flatnonzero(tags == TRAIN):
        add(i, 1)
    for i in order:
        if tags[i] == TRAIN:
            continue
        h, r, t = trip[i]
        if ent_count[h] == 0 or ent_count[t] == 0 or rel_count[r] == 0:
            tags[i] = TRAIN
            add(i, 1)

    for want, tag in ((n_valid, VALID), (n_test, TEST)):
        short = want - int((tags == tag).sum())
        if short <= 0:
            continue
        for i in order:
            if short == 0:
                break
            if tags[i] != TRAIN:
                continue
            h, r, t = trip[i]
            if ent_count[h] >= 2 and ent_count[t] >= 2 and rel_count[r] >= 2:
                add(i, -1)
                tags[i] = tag
                short -= 1

    held = int((tags != TRAIN).sum())
    if n_valid + n_test > 0 and held == 0:
        raise GraphError(
            f"graph of {n} triples is too small to hold out any triple under transductive closure"
        )
    achieved = {
        "train": float((tags == TRAIN).mean()) if n else 0.0,
        "valid": float((tags == VALID).mean()) if n else 0.0,
        "test": float((tags == TEST).mean()) if n else 0.0,
    }
    return KnowledgeGraph(
        triples=g.triples,
        entities=g.entities,
        relations=g.relations,
        splits=tags,
        types=g.types,
        mediators=g.mediators,
        meta={
            **g.meta,
            "split_seed": spec.seed,
            "split_requested": [spec.train_frac, spec.valid_frac, spec.test_frac],
            "split_achieved": achieved,
        },
    )


def relation_domain(name: str) -> str:
    """First ``/``-delimited component: ``/music/artist/genre`` -> ``music``."""
    name = name.lstrip(REVERSE_MARK)
    if not name.startswith("/"):
        return "unknown"
    head = name[1:].split("/", 1)[0]
    return head or "unknown"


def label_relations(g: KnowledgeGraph, separator: str = DEFAULT_SEPARATOR) -> list[RelationMeta]:
    """Category and domain for every relation of ``g``, in id order."""
    touches = np.zeros(g.num_relations, dtype=bool)
    if len(g):
        med = g.mediators[g.triples[:, 0]] | g.mediators[g.triples[:, 2]]
        touches[np.unique(g.triples[med, 1])] = True
    out = []
    for rid, name in enumerate(g.relations):
        if touches[rid]:
            cat = NARY
        elif separator and separator in name:
            cat = CONCATENATED
        else:
            cat = BINARY
        out.append(RelationMeta(rid, name, cat, relation_domain(name)))
    return out


def write_relation_meta(path, meta: list[RelationMeta]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in meta:
            fh.write(f"{m.name}\t{m.category}\t{m.domain}\n")


def read_relation_meta(path, g: KnowledgeGraph) -> list[RelationMeta]:
    """Read ``relation_meta.tsv``; rows for relations absent from ``g`` are ignored."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[1] not in CATEGORIES:
                raise GraphError(f"{path}:{lineno}: expected relation, category, domain")
            rid = g.relation_index.get(parts[0])
            if rid is not None:
                out.append(RelationMeta(rid, parts[0], parts[1], parts[2]))
    return sorted(out, key=lambda m: m.relation)


def load_relation_meta(directory, g: KnowledgeGraph, separator=DEFAULT_SEPARATOR) -> list[RelationMeta]:
    path = os.path.join(directory, "relation_meta.tsv")
    if os.path.exists(path):
        return read_relation_meta(path, g)
    return label_relations(g, separator)
