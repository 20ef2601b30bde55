"""Synthetic typed knowledge graphs for tests, demos and scale stand-ins.

Entities belong to type clusters.  Each relation links a domain type to a
range type and maps every head to a few preferred tails, so the graphs carry
learnable regularities rather than uniform noise.
"""

from __future__ import annotations

import numpy as np

from kgeval.graph import KnowledgeGraph, SplitSpec, from_labeled
from kgeval.transform import split as split_graph

# the twelve most frequent subject-matter domains of the large Freebase benchmarks
DOMAINS = (
    "music", "film", "people", "tv", "book", "measurement_unit",
    "location", "award", "biology", "organization", "education", "sports",
)

# full-size FB15k-237 (train + valid + test)
FB15K237_TRIPLES = 310_116
FB15K237_ENTITIES = 14_541
FB15K237_RELATIONS = 237


def random_graph(
    n_entities: int = 20,
    n_relations: int = 4,
    n_triples: int = 60,
    n_types: int = 3,
    seed: int = 0,
    n_mediators: int = 0,
    mediator_degree: tuple[int, int] = (2, 4),
    split: SplitSpec | None = None,
    fanout: int = 2,
) -> KnowledgeGraph:
    """A typed random graph; ``split=None`` tags everything train.

    Entity ``e`` is named ``e{e}`` and typed ``type{e % n_types}`` (every
    fifth entity also gets a second type).  Mediators ``cvt{i}`` connect to
    ``mediator_degree`` regular entities through ``/domain/cvt_x/role_k``
    edges, the first edge pointing into the mediator.
    """
    rng = np.random.default_rng(seed)
    names = [f"e{i}" for i in range(n_entities)]
    types = {n: {f"type{i % n_types}"} for i, n in enumerate(names)}
    for i in range(0, n_entities, 5):
        types[names[i]].add(f"type{(i + 1) % n_types}")
    by_type = [np.array([i for i in range(n_entities) if i % n_types == k]) for k in range(n_types)]
    by_type = [b if len(b) else np.arange(n_entities) for b in by_type]

    rels = []
    for r in range(n_relations):
        dom = DOMAINS[r % len(DOMAINS)]
        src, dst = int(rng.integers(n_types)), int(rng.integers(n_types))
        prefer = {
            int(h): rng.choice(by_type[dst], size=min(fanout, len(by_type[dst])), replace=False)
            for h in by_type[src]
        }
        rels.append((f"/{dom}/rel{r}/target", by_type[src], by_type[dst], prefer))

    triples: list[tuple[str, str, str]] = []
    seen = set()
    attempts = 0
    while len(triples) < n_triples and attempts < 50 * n_triples:
        attempts += 1
        name, src, dst, prefer = rels[int(rng.integers(n_relations))]
        h = int(rng.choice(src))
        t = int(rng.choice(prefer[h])) if rng.random() < 0.8 else int(rng.choice(dst))
        key = (names[h], name, names[t])
        if key not in seen:
            seen.add(key)
            triples.append(key)

    mediators = []
    for c in range(n_mediators):
        cname = f"cvt{c}"
        mediators.append(cname)
        types[cname] = {"cvt"}
        deg = int(rng.integers(mediator_degree[0], mediator_degree[1] + 1))
        dom = DOMAINS[c % len(DOMAINS)]
        ends = rng.choice(n_entities, size=min(deg, n_entities), replace=False)
        for k, e in enumerate(ends.tolist()):
            role = f"/{dom}/cvt{c % 3}/role{k}"
            if k == 0:
                triples.append((names[e], role, cname))
            else:
                triples.append((cname, role, names[e]))

    used = {x for h, _, t in triples for x in (h, t)}
    types = {e: ts for e, ts in types.items() if e in used}
    g = from_labeled([triples], types=types, mediators=mediators, check_closure=False, meta={"path": f"synthetic:{seed}"})
    if split is not None:
        g = split_graph(g, split)
    return g


def fb15k237_standin(scale: float = 0.01, seed: int = 0) -> KnowledgeGraph:
    """Random typed graph with FB15k-237's triple and entity counts scaled
    by ``scale``, split 90/5/5.

    Relation count scales with ``sqrt(scale)`` so that each relation keeps
    enough triples to be learnable at small scale.
    """
    n_triples = round(FB15K237_TRIPLES * scale)
    n_entities = round(FB15K237_ENTITIES * scale)
    n_relations = max(4, round(FB15K237_RELATIONS * scale**0.5))
    return random_graph(
        n_entities=n_entities,
        n_relations=n_relations,
        n_triples=n_triples,
        n_types=8,
        seed=seed,
        fanout=3,
        split=SplitSpec(0.9, 0.05, 0.05, seed),
    )
