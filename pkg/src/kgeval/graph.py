"""Dictionary-encoded knowledge graphs.

A :class:`KnowledgeGraph` holds every triple of a dataset (all splits) as an
``(N, 3)`` integer array of ``(head, relation, tail)`` ids, together with the
string vocabularies, a per-triple split tag, optional entity types and
mediator (CVT) flags.  Graphs are treated as immutable once built; the lookup
indexes are computed lazily and cached.
"""

from __future__ import annotations

import hashlib
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "valid", "test")
SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")
TYPES_FILE = "types.tsv"
MEDIATORS_FILE = "mediators.txt"


class GraphError(ValueError):
    """Malformed or inconsistent graph data."""


class ParseError(GraphError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.9
    valid_frac: float = 0.05
    test_frac: float = 0.05
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.valid_frac, self.test_frac)
        if any(f < 0 or f > 1 for f in fracs):
            raise ValueError(f"split fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    triples: np.ndarray
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    splits: np.ndarray
    types: Mapping[int, frozenset[str]] = field(default_factory=dict)
    mediators: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        splits = np.asarray(self.splits, dtype=np.int8).reshape(-1)
        if len(splits) != len(triples):
            raise GraphError("split tags must match the number of triples")
        mediators = self.mediators
        if mediators is None:
            mediators = np.zeros(len(self.entities), dtype=bool)
        mediators = np.asarray(mediators, dtype=bool)
        if len(mediators) != len(self.entities):
            raise GraphError("mediator flags must match the entity vocabulary")
        if len(triples):
            if triples.min() < 0:
                raise GraphError("negative id in triple array")
            if triples[:, [0, 2]].max() >= len(self.entities):
                raise GraphError("entity id out of vocabulary bounds")
            if triples[:, 1].max() >= len(self.relations):
                raise GraphError("relation id out of vocabulary bounds")
        if len(splits) and (splits.min() < TRAIN or splits.max() > TEST):
            raise GraphError("split tags must be 0 (train), 1 (valid) or 2 (test)")
        for arr in (triples, splits, mediators):
            arr.setflags(write=False)
        object.__setattr__(self, "triples", triples)
        object.__setattr__(self, "splits", splits)
        object.__setattr__(self, "mediators", mediators)
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(
            self, "types", {int(e): frozenset(ts) for e, ts in self.types.items() if ts}
        )

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def __len__(self) -> int:
        return len(self.triples)

    def __repr__(self) -> str:
        sizes = "/".join(str(int((self.splits == s).sum())) for s in range(3))
        return (
            f"KnowledgeGraph(triples={len(self)}, entities={self.num_entities}, "
            f"relations={self.num_relations}, train/valid/test={sizes})"
        )

    # vocabulary ------------------------------------------------------------

    @cached_property
    def entity_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.entities)}

    @cached_property
    def relation_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.relations)}

    def encode_entity(self, name: str) -> int:
        return self.entity_index[name]

    def encode_relation(self, name: str) -> int:
        return self.relation_index[name]

    def decode(self, triple) -> tuple[str, str, str]:
        h, r, t = (int(x) for x in triple)
        return self.entities[h], self.relations[r], self.entities[t]

    # splits ----------------------------------------------------------------

    def split(self, which: int | str) -> np.ndarray:
        """Triples tagged with one split, as an ``(n, 3)`` array."""
        if isinstance(which, str):
            which = SPLIT_NAMES.index(which)
        return self.triples[self.splits == which]

    @property
    def train(self) -> np.ndarray:
        return self.split(TRAIN)

    @property
    def valid(self) -> np.ndarray:
        return self.split(VALID)

    @property
    def test(self) -> np.ndarray:
        return self.split(TEST)

    def split_sizes(self) -> dict[str, int]:
        return {name: int((self.splits == i).sum()) for i, name in enumerate(SPLIT_NAMES)}

    # membership ------------------------------------------------------------

    def _key(self, h, r, t):
        # a single int64 per triple; collision-free while E*R*E < 2**63
        ne, nr = self.num_entities, self.num_relations
        return (np.asarray(h, dtype=np.int64) * nr + r) * ne + t

    @cached_property
    def _keys(self) -> np.ndarray:
        if not len(self.triples):
            return np.empty(0, dtype=np.int64)
        return np.sort(self._key(self.triples[:, 0], self.triples[:, 1], self.triples[:, 2]))

    def contains(self, h: int, r: int, t: int) -> bool:
        return bool(self.contains_many(np.array([[h, r, t]]))[0])

    def contains_many(self, triples: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`contains` over an ``(n, 3)`` array."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        keys = self._key(triples[:, 0], triples[:, 1], triples[:, 2])
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, max(len(self._keys) - 1, 0))
        if not len(self._keys):
            return np.zeros(len(keys), dtype=bool)
        return self._keys[pos] == keys

    @cached_property
    def tails_of(self) -> dict[tuple[int, int], np.ndarray]:
        """``(h, r) -> tails`` over all splits."""
        return _group(self.triples, (0, 1), 2)

    @cached_property
    def heads_of(self) -> dict[tuple[int, int], np.ndarray]:
        """``(r, t) -> heads`` over all splits."""
        return _group(self.triples, (1, 2), 0)

    # types -----------------------------------------------------------------

    def entity_types(self, e: int) -> frozenset[str]:
        return self.types.get(int(e), frozenset())

    # fingerprints ----------------------------------------------------------

    @cached_property
    def entity_hash(self) -> str:
        return vocab_hash(self.entities)

    @cached_property
    def relation_hash(self) -> str:
        return vocab_hash(self.relations)

    def fingerprint(self) -> dict:
        return {
            "path": self.meta.get("path"),
            "num_triples": len(self),
            "num_entities": self.num_entities,
            "num_relations": self.num_relations,
            "split_sizes": self.split_sizes(),
            "entity_vocab_hash": self.entity_hash,
            "relation_vocab_hash": self.relation_hash,
        }


def contains(g: KnowledgeGraph, h: int, r: int, t: int) -> bool:
    """True iff ``(h, r, t)`` occurs in any split of ``g``."""
    return g.contains(h, r, t)


def entity_types(g: KnowledgeGraph, e: int) -> frozenset[str]:
    return g.entity_types(e)


def vocab_hash(names: Sequence[str]) -> str:
    h = hashlib.sha256()
    for name in names:
        h.update(name.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]


def _group(triples: np.ndarray, key_cols, value_col) -> dict:
    out: dict = defaultdict(list)
    for row in triples.tolist():
        out[(row[key_cols[0]], row[key_cols[1]])].append(row[value_col])
    return {k: np.unique(np.array(v, dtype=np.int64)) for k, v in out.items()}


# construction ----------------------------------------------------------------


def from_labeled(
    split_triples: Sequence[Iterable[tuple[str, str, str]]],
    types: Mapping[str, Iterable[str]] | None = None,
    mediators: Iterable[str] = (),
    check_closure: bool = True,
    meta: dict | None = None,
) -> KnowledgeGraph:
    """Encode string triples given per split (train, valid, test order).

    Ids are assigned by first appearance.  Duplicates inside a split are
    dropped and counted; a triple repeated across splits is an error.
    """
    ent: dict[str, int] = {}
    rel: dict[str, int] = {}
    rows, tags = [], []
    seen: dict[tuple[str, str, str], int] = {}
    duplicates = 0
    crossed = []
    for tag, triples in enumerate(split_triples):
        for triple in triples:
            triple = tuple(triple)
            if triple in seen:
                if seen[triple] == tag:
                    duplicates += 1
                else:
                    crossed.append(triple)
                continue
            seen[triple] = tag
            h, r, t = triple
            rows.append(
                (ent.setdefault(h, len(ent)), rel.setdefault(r, len(rel)), ent.setdefault(t, len(ent)))
            )
            tags.append(tag)
    if crossed:
        listed = ", ".join("\t".join(c) for c in crossed[:5])
        raise GraphError(
            f"{len(crossed)} triple(s) appear in more than one split, e.g. {listed}"
        )

    type_map: dict[int, set[str]] = defaultdict(set)
    for name, ts in (types or {}).items():
        if name not in ent:
            logger.warning("types: unknown entity %r skipped", name)
            continue
        type_map[ent[name]].update(ts)

    flags = np.zeros(len(ent), dtype=bool)
    for name in mediators:
        if name not in ent:
            logger.warning("mediators: unknown entity %r skipped", name)
            continue
        flags[ent[name]] = True

    meta = dict(meta or {})
    meta["duplicate_count"] = duplicates
    g = KnowledgeGraph(
        triples=np.array(rows, dtype=np.int64).reshape(-1, 3),
        entities=tuple(ent),
        relations=tuple(rel),
        splits=np.array(tags, dtype=np.int8),
        types=type_map,
        mediators=flags,
        meta=meta,
    )
    if check_closure:
        missing = closure_violations(g)
        if missing:
            raise GraphError(
                "evaluation symbols absent from train: " + ", ".join(missing[:10])
                + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else "")
            )
    return g


def closure_violations(g: KnowledgeGraph) -> list[str]:
    """Names of valid/test entities and relations never seen in train."""
    train = g.train
    seen_e = np.zeros(g.num_entities, dtype=bool)
    seen_r = np.zeros(g.num_relations, dtype=bool)
    seen_e[train[:, 0]] = True
    seen_e[train[:, 2]] = True
    seen_r[train[:, 1]] = True
    held = g.triples[g.splits != TRAIN]
    bad_e = np.unique(np.concatenate([held[:, 0], held[:, 2]]))
    bad_e = bad_e[~seen_e[bad_e]]
    bad_r = np.unique(held[:, 1])
    bad_r = bad_r[~seen_r[bad_r]]
    return [f"entity {g.entities[e]!r}" for e in bad_e] + [
        f"relation {g.relations[r]!r}" for r in bad_r
    ]


def read_triples(path) -> tuple[list[tuple[str, str, str]], int]:
    """Parse a headerless ``head\\trelation\\ttail`` file.

    Returns the triples in file order with in-file duplicates removed, and
    the number of duplicates dropped.
    """
    out: list[tuple[str, str, str]] = []
    seen: set[tuple[str, str, str]] = set()
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            triple = (parts[0], parts[1], parts[2])
            if triple in seen:
                duplicates += 1
                continue
            seen.add(triple)
            out.append(triple)
    return out, duplicates


def read_types(path) -> dict[str, set[str]]:
    types: dict[str, set[str]] = defaultdict(set)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 2 tab-separated fields, got {len(parts)}")
            types[parts[0]].add(parts[1])
    return types


def read_names(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh if line.strip()]


def load_graph(triples_path, types_path=None, mediator_path=None) -> KnowledgeGraph:
    """Load a single triple file; every triple is tagged train."""
    triples, dups = read_triples(triples_path)
    g = from_labeled(
        [triples],
        types=read_types(types_path) if types_path else None,
        mediators=read_names(mediator_path) if mediator_path else (),
        meta={"path": str(triples_path)},
    )
    g.meta["duplicate_count"] += dups
    return g


def load_dataset(directory, check_closure: bool = True) -> KnowledgeGraph:
    """Load ``train.txt``/``valid.txt``/``test.txt`` plus optional
    ``types.tsv`` and ``mediators.txt`` from a directory."""
    parts, dups = [], 0
    for name in SPLIT_FILES:
        path = os.path.join(directory, name)
        if os.path.exists(path):
            triples, d = read_triples(path)
            dups += d
        elif name == "train.txt":
            raise FileNotFoundError(f"missing split file {path}")
        else:
            triples = []
        parts.append(triples)
    types_path = os.path.join(directory, TYPES_FILE)
    med_path = os.path.join(directory, MEDIATORS_FILE)
    g = from_labeled(
        parts,
        types=read_types(types_path) if os.path.exists(types_path) else None,
        mediators=read_names(med_path) if os.path.exists(med_path) else (),
        check_closure=check_closure,
        meta={"path": str(directory)},
    )
    g.meta["duplicate_count"] += dups
    return g


def write_triples(path, g: KnowledgeGraph, triples: np.ndarray | None = None) -> None:
    triples = g.triples if triples is None else triples
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in triples.tolist():
            fh.write(f"{g.entities[h]}\t{g.relations[r]}\t{g.entities[t]}\n")


def save_dataset(directory, g: KnowledgeGraph) -> None:
    """Write ``g`` in the layout read by :func:`load_dataset`."""
    os.makedirs(directory, exist_ok=True)
    for tag, name in enumerate(SPLIT_FILES):
        write_triples(os.path.join(directory, name), g, g.split(tag))
    if g.types:
        with open(os.path.join(directory, TYPES_FILE), "w", encoding="utf-8", newline="\n") as fh:
            for e in sorted(g.types):
                for ty in sorted(g.types[e]):
                    fh.write(f"{g.entities[e]}\t{ty}\n")
    if g.mediators.any():
        with open(os.path.join(directory, MEDIATORS_FILE), "w", encoding="utf-8", newline="\n") as fh:
            for e in np.flatnonzero(g.mediators):
                fh.write(g.entities[e] + "\n")


def rebuild(
    g: KnowledgeGraph,
    triples: np.ndarray,
    splits: np.ndarray,
    meta: dict | None = None,
) -> KnowledgeGraph:
    """New graph over a subset of ``g``'s ids with vocabularies compacted in
    first-appearance order; types and mediator flags are carried over."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ent_order = _first_appearance(triples[:, [0, 2]].ravel())
    rel_order = _first_appearance(triples[:, 1])
    ent_map = np.full(g.num_entities, -1, dtype=np.int64)
    ent_map[ent_order] = np.arange(len(ent_order))
    rel_map = np.full(g.num_relations, -1, dtype=np.int64)
    rel_map[rel_order] = np.arange(len(rel_order))
    new = np.stack([ent_map[triples[:, 0]], rel_map[triples[:, 1]], ent_map[triples[:, 2]]], axis=1)
    return KnowledgeGraph(
        triples=new.reshape(-1, 3),
        entities=tuple(g.entities[e] for e in ent_order),
        relations=tuple(g.relations[r] for r in rel_order),
        splits=splits,
        types={int(ent_map[e]): ts for e, ts in g.types.items() if ent_map[e] >= 0},
        mediators=g.mediators[ent_order],
        meta=dict(meta or {}),
    )


def _first_appearance(ids: np.ndarray) -> np.ndarray:
    _, first = np.unique(ids, return_index=True)
    return ids[np.sort(first)]
