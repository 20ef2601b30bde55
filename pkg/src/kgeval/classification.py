"""Triple classification with model-generated hard negatives.

Negatives come from the generator model's own ranking: for each positive,
walk the candidates for the corrupted slot by descending score and take the
first entity that satisfies the suite's type predicate and whose corrupted
triple occurs nowhere in the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from kgeval.graph import TEST, VALID, GraphError, KnowledgeGraph
from kgeval.models import ModelParams, score_heads, score_tails, score_triples

KINDS = ("consistent_head", "inconsistent_head", "consistent_tail", "inconsistent_tail")


@dataclass
class NegativeSuite:
    kind: str
    split: str
    positives: np.ndarray
    negatives: np.ndarray
    source: np.ndarray  # row of ``positives`` each negative was derived from
    generator: str = ""

    @property
    def coverage(self) -> float:
        return len(self.negatives) / len(self.positives) if len(self.positives) else 0.0

    @property
    def pairs(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [
            (tuple(self.positives[i].tolist()), tuple(neg.tolist()))
            for i, neg in zip(self.source, self.negatives)
        ]

    @property
    def slot(self) -> str:
        return self.kind.rsplit("_", 1)[1]


@dataclass
class ThresholdTable:
    thresholds: dict[int, float] = field(default_factory=dict)
    default_threshold: float = 0.0

    def __getitem__(self, relation: int) -> float:
        return self.thresholds.get(int(relation), self.default_threshold)

    def lookup(self, relations: np.ndarray) -> np.ndarray:
        return np.array([self[r] for r in np.asarray(relations).tolist()], dtype=np.float64)


def _parse_kind(kind: str) -> tuple[bool, str]:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    consistent, slot = kind.split("_")
    return consistent == "consistent", slot


def type_incidence(g: KnowledgeGraph) -> np.ndarray:
    """``|E| x |types|`` 0/1 matrix."""
    names = sorted(set().union(*g.types.values())) if g.types else []
    col = {n: i for i, n in enumerate(names)}
    m = np.zeros((g.num_entities, len(names)), dtype=np.float32)
    for e, ts in g.types.items():
        m[e, [col[t] for t in ts]] = 1.0
    return m


def generate_negatives(
    p: ModelParams,
    g: KnowledgeGraph,
    kind: str,
    split: int | str = TEST,
    generator: str = "",
    chunk: int = 256,
) -> NegativeSuite:
    """One negative per positive of ``split`` where a qualifying candidate exists.

    Consistent kinds need the replacement to share at least one type with
    the original entity; inconsistent kinds need disjoint, non-empty type
    sets.  Positives whose entity carries no type are skipped.  Candidates
    with equal scores are visited in entity-id order.
    """
    consistent, slot = _parse_kind(kind)
    if not g.types:
        raise GraphError("triple classification needs entity type information")
    split_name = split if isinstance(split, str) else ("train", "valid", "test")[split]
    positives = g.split(split)
    inc = type_incidence(g)
    typed = inc.any(axis=1)
    negs, source = [], []
    for lo in range(0, len(positives), chunk):
        block = positives[lo : lo + chunk]
        if slot == "tail":
            scores = score_tails(p, block[:, 0], block[:, 1])
        else:
            scores = score_heads(p, block[:, 1], block[:, 2])
        for i, (h, r, t) in enumerate(block.tolist()):
            orig = t if slot == "tail" else h
            if not typed[orig]:
                continue
            shares = (inc @ inc[orig]) > 0
            ok = typed & (shares if consistent else ~shares)
            ok[orig] = False
            known = g.tails_of.get((h, r)) if slot == "tail" else g.heads_of.get((r, t))
            if known is not None:
                ok[known] = False
            if not ok.any():
                continue
            order = np.argsort(-scores[i], kind="stable")
            e = int(order[ok[order]][0])
            negs.append((h, r, e) if slot == "tail" else (e, r, t))
            source.append(lo + i)
    return NegativeSuite(
        kind=kind,
        split=split_name,
        positives=positives,
        negatives=np.array(negs, dtype=np.int64).reshape(-1, 3),
        source=np.array(source, dtype=np.int64),
        generator=generator or p.family,
    )


def random_negatives(g: KnowledgeGraph, slot: str, seed: int, split: int | str = TEST) -> NegativeSuite:
    """Baseline: uniform corruption of one slot, rejecting known triples."""
    if slot not in ("head", "tail"):
        raise ValueError("slot must be 'head' or 'tail'")
    rng = np.random.default_rng(seed)
    positives = g.split(split)
    negs, source = [], []
    for i, (h, r, t) in enumerate(positives.tolist()):
        for _ in range(100):
            e = int(rng.integers(g.num_entities))
            cand = (h, r, e) if slot == "tail" else (e, r, t)
            if not g.contains(*cand):
                negs.append(cand)
                source.append(i)
                break
    split_name = split if isinstance(split, str) else ("train", "valid", "test")[split]
    return NegativeSuite(
        kind=f"random_{slot}",
        split=split_name,
        positives=positives,
        negatives=np.array(negs, dtype=np.int64).reshape(-1, 3),
        source=np.array(source, dtype=np.int64),
        generator="uniform",
    )


# thresholds ------------------------------------------------------------------------


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints of adjacent distinct scores, bracketed by one point below
    the minimum and one above the maximum (so "all positive" and "all
    negative" are reachable)."""
    v = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (v[:-1] + v[1:]) / 2.0
    return np.concatenate([[v[0] - 1.0], mids, [v[-1] + 1.0]])


def best_threshold(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Accuracy-maximizing threshold (predict positive iff ``score > c``);
    ties go to the lowest candidate.  Returns ``(threshold, accuracy)``."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if not len(scores):
        raise ValueError("no examples")
    cand = candidate_thresholds(scores)
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    true_pos = len(pos) - np.searchsorted(pos, cand, side="right")
    true_neg = np.searchsorted(neg, cand, side="right")
    acc = (true_pos + true_neg) / len(scores)
    best = int(np.argmax(acc))
    return float(cand[best]), float(acc[best])


def learn_thresholds(p: ModelParams, valid_pos: np.ndarray, valid_neg: np.ndarray) -> ThresholdTable:
    valid_pos = np.asarray(valid_pos, dtype=np.int64).reshape(-1, 3)
    valid_neg = np.asarray(valid_neg, dtype=np.int64).reshape(-1, 3)
    if not len(valid_pos) or not len(valid_neg):
        raise ValueError("threshold learning needs at least one positive and one negative example")
    triples = np.concatenate([valid_pos, valid_neg])
    labels = np.concatenate([np.ones(len(valid_pos), bool), np.zeros(len(valid_neg), bool)])
    return thresholds_from_scores(score_triples(p, triples), triples[:, 1], labels)


def thresholds_from_scores(scores, relations, labels) -> ThresholdTable:
    scores = np.asarray(scores, dtype=np.float64)
    relations = np.asarray(relations)
    labels = np.asarray(labels, dtype=bool)
    default, _ = best_threshold(scores, labels)
    table = ThresholdTable(default_threshold=default)
    for r in np.unique(relations).tolist():
        m = relations == r
        table.thresholds[int(r)], _ = best_threshold(scores[m], labels[m])
    return table


def classification_metrics(pos_pred: np.ndarray, neg_pred: np.ndarray) -> dict[str, float]:
    """Precision, recall, accuracy and F1 with positives as the target class."""
    tp = float(np.count_nonzero(pos_pred))
    fn = float(len(pos_pred) - tp)
    fp = float(np.count_nonzero(neg_pred))
    tn = float(len(neg_pred) - fp)
    total = tp + fn + fp + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / total if total else 0.0,
        "f1": f1,
        "precision": precision,
        "recall": recall,
    }


def classify(p: ModelParams, thresholds: ThresholdTable, suite: NegativeSuite) -> dict[str, float]:
    """Positive iff ``score > threshold(relation)``; equality is negative."""
    if not len(suite.positives):
        raise ValueError("empty suite")
    ps = score_triples(p, suite.positives)
    pos_pred = ps > thresholds.lookup(suite.positives[:, 1])
    if len(suite.negatives):
        ns = score_triples(p, suite.negatives)
        neg_pred = ns > thresholds.lookup(suite.negatives[:, 1])
    else:
        neg_pred = np.zeros(0, dtype=bool)
    return classification_metrics(pos_pred, neg_pred)


def run_suite(p: ModelParams, g: KnowledgeGraph, kind: str, generator: ModelParams | None = None) -> dict:
    """Generate valid and test suites of one kind, learn thresholds on the
    valid suite and classify the test suite."""
    gen = generator or p
    valid = generate_negatives(gen, g, kind, VALID)
    test = generate_negatives(gen, g, kind, TEST)
    table = learn_thresholds(p, valid.positives, valid.negatives)
    metrics = classify(p, table, test)
    return {
        "kind": kind,
        "metrics": metrics,
        "coverage": {"valid": valid.coverage, "test": test.coverage},
        "num_thresholds": len(table.thresholds),
        "default_threshold": table.default_threshold,
        "generator": gen.family,
        "suites": (valid, test),
        "thresholds": table,
    }


def directional_gap(results: dict[str, dict]) -> dict[str, float]:
    """``accuracy(inconsistent) - accuracy(consistent)`` per corrupted slot;
    positive values match the expectation that type-violating negatives are
    easier.  Reported, never enforced."""
    out = {}
    for slot in ("head", "tail"):
        a, b = results.get(f"inconsistent_{slot}"), results.get(f"consistent_{slot}")
        if a and b:
            out[slot] = a["metrics"]["accuracy"] - b["metrics"]["accuracy"]
    return out


def write_suite(path, suite: NegativeSuite, g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pos, neg in suite.pairs:
            a = "\t".join(g.decode(pos))
            b = "\t".join(g.decode(neg))
            fh.write(f"{suite.kind}\t{a}\t{b}\t{suite.slot}\n")


def write_thresholds(path, table: ThresholdTable, g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in sorted(table.thresholds):
            fh.write(f"{g.relations[r]}\t{table.thresholds[r]:.6f}\n")
        fh.write(f"*\t{table.default_threshold:.6f}\n")

