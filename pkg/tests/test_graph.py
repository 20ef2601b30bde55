import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgeval.graph import (
    TEST,
    TRAIN,
    VALID,
    GraphError,
    ParseError,
    SplitSpec,
    closure_violations,
    contains,
    entity_types,
    from_labeled,
    load_dataset,
    load_graph,
    save_dataset,
    vocab_hash,
)
from kgeval.synthetic import random_graph


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


class TestLoadGraph:
    def test_duplicate_line_is_counted(self, tmp_path):
        f = _write(tmp_path / "t.txt", ["a\tr\tb", "b\tr\ta", "a\tr\tb"])
        g = load_graph(f)
        assert len(g) == 2
        assert g.num_entities == 2 and g.num_relations == 1
        assert g.meta["duplicate_count"] == 1

    def test_empty_file(self, tmp_path):
        f = _write(tmp_path / "t.txt", [])
        g = load_graph(f)
        assert len(g) == 0
        assert g.entities == () and g.relations == ()

    def test_first_appearance_ids(self, tmp_path):
        f = _write(tmp_path / "t.txt", ["z\tq\ty", "x\tp\tz"])
        g = load_graph(f)
        assert g.entities == ("z", "y", "x")
        assert g.relations == ("q", "p")

    def test_malformed_line_reports_line_number(self, tmp_path):
        f = _write(tmp_path / "t.txt", ["a\tr\tb", "a\tr", "c\tr\td"])
        with pytest.raises(ParseError) as err:
            load_graph(f)
        assert err.value.lineno == 2
        assert ":2" in str(err.value)

    def test_types_and_unknown_entity(self, tmp_path, caplog):
        f = _write(tmp_path / "t.txt", ["a\tr\tb"])
        ty = _write(tmp_path / "types.tsv", ["a\tperson", "a\tauthor", "ghost\tperson"])
        g = load_graph(f, ty)
        assert entity_types(g, 0) == {"person", "author"}
        assert entity_types(g, 1) == frozenset()
        assert "ghost" in caplog.text

    def test_mediator_flags(self, tmp_path):
        f = _write(tmp_path / "t.txt", ["a\tr\tm", "m\ts\tb"])
        med = _write(tmp_path / "m.txt", ["m"])
        g = load_graph(f, mediator_path=med)
        assert g.mediators.tolist() == [False, True, False]


class TestContains:
    def test_examples(self, tiny_graph):
        g = tiny_graph
        enc = lambda h, r, t: (g.encode_entity(h), g.encode_relation(r), g.encode_entity(t))  # noqa: E731
        assert contains(g, *enc("a", "likes", "b"))
        assert not contains(g, *enc("b", "likes", "a"))
        assert contains(g, *enc("a", "likes", "c"))  # test split only
        assert contains(g, *enc("b", "knows", "f"))  # valid split only

    @pytest.mark.parametrize("seed", range(3))
    def test_agrees_with_linear_scan(self, seed):
        g = random_graph(n_entities=150, n_relations=6, n_triples=10_000, seed=seed, fanout=60)
        rows = [tuple(x) for x in g.triples.tolist()]
        rng = np.random.default_rng(seed)
        probes = np.stack(
            [rng.integers(g.num_entities, size=400), rng.integers(g.num_relations, size=400),
             rng.integers(g.num_entities, size=400)], axis=1)
        probes = np.concatenate([probes, g.triples[rng.integers(len(g), size=200)]])
        for h, r, t in probes.tolist():
            assert g.contains(h, r, t) == ((h, r, t) in rows)  # list membership is a linear scan
        batch = g.contains_many(probes)
        assert batch.tolist() == [g.contains(*x) for x in probes.tolist()]

    def test_linear_scan_small(self, tiny_graph):
        g = tiny_graph
        rows = g.triples.tolist()
        for h in range(g.num_entities):
            for r in range(g.num_relations):
                for t in range(g.num_entities):
                    expect = False
                    for row in rows:
                        if row == [h, r, t]:
                            expect = True
                    assert g.contains(h, r, t) is expect


class TestSplitsAndClosure:
    def test_tags_partition(self, tiny_graph):
        sizes = tiny_graph.split_sizes()
        assert sizes == {"train": 7, "valid": 1, "test": 2}
        assert sum(sizes.values()) == len(tiny_graph)
        assert set(np.unique(tiny_graph.splits).tolist()) <= {TRAIN, VALID, TEST}

    def test_cross_split_duplicate_rejected(self):
        with pytest.raises(GraphError, match="more than one split"):
            from_labeled([[("a", "r", "b")], [], [("a", "r", "b")]])

    def test_closure_violation_rejected(self):
        with pytest.raises(GraphError, match="absent from train"):
            from_labeled([[("a", "r", "b")], [], [("a", "s", "c")]])

    def test_closure_check_optional(self):
        g = from_labeled([[("a", "r", "b")], [], [("a", "s", "c")]], check_closure=False)
        assert sorted(closure_violations(g)) == ["entity 'c'", "relation 's'"]

    def test_split_spec_validation(self):
        SplitSpec(0.9, 0.05, 0.05)
        with pytest.raises(ValueError):
            SplitSpec(0.9, 0.2, 0.05)
        with pytest.raises(ValueError):
            SplitSpec(1.2, -0.1, -0.1)


class TestRoundTrip:
    def test_decode_encode(self, tiny_graph):
        g = tiny_graph
        for name in g.entities:
            assert g.entities[g.encode_entity(name)] == name
        for name in g.relations:
            assert g.relations[g.encode_relation(name)] == name

    def test_save_and_load(self, tmp_path, tiny_graph):
        save_dataset(tmp_path / "d", tiny_graph)
        g = load_dataset(tmp_path / "d")
        assert g.entities == tiny_graph.entities
        assert g.relations == tiny_graph.relations
        np.testing.assert_array_equal(g.triples, tiny_graph.triples)
        np.testing.assert_array_equal(g.splits, tiny_graph.splits)
        assert dict(g.types) == dict(tiny_graph.types)
        assert g.fingerprint()["entity_vocab_hash"] == tiny_graph.fingerprint()["entity_vocab_hash"]

    def test_missing_train_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)

    def test_vocab_hash_order_sensitive(self):
        assert vocab_hash(["a", "b"]) != vocab_hash(["b", "a"])
        assert vocab_hash(["a", "b"]) == vocab_hash(("a", "b"))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from("xyz"), st.sampled_from("abcdef")),
                    max_size=40))
    def test_dedup_property(self, triples):
        g = from_labeled([triples])
        assert len(g) == len(set(triples))
        assert g.meta["duplicate_count"] == len(triples) - len(set(triples))
        assert {g.decode(x) for x in g.triples.tolist()} == set(triples)
