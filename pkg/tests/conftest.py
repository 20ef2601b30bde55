import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from kgeval.graph import from_labeled  # noqa: E402

# acceptance results collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_graph():
    """Six entities, two relations, split across train/valid/test."""
    train = [
        ("a", "likes", "b"),
        ("b", "likes", "c"),
        ("c", "likes", "a"),
        ("a", "knows", "d"),
        ("d", "knows", "e"),
        ("e", "knows", "f"),
        ("f", "likes", "a"),
    ]
    valid = [("b", "knows", "f")]
    test = [("a", "likes", "c"), ("d", "likes", "b")]
    types = {
        "a": {"person"},
        "b": {"person", "author"},
        "c": {"person"},
        "d": {"place"},
        "e": {"place"},
        "f": {"org"},
    }
    return from_labeled([train, valid, test], types=types)
