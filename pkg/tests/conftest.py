"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR))

MOCK_SCORER = TESTS_DIR / "mock_scorer.py"


def mock_scorer_cmd(*extra: str) -> str:
    """Command line (for --scorer cmd:... specs) running the mock scorer."""
    parts = [sys.executable, str(MOCK_SCORER), *extra]
    return " ".join(parts)


class ScriptedRandom:
    """random.Random stand-in answering from fixed scripts.

    randrange pops from one queue, random() from another, so tests can force
    specific GA operations while asserting the documented draw order.
    """

    def __init__(self, randrange_values=(), random_values=()):
        self.randrange_values = list(randrange_values)
        self.random_values = list(random_values)

    def randrange(self, *bounds):
        if not self.randrange_values:
            raise AssertionError("scripted randrange exhausted")
        value = self.randrange_values.pop(0)
        if len(bounds) == 1:
            low, high = 0, bounds[0]
        else:
            low, high = bounds[0], bounds[1]
        assert low <= value < high, f"scripted value {value} outside [{low}, {high})"
        return value

    def random(self):
        if not self.random_values:
            raise AssertionError("scripted random exhausted")
        return self.random_values.pop(0)


@pytest.fixture
def scripted_rng():
    return ScriptedRandom
