import hashlib
import itertools
import random

import pytest

from abkauth.pairing import mock_suite_new, production_suite
from abkauth.policy import And, Attr, Or

ACCEPTANCE_LINES: list[str] = []


class ScriptedRng:
    """``random.Random`` stand-in that hands out queued integers first.

    ``randrange`` pops from ``ints`` while any remain; byte requests pop from
    ``blobs`` the same way.  Everything else falls through to a seeded PRNG.
    """

    def __init__(self, ints=(), blobs=(), seed=0):
        self.ints = list(ints)
        self.blobs = list(blobs)
        self._fallback = random.Random(seed)

    def randrange(self, start, stop=None):
        if self.ints:
            value = self.ints.pop(0)
            lo, hi = (0, start) if stop is None else (start, stop)
            assert lo <= value < hi, (value, lo, hi)
            return value
        return self._fallback.randrange(start, stop)

    def randbytes(self, n):
        if self.blobs:
            blob = self.blobs.pop(0)
            assert len(blob) == n
            return blob
        return self._fallback.randbytes(n)


def mock_hash_exponent(attr: str, p: int) -> int:
    return int.from_bytes(hashlib.sha256(attr.encode()).digest(), "big") % p


def all_formulas(n_leaves: int, attrs: str):
    """Every AND/OR tree with exactly ``n_leaves`` leaves labelled from ``attrs``."""
    if n_leaves == 1:
        return [Attr(a) for a in attrs]
    out = []
    for k in range(1, n_leaves):
        for left in all_formulas(k, attrs):
            for right in all_formulas(n_leaves - k, attrs):
                out.append(And(left, right))
                out.append(Or(left, right))
    return out


def random_formula(rng: random.Random, max_leaves: int, attrs: str):
    n = rng.randint(1, max_leaves)

    def build(n):
        if n == 1:
            return Attr(rng.choice(attrs))
        k = rng.randint(1, n - 1)
        op = rng.choice((And, Or))
        return op(build(k), build(n - k))

    return build(n)


def subsets(attrs):
    return [frozenset(c) for k in range(len(attrs) + 1) for c in itertools.combinations(attrs, k)]


@pytest.fixture
def mock():
    return mock_suite_new(1009)


@pytest.fixture(scope="session")
def prod():
    return production_suite()


@pytest.fixture
def scripted():
    return ScriptedRng


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
