"""Access policies: Boolean formulas, monotone span programs, r-anonymity.

Concrete syntax::

    expr   := term ("OR" term)*
    term   := factor ("AND" factor)*
    factor := ATTR | "(" expr ")"

``ATTR`` matches ``[A-Za-z0-9_:.-]+``.  Keywords are case-insensitive and AND
binds tighter than OR.  Only monotone formulas are accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Union

__all__ = [
    "Attr",
    "And",
    "Or",
    "PolicyFormula",
    "PolicySyntaxError",
    "MspProgram",
    "SatisfyingAssignment",
    "Roster",
    "parse_policy",
    "format_policy",
    "compile_msp",
    "decode_msp",
    "satisfies",
    "attributes_of",
    "leaf_count",
    "count_satisfying",
    "verify_r_anonymity",
    "parse_roster",
    "load_roster",
]


@dataclass(frozen=True)
class Attr:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("attribute name must be non-empty")


@dataclass(frozen=True)
class And:
    left: "PolicyFormula"
    right: "PolicyFormula"


@dataclass(frozen=True)
class Or:
    left: "PolicyFormula"
    right: "PolicyFormula"


PolicyFormula = Union[Attr, And, Or]


class PolicySyntaxError(ValueError):
    """Policy text does not match the grammar.  ``offset`` is a UTF-8 byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<lp>\()|(?P<rp>\))|(?P<word>[A-Za-z0-9_:.\-]+))")
_KEYWORDS = {"AND", "OR"}
_REJECTED = {"NOT"}


def _tokenize(text: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    end = len(text.rstrip())
    while pos < end:
        m = _TOKEN.match(text, pos)
        if m is None:
            stripped = len(text) - len(text[pos:].lstrip())
            raise PolicySyntaxError(
                f"unexpected character {text[stripped]!r}", len(text[:stripped].encode())
            )
        offset = len(text[: m.start(m.lastgroup)].encode())
        value = m.group(m.lastgroup)
        if m.lastgroup == "word":
            upper = value.upper()
            if upper in _KEYWORDS:
                yield upper, value, offset
            elif upper in _REJECTED:
                raise PolicySyntaxError("negation is not allowed in monotone policies", offset)
            else:
                yield "ATTR", value, offset
        else:
            yield m.lastgroup, value, offset
        pos = m.end()
    yield "EOF", "", len(text.encode())


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str):
        tok = self.tokens[self.i]
        if tok[0] != kind:
            what = "end of input" if tok[0] == "EOF" else repr(tok[1])
            raise PolicySyntaxError(f"expected {kind}, found {what}", tok[2])
        self.i += 1
        return tok

    def expr(self) -> PolicyFormula:
        node = self.term()
        while self.peek()[0] == "OR":
            self.i += 1
            node = Or(node, self.term())
        return node

    def term(self) -> PolicyFormula:
        node = self.factor()
        while self.peek()[0] == "AND":
            self.i += 1
            node = And(node, self.factor())
        return node

    def factor(self) -> PolicyFormula:
        kind, value, offset = self.peek()
        if kind == "ATTR":
            self.i += 1
            return Attr(value)
        if kind == "lp":
            self.i += 1
            node = self.expr()
            self.take("rp")
            return node
        what = "end of input" if kind == "EOF" else repr(value)
        raise PolicySyntaxError(f"expected attribute or '(', found {what}", offset)


def parse_policy(text: str) -> PolicyFormula:
    """Parse policy text into a formula tree.

    >>> parse_policy("A OR B AND C")
    Or(left=Attr(name='A'), right=And(left=Attr(name='B'), right=Attr(name='C')))
    """
    if not text.strip():
        raise PolicySyntaxError("empty policy", 0)
    parser = _Parser(text)
    node = parser.expr()
    parser.take("EOF")
    return node


def format_policy(f: PolicyFormula) -> str:
    """Canonical text with the fewest parentheses that reparse to ``f``."""
    if isinstance(f, Attr):
        return f.name
    if isinstance(f, Or):
        right = format_policy(f.right)
        if isinstance(f.right, Or):
            right = f"({right})"
        return f"{format_policy(f.left)} OR {right}"
    left, right = format_policy(f.left), format_policy(f.right)
    if isinstance(f.left, Or):
        left = f"({left})"
    if not isinstance(f.right, Attr):
        right = f"({right})"
    return f"{left} AND {right}"


def attributes_of(f: PolicyFormula) -> set[str]:
    if isinstance(f, Attr):
        return {f.name}
    return attributes_of(f.left) | attributes_of(f.right)


def leaf_count(f: PolicyFormula) -> int:
    if isinstance(f, Attr):
        return 1
    return leaf_count(f.left) + leaf_count(f.right)


def satisfies(f: PolicyFormula, attrs: Iterable[str]) -> bool:
    """Evaluate ``f`` directly with the attributes in ``attrs`` set to true."""
    attrs = attrs if isinstance(attrs, (set, frozenset)) else set(attrs)
    if isinstance(f, Attr):
        return f.name in attrs
    if isinstance(f, And):
        return satisfies(f.left, attrs) and satisfies(f.right, attrs)
    return satisfies(f.left, attrs) or satisfies(f.right, attrs)


# -- monotone span programs ---------------------------------------------------


@dataclass(frozen=True)
class MspProgram:
    """Share-generating matrix plus one attribute label per row."""

    matrix: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        matrix = tuple(tuple(int(x) for x in row) for row in self.matrix)
        labels = tuple(self.labels)
        if not matrix or not matrix[0]:
            raise ValueError("MSP needs at least one row and one column")
        width = len(matrix[0])
        if any(len(row) != width for row in matrix):
            raise ValueError("MSP matrix is not rectangular")
        if len(labels) != len(matrix):
            raise ValueError("every MSP row needs exactly one label")
        if not all(labels):
            raise ValueError("MSP labels must be non-empty")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return len(self.matrix)

    @property
    def n_cols(self) -> int:
        return len(self.matrix[0])

    def reduce(self, p: int) -> "MspProgram":
        """Same program with every entry reduced into ``[0, p)``."""
        return MspProgram(tuple(tuple(x % p for x in row) for row in self.matrix), self.labels)

    def format(self) -> str:
        width = max(len(str(x)) for row in self.matrix for x in row)
        pad = max(len(label) for label in self.labels)
        return "\n".join(
            f"{i:>3} {label:<{pad}} [" + " ".join(f"{x:>{width}}" for x in row) + "]"
            for i, (label, row) in enumerate(zip(self.labels, self.matrix))
        )


def compile_msp(f: PolicyFormula) -> MspProgram:
    """Lewko-Waters conversion of an AND/OR formula to an MSP with 0/±1 entries.

    OR children inherit the parent vector.  AND gives its left child
    ``parent || 1`` and its right child ``0...0 || -1``, each padded to the
    current column counter, which then grows by one.  Rows come out in
    left-to-right leaf order.
    """
    rows: list[tuple[list[int], str]] = []
    counter = 1

    def visit(node: PolicyFormula, vec: list[int]) -> None:
        nonlocal counter
        if isinstance(node, Attr):
            rows.append((vec, node.name))
        elif isinstance(node, Or):
            visit(node.left, vec)
            visit(node.right, vec)
        else:
            left = vec + [0] * (counter - len(vec)) + [1]
            right = [0] * counter + [-1]
            counter += 1
            visit(node.left, left)
            visit(node.right, right)

    visit(f, [1])
    matrix = tuple(tuple(vec + [0] * (counter - len(vec))) for vec, _ in rows)
    return MspProgram(matrix, tuple(label for _, label in rows))


@dataclass(frozen=True)
class SatisfyingAssignment:
    """Rows ``indices`` and nonzero ``coefficients`` with sum d_i M_i = (1,0,...,0)."""

    coefficients: Mapping[int, int] = field(default_factory=dict)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(sorted(self.coefficients))

    def recombine(self, msp: MspProgram, p: int) -> tuple[int, ...]:
        out = [0] * msp.n_cols
        for i, d in self.coefficients.items():
            for j, x in enumerate(msp.matrix[i]):
                out[j] = (out[j] + d * x) % p
        return tuple(out)


def decode_msp(msp: MspProgram, attrs: Iterable[str], p: int) -> SatisfyingAssignment | None:
    """Find coefficients over Z_p reconstructing the target vector from owned rows.

    Solves ``x^T M' = (1, 0, ..., 0)`` where ``M'`` keeps the rows whose labels
    are in ``attrs``, by Gauss-Jordan elimination with the smallest-index pivot.
    Free variables are set to zero and zero coefficients dropped.  Returns
    ``None`` when the attributes do not satisfy the policy.
    """
    attrs = attrs if isinstance(attrs, (set, frozenset)) else set(attrs)
    owned = [i for i, label in enumerate(msp.labels) if label in attrs]
    if not owned:
        return None
    k, m = len(owned), msp.n_cols
    # augmented system: one equation per MSP column, one unknown per owned row
    system = [[msp.matrix[i][j] % p for i in owned] + [1 if j == 0 else 0] for j in range(m)]

    pivots: list[int] = []
    rank = 0
    for col in range(k):
        pivot = next((r for r in range(rank, m) if system[r][col]), None)
        if pivot is None:
            continue
        system[rank], system[pivot] = system[pivot], system[rank]
        lead = system[rank]
        inv = pow(lead[col], -1, p)
        if inv != 1:
            lead[:] = [(x * inv) % p for x in lead]
        for r in range(m):
            if r != rank and system[r][col]:
                factor = system[r][col]
                row = system[r]
                row[:] = [(a - factor * b) % p for a, b in zip(row, lead)]
        pivots.append(col)
        rank += 1
        if rank == m:
            break

    if any(system[r][k] for r in range(rank, m)):
        return None
    coefficients = {
        owned[col]: system[r][k] for r, col in enumerate(pivots) if system[r][k]
    }
    return SatisfyingAssignment(coefficients)


# -- r-anonymity --------------------------------------------------------------


@dataclass(frozen=True)
class Roster:
    """Known users and their attribute sets; handles are opaque and unique."""

    entries: tuple[tuple[str, frozenset[str]], ...]

    def __post_init__(self):
        entries = tuple((str(h), frozenset(a)) for h, a in self.entries)
        handles = [h for h, _ in entries]
        if len(set(handles)) != len(handles):
            raise ValueError("roster user handles must be unique")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def count_satisfying(f: PolicyFormula, roster: Roster) -> int:
    return sum(1 for _, attrs in roster if satisfies(f, attrs))


def verify_r_anonymity(f: PolicyFormula, roster: Roster, r: int) -> bool:
    """True iff at least ``r`` roster users could satisfy ``f``."""
    if r < 1:
        raise ValueError("r must be a positive integer")
    return count_satisfying(f, roster) >= r


def parse_roster(text: str) -> Roster:
    """Parse ``user_id: attr1,attr2`` lines; blank lines and ``#`` comments skipped."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        handle, sep, rest = line.partition(":")
        if not sep or not handle.strip():
            raise ValueError(f"roster line {lineno}: expected 'user_id: attr1,attr2'")
        attrs = frozenset(a.strip() for a in rest.split(",") if a.strip())
        entries.append((handle.strip(), attrs))
    return Roster(tuple(entries))


def load_roster(path: str | Path) -> Roster:
    return parse_roster(Path(path).read_text(encoding="utf-8"))
