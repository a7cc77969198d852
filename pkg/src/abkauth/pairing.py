"""Bilinear group backends.

Two suites share one interface:

* :class:`MockSuite` stores every element as its discrete logarithm with
  respect to the group generator.  Pairing multiplies exponents mod ``p``.
  It is INSECURE by construction and exists so that every scheme equation can
  be checked with plain integer arithmetic.
* :class:`ProductionSuite` binds to BLS12-381 (Type-3, ~128-bit security)
  through the RELIC library via ``petrelic``.

Elements are immutable.  Group operations use multiplicative notation::

    >>> suite = mock_suite_new(1009)
    >>> suite.pair(suite.g1 ** 5, suite.g2 ** 7) == suite.gt ** 35
    True
"""

from __future__ import annotations

import abc
import enum
import functools
import hashlib
import hmac
from functools import cached_property

from petrelic.bn import Bn

__all__ = [
    "Group",
    "GroupElement",
    "PairingSuite",
    "MockSuite",
    "ProductionSuite",
    "EncodingError",
    "SUITE_MOCK",
    "SUITE_PRODUCTION",
    "mock_suite_new",
    "production_suite",
    "suite_from_id",
]

SUITE_MOCK = 0x00
SUITE_PRODUCTION = 0x01


class Group(enum.IntEnum):
    G1 = 1
    G2 = 2
    GT = 3


class EncodingError(ValueError):
    """Raised when bytes are not the canonical encoding of a group element."""


class GroupElement(abc.ABC):
    """An element of one of the three groups of a :class:`PairingSuite`."""

    __slots__ = ("suite", "group")

    suite: "PairingSuite"
    group: Group

    def _check_peer(self, other: object) -> "GroupElement":
        if not isinstance(other, GroupElement):
            raise TypeError(f"expected GroupElement, got {type(other).__name__}")
        if other.suite is not self.suite or other.group is not self.group:
            raise TypeError(
                f"group mismatch: {self.group.name}@{self.suite.name} vs "
                f"{other.group.name}@{other.suite.name}"
            )
        return other

    @abc.abstractmethod
    def __mul__(self, other: "GroupElement") -> "GroupElement": ...

    @abc.abstractmethod
    def __pow__(self, k: int) -> "GroupElement": ...

    @abc.abstractmethod
    def inverse(self) -> "GroupElement": ...

    @abc.abstractmethod
    def __bytes__(self) -> bytes: ...

    @property
    @abc.abstractmethod
    def is_identity(self) -> bool: ...

    def __truediv__(self, other: "GroupElement") -> "GroupElement":
        return self * self._check_peer(other).inverse()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroupElement):
            return NotImplemented
        return (
            other.suite is self.suite
            and other.group is self.group
            and hmac.compare_digest(bytes(self), bytes(other))
        )

    def __hash__(self) -> int:
        return hash((self.suite.suite_id, self.group, bytes(self)))

    def __repr__(self) -> str:
        return f"<{self.group.name} {bytes(self)[:8].hex()}…>"


class PairingSuite(abc.ABC):
    """Asymmetric pairing ``e: G1 x G2 -> GT`` over groups of prime order ``p``."""

    suite_id: int
    name: str
    p: int
    security_level: int

    @property
    @abc.abstractmethod
    def g1(self) -> GroupElement: ...

    @property
    @abc.abstractmethod
    def g2(self) -> GroupElement: ...

    @abc.abstractmethod
    def identity(self, group: Group) -> GroupElement: ...

    @abc.abstractmethod
    def pair(self, a: GroupElement, b: GroupElement) -> GroupElement: ...

    @abc.abstractmethod
    def hash_to_g1(self, attr: str) -> GroupElement: ...

    @abc.abstractmethod
    def element_length(self, group: Group) -> int: ...

    @abc.abstractmethod
    def decode(self, group: Group, data: bytes) -> GroupElement: ...

    @cached_property
    def gt(self) -> GroupElement:
        return self.pair(self.g1, self.g2)

    @cached_property
    def scalar_length(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def exp(self, base: GroupElement, k: int) -> GroupElement:
        return base ** k

    def encode(self, element: GroupElement) -> bytes:
        if element.suite is not self:
            raise TypeError("element belongs to a different suite")
        return bytes(element)

    def random_scalar(self, rng, *, nonzero: bool = True) -> int:
        """Uniform scalar from ``rng`` (a :class:`random.Random`-like object)."""
        return rng.randrange(1 if nonzero else 0, self.p)

    def encode_scalar(self, k: int) -> bytes:
        return (k % self.p).to_bytes(self.scalar_length, "big")

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_length:
            raise EncodingError("scalar length mismatch")
        k = int.from_bytes(data, "big")
        if k >= self.p:
            raise EncodingError("scalar not reduced mod p")
        return k

    def descriptor(self) -> dict:
        return {
            "suite_id": self.suite_id,
            "name": self.name,
            "p": self.p,
            "security_level": self.security_level,
            "lengths": {g.name: self.element_length(g) for g in Group},
        }

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


# -- mock suite ---------------------------------------------------------------


class MockElement(GroupElement):
    __slots__ = ("exponent",)

    def __init__(self, suite: "MockSuite", group: Group, exponent: int):
        self.suite = suite
        self.group = group
        self.exponent = exponent % suite.p

    def __mul__(self, other):
        other = self._check_peer(other)
        return MockElement(self.suite, self.group, self.exponent + other.exponent)

    def __pow__(self, k):
        return MockElement(self.suite, self.group, self.exponent * int(k))

    def inverse(self):
        return MockElement(self.suite, self.group, -self.exponent)

    def __bytes__(self):
        return self.exponent.to_bytes(8, "big")

    @property
    def is_identity(self):
        return self.exponent == 0

    def __repr__(self):
        return f"<mock {self.group.name}^{self.exponent}>"


class MockSuite(PairingSuite):
    """Exponent-trapdoor suite.  Never use for anything but tests and demos."""

    suite_id = SUITE_MOCK
    security_level = 0

    def __init__(self, p: int):
        if not 2 <= p < 2**61 or not Bn.from_num(p).is_prime():
            raise ValueError(f"mock suite modulus must be a prime below 2^61, got {p}")
        self.p = p
        self.name = f"mock-{p}"

    @cached_property
    def g1(self):
        return MockElement(self, Group.G1, 1)

    @cached_property
    def g2(self):
        return MockElement(self, Group.G2, 1)

    def identity(self, group):
        return MockElement(self, Group(group), 0)

    def pair(self, a, b):
        if not isinstance(a, MockElement) or not isinstance(b, MockElement):
            raise TypeError("pairing operands must be mock elements")
        if a.suite is not self or b.suite is not self:
            raise TypeError("pairing operands belong to a different suite")
        if a.group is not Group.G1 or b.group is not Group.G2:
            raise TypeError(f"pairing expects (G1, G2), got ({a.group.name}, {b.group.name})")
        return MockElement(self, Group.GT, a.exponent * b.exponent)

    def hash_to_g1(self, attr):
        digest = hashlib.sha256(attr.encode("utf-8")).digest()
        return MockElement(self, Group.G1, int.from_bytes(digest, "big"))

    def element_length(self, group):
        return 8

    def decode(self, group, data):
        group = Group(group)
        if len(data) != 8:
            raise EncodingError(f"mock {group.name} element must be 8 bytes")
        k = int.from_bytes(data, "big")
        if k >= self.p:
            raise EncodingError("mock exponent not reduced mod p")
        return MockElement(self, group, k)

    def element(self, group: Group, exponent: int) -> MockElement:
        """Build ``generator(group) ** exponent`` directly from its logarithm."""
        return MockElement(self, Group(group), exponent)


@functools.lru_cache(maxsize=None)
def mock_suite_new(p: int) -> MockSuite:
    """Return the (shared) mock suite of order ``p``."""
    return MockSuite(p)


# -- production suite ----------------------------------------------------------


class ProductionElement(GroupElement):
    __slots__ = ("raw", "_enc")

    def __init__(self, suite: "ProductionSuite", group: Group, raw):
        self.suite = suite
        self.group = group
        self.raw = raw
        self._enc = None

    def __mul__(self, other):
        other = self._check_peer(other)
        return ProductionElement(self.suite, self.group, self.raw * other.raw)

    def __pow__(self, k):
        return ProductionElement(self.suite, self.group, self.raw ** Bn.from_num(int(k) % self.suite.p))

    def inverse(self):
        return ProductionElement(self.suite, self.group, self.raw.inverse())

    def __bytes__(self):
        if self._enc is None:
            length = self.suite.element_length(self.group)
            if self.group is not Group.GT and self.raw.is_neutral_element():
                self._enc = bytes(length)
            else:
                self._enc = self.raw.to_binary()
                assert len(self._enc) == length
        return self._enc

    @property
    def is_identity(self):
        return self.raw.is_neutral_element()


class ProductionSuite(PairingSuite):
    """BLS12-381 through RELIC.

    Compressed point encodings: G1 49 bytes, G2 97 bytes, GT 384 bytes.  The
    point at infinity in G1/G2 is encoded as all-zero bytes of the same length.
    """

    suite_id = SUITE_PRODUCTION
    name = "bls12-381"
    security_level = 128

    _LENGTHS = {Group.G1: 49, Group.G2: 97, Group.GT: 384}

    def __init__(self):
        from petrelic.multiplicative import pairing

        self._lib = pairing
        self._groups = {Group.G1: pairing.G1, Group.G2: pairing.G2, Group.GT: pairing.GT}
        self._classes = {
            Group.G1: pairing.G1Element,
            Group.G2: pairing.G2Element,
            Group.GT: pairing.GTElement,
        }
        self.p = int(pairing.G1.order())

    @cached_property
    def g1(self):
        return ProductionElement(self, Group.G1, self._lib.G1.generator())

    @cached_property
    def g2(self):
        return ProductionElement(self, Group.G2, self._lib.G2.generator())

    def identity(self, group):
        group = Group(group)
        return ProductionElement(self, group, self._groups[group].neutral_element())

    def pair(self, a, b):
        if not isinstance(a, ProductionElement) or not isinstance(b, ProductionElement):
            raise TypeError("pairing operands must be production elements")
        if a.suite is not self or b.suite is not self:
            raise TypeError("pairing operands belong to a different suite")
        if a.group is not Group.G1 or b.group is not Group.G2:
            raise TypeError(f"pairing expects (G1, G2), got ({a.group.name}, {b.group.name})")
        return ProductionElement(self, Group.GT, a.raw.pair(b.raw))

    def hash_to_g1(self, attr):
        return ProductionElement(self, Group.G1, self._lib.G1.hash_to_point(attr.encode("utf-8")))

    def element_length(self, group):
        return self._LENGTHS[Group(group)]

    def decode(self, group, data):
        group = Group(group)
        data = bytes(data)
        if len(data) != self._LENGTHS[group]:
            raise EncodingError(f"{group.name} element must be {self._LENGTHS[group]} bytes")
        if group is not Group.GT and not any(data):
            return self.identity(group)
        try:
            raw = self._classes[group].from_binary(data)
        except Exception as exc:  # RELIC raises assorted errors on garbage
            raise EncodingError(f"invalid {group.name} encoding") from exc
        if not raw.is_valid():
            raise EncodingError(f"{group.name} element not in prime-order subgroup")
        element = ProductionElement(self, group, raw)
        if bytes(element) != data:
            raise EncodingError(f"non-canonical {group.name} encoding")
        return element


_PRODUCTION: ProductionSuite | None = None


def production_suite() -> ProductionSuite:
    global _PRODUCTION
    if _PRODUCTION is None:
        _PRODUCTION = ProductionSuite()
    return _PRODUCTION


def suite_from_id(suite_id: int, p: int | None = None) -> PairingSuite:
    if suite_id == SUITE_PRODUCTION:
        suite = production_suite()
        if p is not None and p != suite.p:
            raise EncodingError("group order does not match the production suite")
        return suite
    if suite_id == SUITE_MOCK:
        if p is None:
            raise ValueError("mock suite needs its modulus")
        return mock_suite_new(p)
    raise EncodingError(f"unknown suite id 0x{suite_id:02x}")
