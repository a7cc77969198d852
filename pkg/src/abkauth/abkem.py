"""Ciphertext-policy attribute-based key encapsulation (Waters-style KEM).

``key_encap_star`` is the variant used by the authentication protocol: besides
the key and the encapsulation it hands back the secret exponent ``s`` so the
server can later finish a Diffie-Hellman exchange in GT.

All encapsulation randomness is derived from a 32-byte seed, which makes
encapsulation a pure function of ``(params, mpk, msp, seed)``.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass, field
from typing import Iterable

from .pairing import SUITE_MOCK, Group, GroupElement, PairingSuite
from .policy import MspProgram, decode_msp

__all__ = [
    "SystemParams",
    "MasterPublicKey",
    "MasterSecretKey",
    "AttributeSecretKey",
    "Encapsulation",
    "EncapResult",
    "EncapRandomness",
    "setup",
    "keygen",
    "derive_randomness",
    "encapsulate_with",
    "key_encap_star",
    "key_decap",
    "check_secret_key",
]

SEED_LENGTH = 32


@dataclass(frozen=True)
class SystemParams:
    suite: PairingSuite
    security: int

    def __post_init__(self):
        if self.security != self.suite.security_level:
            raise ValueError(
                f"security level {self.security} does not match suite {self.suite.name}"
            )
        if self.suite.gt.is_identity:
            raise ValueError("degenerate pairing")

    @property
    def p(self) -> int:
        return self.suite.p

    def hash(self, attr: str) -> GroupElement:
        return self.suite.hash_to_g1(attr)


@dataclass(frozen=True)
class MasterPublicKey:
    mpk1: GroupElement  # g1^b
    mpk2: GroupElement  # e(g1, g2)^a


@dataclass(frozen=True)
class MasterSecretKey:
    msk: GroupElement  # g1^a
    # (a, b) kept only on the mock suite so tests can check the algebra
    trapdoor: tuple[int, int] | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class AttributeSecretKey:
    """Decryption key for an attribute set; ``components[i]`` belongs to ``attributes[i]``."""

    attributes: tuple[str, ...]
    x1: GroupElement
    x2: GroupElement
    components: tuple[GroupElement, ...]

    def __post_init__(self):
        if len(self.attributes) != len(self.components):
            raise ValueError("one key component per attribute is required")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError("duplicate attributes in secret key")

    def component(self, attr: str) -> GroupElement:
        return self.components[self.attributes.index(attr)]

    def __repr__(self):
        return f"AttributeSecretKey(attributes={self.attributes!r})"


@dataclass(frozen=True)
class Encapsulation:
    z: GroupElement
    rows: tuple[tuple[GroupElement, GroupElement], ...]

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class EncapResult:
    key: GroupElement
    encapsulation: Encapsulation
    s: int = field(repr=False)


@dataclass(frozen=True)
class EncapRandomness:
    s: int
    v: tuple[int, ...]  # v_2 .. v_m
    r: tuple[int, ...]  # r_1 .. r_n

    def shares(self, msp: MspProgram, p: int) -> list[int]:
        """``M . (s, v_2, ..., v_m) mod p``, one share per MSP row."""
        vec = (self.s, *self.v)
        return [sum(a * b for a, b in zip(row, vec)) % p for row in msp.matrix]


def setup(suite: PairingSuite, rng=None, security: int | None = None):
    """Draw master scalars ``a, b`` and return ``(params, mpk, msk)``."""
    rng = rng or secrets.SystemRandom()
    params = SystemParams(suite, suite.security_level if security is None else security)
    a = suite.random_scalar(rng)
    b = suite.random_scalar(rng)
    mpk = MasterPublicKey(mpk1=suite.g1 ** b, mpk2=suite.gt ** a)
    trapdoor = (a, b) if suite.suite_id == SUITE_MOCK else None
    msk = MasterSecretKey(msk=suite.g1 ** a, trapdoor=trapdoor)
    return params, mpk, msk


def keygen(params: SystemParams, mpk: MasterPublicKey, msk: MasterSecretKey,
           attrs: Iterable[str], rng=None) -> AttributeSecretKey:
    attributes = tuple(sorted(set(attrs)))
    if not attributes:
        raise ValueError("attribute set must be non-empty")
    if not all(attributes):
        raise ValueError("attribute names must be non-empty")
    rng = rng or secrets.SystemRandom()
    suite = params.suite
    r = suite.random_scalar(rng)
    return AttributeSecretKey(
        attributes=attributes,
        x1=msk.msk * mpk.mpk1 ** r,
        x2=suite.g2 ** r,
        components=tuple(params.hash(attr) ** r for attr in attributes),
    )


def check_secret_key(params: SystemParams, mpk: MasterPublicKey, sk: AttributeSecretKey) -> bool:
    """Pairing check ``e(x1, g2) == mpk2 * e(mpk1, x2)``."""
    suite = params.suite
    return suite.pair(sk.x1, suite.g2) == mpk.mpk2 * suite.pair(mpk.mpk1, sk.x2)


def _seeded_scalar(seed: bytes, label: str, p: int, *, nonzero: bool = False) -> int:
    nbits = p.bit_length()
    nbytes = (nbits + 7) // 8
    mask = (1 << nbits) - 1
    counter = 0
    while True:
        block = hmac.new(seed, label.encode() + counter.to_bytes(4, "big"), hashlib.sha512).digest()
        k = int.from_bytes(block[:nbytes], "big") & mask
        if k < p and (k or not nonzero):
            return k
        counter += 1


def derive_randomness(seed: bytes, msp: MspProgram, p: int) -> EncapRandomness:
    """Expand ``seed`` into ``s``, ``v_2..v_m`` and ``r_1..r_n`` by rejection sampling."""
    return EncapRandomness(
        s=_seeded_scalar(seed, "s", p, nonzero=True),
        v=tuple(_seeded_scalar(seed, f"v{j}", p) for j in range(2, msp.n_cols + 1)),
        r=tuple(_seeded_scalar(seed, f"r{i}", p) for i in range(1, msp.n_rows + 1)),
    )


def encapsulate_with(params: SystemParams, mpk: MasterPublicKey, msp: MspProgram,
                     rnd: EncapRandomness) -> EncapResult:
    """Encapsulate with explicit randomness.  Callers normally want :func:`key_encap_star`."""
    if len(rnd.v) != msp.n_cols - 1 or len(rnd.r) != msp.n_rows:
        raise ValueError("randomness does not match MSP dimensions")
    suite = params.suite
    p = suite.p
    mu = rnd.shares(msp, p)
    rows = tuple(
        (mpk.mpk1 ** mu_i * params.hash(label) ** (p - r_i % p), suite.g2 ** r_i)
        for mu_i, r_i, label in zip(mu, rnd.r, msp.labels)
    )
    return EncapResult(
        key=mpk.mpk2 ** rnd.s,
        encapsulation=Encapsulation(z=suite.g2 ** rnd.s, rows=rows),
        s=rnd.s,
    )


def key_encap_star(params: SystemParams, mpk: MasterPublicKey, msp: MspProgram,
                   seed: bytes) -> EncapResult:
    """Encapsulate a fresh GT key under ``msp`` and also return its exponent ``s``."""
    return encapsulate_with(params, mpk, msp, derive_randomness(seed, msp, params.p))


def key_decap(params: SystemParams, msp: MspProgram, enc: Encapsulation,
              attrs: Iterable[str], sk: AttributeSecretKey) -> GroupElement | None:
    """Recover the encapsulated key, or ``None`` if ``attrs`` do not satisfy ``msp``.

    Raises ``ValueError`` when the encapsulation shape does not match the MSP or
    a satisfying attribute has no component in ``sk``.
    """
    if len(enc.rows) != msp.n_rows:
        raise ValueError(f"encapsulation has {len(enc.rows)} rows, MSP has {msp.n_rows}")
    suite = params.suite
    assignment = decode_msp(msp, attrs, suite.p)
    if assignment is None:
        return None
    coeffs = assignment.coefficients
    for i in coeffs:
        if msp.labels[i] not in sk.attributes:
            raise ValueError(f"secret key has no component for {msp.labels[i]!r}")

    w = suite.identity(Group.G1)
    denominator = suite.identity(Group.GT)
    for i, d in coeffs.items():
        c1, c2 = enc.rows[i]
        w = w * c1 ** d
        denominator = denominator * suite.pair(sk.component(msp.labels[i]), c2 ** d)
    denominator = denominator * suite.pair(w, sk.x2)
    return suite.pair(sk.x1, enc.z) / denominator
